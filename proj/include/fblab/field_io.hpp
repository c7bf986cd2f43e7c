#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <stdexcept>
#include <string>
#include <vector>

#include "fblab/grid.hpp"

namespace fblab {

// Binary field dump, little-endian:
//   magic "FBLB", version u32, dim u32, resolution u32 x n,
//   origin f64 x n, extent f64 x n, then one f64 per node in
//   lexicographic order (last axis fastest).
inline constexpr std::uint32_t kFieldFormatVersion = 1;

namespace detail {
template <class T>
void put(std::ostream& os, T v) {
  static_assert(std::endian::native == std::endian::little,
                "field dump assumes a little-endian host");
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("field dump: truncated stream");
  return v;
}
}  // namespace detail

inline void write_field(std::ostream& os, const ScalarField& u) {
  const Grid& g = u.grid;
  os.write("FBLB", 4);
  detail::put<std::uint32_t>(os, kFieldFormatVersion);
  detail::put<std::uint32_t>(os, (std::uint32_t)g.dim());
  for (auto r : g.resolution()) detail::put<std::uint32_t>(os, (std::uint32_t)r);
  for (double v : g.origin()) detail::put<double>(os, v);
  for (double v : g.extent()) detail::put<double>(os, v);
  for (double v : u.values) detail::put<double>(os, v);
}

inline void write_field(const std::string& path, const ScalarField& u) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_field(os, u);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline ScalarField read_field(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "FBLB", 4) != 0)
    throw std::runtime_error("field dump: bad magic");
  auto version = detail::get<std::uint32_t>(is);
  if (version != kFieldFormatVersion)
    throw std::runtime_error("field dump: unsupported version " + std::to_string(version));
  int dim = (int)detail::get<std::uint32_t>(is);
  if (dim < 1 || dim > 3) throw std::runtime_error("field dump: bad dim");
  std::vector<std::size_t> res(dim);
  for (auto& r : res) r = detail::get<std::uint32_t>(is);
  std::vector<double> origin(dim), extent(dim);
  for (auto& v : origin) v = detail::get<double>(is);
  for (auto& v : extent) v = detail::get<double>(is);
  ScalarField u(Grid(dim, origin, extent, res));
  for (auto& v : u.values) v = detail::get<double>(is);
  return u;
}

inline ScalarField read_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  return read_field(is);
}

inline void write_field_csv(std::ostream& os, const ScalarField& u) {
  int n = u.grid.dim();
  for (int d = 0; d < n; ++d) os << "x" << (d + 1) << ",";
  os << "value\n";
  os << std::setprecision(17);
  for_each_node(u.grid, [&](std::size_t flat, auto, std::span<const double> x) {
    for (int d = 0; d < n; ++d) os << x[d] << ",";
    os << u.values[flat] << "\n";
  });
}

inline void write_field_csv(const std::string& path, const ScalarField& u) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_field_csv(os, u);
}

}  // namespace fblab
