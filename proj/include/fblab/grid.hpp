#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fblab {

/// Uniform tensor-product grid on a box, n in {1,2,3}.
/// Nodes are enumerated lexicographically with the last axis fastest, and
/// node coordinates are always derived through node_coord so they are
/// bit-identical wherever they are recomputed.
class Grid {
 public:
  Grid() = default;
  Grid(int dim, std::vector<double> origin, std::vector<double> extent,
       std::vector<std::size_t> resolution)
      : dim_(dim), origin_(std::move(origin)), extent_(std::move(extent)),
        res_(std::move(resolution)) {
    if (dim_ < 1 || dim_ > 3) throw std::invalid_argument("grid: dim must be 1, 2, or 3");
    if ((int)origin_.size() != dim_ || (int)extent_.size() != dim_ ||
        (int)res_.size() != dim_)
      throw std::invalid_argument("grid: vector arities must equal dim");
    for (int d = 0; d < dim_; ++d) {
      if (!(extent_[d] > 0)) throw std::invalid_argument("grid: extent must be positive");
      if (res_[d] < 3) throw std::invalid_argument("grid: resolution must be >= 3 per axis");
    }
  }

  int dim() const { return dim_; }
  const std::vector<double>& origin() const { return origin_; }
  const std::vector<double>& extent() const { return extent_; }
  const std::vector<std::size_t>& resolution() const { return res_; }

  double spacing(int d) const { return extent_[d] / (double)(res_[d] - 1); }
  double upper(int d) const { return origin_[d] + extent_[d]; }

  std::size_t num_nodes() const {
    std::size_t n = 1;
    for (auto r : res_) n *= r;
    return n;
  }

  double node_coord(int d, std::size_t i) const {
    return origin_[d] + extent_[d] * ((double)i / (double)(res_[d] - 1));
  }

  std::vector<double> node(std::span<const std::size_t> idx) const {
    std::vector<double> x(dim_);
    for (int d = 0; d < dim_; ++d) x[d] = node_coord(d, idx[d]);
    return x;
  }

  std::size_t flat_index(std::span<const std::size_t> idx) const {
    std::size_t f = 0;
    for (int d = 0; d < dim_; ++d) f = f * res_[d] + idx[d];
    return f;
  }

  std::vector<std::size_t> multi_index(std::size_t flat) const {
    std::vector<std::size_t> idx(dim_);
    for (int d = dim_ - 1; d >= 0; --d) {
      idx[d] = flat % res_[d];
      flat /= res_[d];
    }
    return idx;
  }

  bool contains(std::span<const double> x, double slack = 0.0) const {
    for (int d = 0; d < dim_; ++d)
      if (x[d] < origin_[d] - slack || x[d] > upper(d) + slack) return false;
    return true;
  }

  bool operator==(const Grid& o) const {
    return dim_ == o.dim_ && origin_ == o.origin_ && extent_ == o.extent_ &&
           res_ == o.res_;
  }

 private:
  int dim_ = 0;
  std::vector<double> origin_, extent_;
  std::vector<std::size_t> res_;
};

inline Grid make_grid(int dim, std::vector<double> origin, std::vector<double> extent,
                      std::vector<std::size_t> resolution) {
  return Grid(dim, std::move(origin), std::move(extent), std::move(resolution));
}

struct ScalarField {
  Grid grid;
  std::vector<double> values;

  ScalarField() = default;
  explicit ScalarField(Grid g) : grid(std::move(g)), values(grid.num_nodes(), 0.0) {}

  double& at(std::span<const std::size_t> idx) { return values[grid.flat_index(idx)]; }
  double at(std::span<const std::size_t> idx) const { return values[grid.flat_index(idx)]; }
};

/// Visit every node as (flat, multi-index, coordinates).
template <class F>
void for_each_node(const Grid& g, F&& f) {
  std::vector<std::size_t> idx(g.dim(), 0);
  std::vector<double> x(g.dim());
  std::size_t total = g.num_nodes();
  for (std::size_t flat = 0; flat < total; ++flat) {
    for (int d = 0; d < g.dim(); ++d) x[d] = g.node_coord(d, idx[d]);
    f(flat, std::span<const std::size_t>(idx), std::span<const double>(x));
    for (int d = g.dim() - 1; d >= 0; --d) {
      if (++idx[d] < g.resolution()[d]) break;
      idx[d] = 0;
    }
  }
}

template <class F>
ScalarField sample_field(const Grid& g, F&& f) {
  ScalarField u(g);
  for_each_node(g, [&](std::size_t flat, auto, std::span<const double> x) {
    u.values[flat] = f(x);
  });
  return u;
}

/// Multilinear interpolation. Exact at nodes and on multilinear functions,
/// monotone in the field values. Out-of-box queries report the offending
/// coordinate; queries within a roundoff-scale slack of the boundary clamp.
inline double interpolate(const ScalarField& u, std::span<const double> x) {
  const Grid& g = u.grid;
  if ((int)x.size() != g.dim()) throw std::invalid_argument("interpolate: point arity mismatch");

  std::size_t cell[3];
  double t[3];
  for (int d = 0; d < g.dim(); ++d) {
    double slack = 1e-9 * g.spacing(d);
    if (x[d] < g.origin()[d] - slack || x[d] > g.upper(d) + slack) {
      std::ostringstream os;
      os << "interpolate: coordinate " << (d + 1) << " = " << x[d]
         << " outside [" << g.origin()[d] << ", " << g.upper(d) << "]";
      throw std::domain_error(os.str());
    }
    double s = (x[d] - g.origin()[d]) / g.spacing(d);
    double fl = std::floor(s);
    std::size_t i = fl < 0 ? 0 : (std::size_t)fl;
    if (i > g.resolution()[d] - 2) i = g.resolution()[d] - 2;
    cell[d] = i;
    t[d] = std::min(1.0, std::max(0.0, s - (double)i));
  }

  double acc = 0;
  int corners = 1 << g.dim();
  std::size_t idx[3];
  for (int c = 0; c < corners; ++c) {
    double w = 1;
    for (int d = 0; d < g.dim(); ++d) {
      bool hi = (c >> d) & 1;
      idx[d] = cell[d] + (hi ? 1 : 0);
      w *= hi ? t[d] : 1.0 - t[d];
    }
    if (w != 0) acc += w * u.at(std::span<const std::size_t>(idx, g.dim()));
  }
  return acc;
}

}  // namespace fblab
