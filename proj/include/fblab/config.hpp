#pragma once

// Experiment configuration: a strict, typed schema over JSON/TOML documents.
// Parsing materializes every default, rejects unknown keys, and reports
// violations with the dotted path of the offending entry. The canonical
// serialization (config_to_json) is idempotent: parsing a canonical dump and
// re-serializing reproduces it byte for byte, which is what makes run
// summaries reproducible.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "expr.hpp"
#include "solver.hpp"
#include "toml_lite.hpp"

namespace fblab {

inline constexpr int kConfigSchemaVersion = 1;

struct ConfigError : std::invalid_argument {
  std::string path;
  ConfigError(std::string p, const std::string& what)
      : std::invalid_argument("config: " + p + ": " + what), path(std::move(p)) {}
};

// ---------------------------------------------------------------------------
// Schema structs. Defaults here are the documented defaults of the tool.

struct GridSpec {
  int dim = 2;
  std::vector<double> origin;
  std::vector<double> extent;
  std::vector<std::size_t> resolution;

  Grid build() const { return make_grid(dim, origin, extent, resolution); }
};

struct BoundarySpec {
  std::string kind = "expr";            // "expr" | "table"
  std::string expr;                     // kind == expr
  std::vector<std::vector<double>> points;  // kind == table
  std::vector<double> values;
  double snap = 0.75;  // table rows match boundary nodes within snap * h
};

struct DiskSpec {
  std::vector<std::vector<double>> centers;
  std::vector<double> radii;
};

struct HeleShawSpec {
  std::vector<double> scales{0.04, 0.02, 0.01};  // box-counting scales for the
                                                 // singular-time cloud
};

struct OracleSpec {
  std::string kind = "radial";
  double contact_radius = 0;
  std::vector<double> center;  // defaults to the origin
  double radius_factor = 2.0;  // pass when FB radius error <= factor * h
};

struct AnalysisSpec {
  std::vector<std::vector<double>> points;
  double t = 0;
  std::string from_field;  // path to a field dump; replaces grid + boundary
  double r_fit = 0;
  double r_min = 0;
  double kernel_snap = 0.02;
  double noise_floor = 8.0;
  double theta = 0.9;
  int order = 24;
  int tail = 8;
  double stratum_tol = 0.05;
  double anomalous_gap = 0.1;

  FitOptions fit_options() const {
    FitOptions opt;
    opt.r_fit = r_fit;
    opt.r_min = r_min;
    opt.kernel_snap = kernel_snap;
    opt.noise_floor = noise_floor;
    opt.theta = theta;
    opt.order = order;
    opt.tail = static_cast<std::size_t>(tail);
    return opt;
  }
  StratumThresholds thresholds() const {
    StratumThresholds th;
    th.tol = stratum_tol;
    th.anomalous_gap = anomalous_gap;
    return th;
  }
};

struct SignoriniSpec {
  std::vector<double> lambdas{1.5, 2.0, 3.0, 3.5, 4.0, 5.0};
  std::vector<int> dims{2, 3};
  double tol = 1e-8;
  std::vector<double> radii{0.2, 0.35, 0.5, 0.65, 0.8, 0.95};
  int quad_order = 32;
  int n_random = 3;  // seeded random PSD matrices for the q_A checks
};

struct CloudSpec {
  std::string kind = "points";  // "points" | "cantor" | "segment"
  std::vector<std::vector<double>> points;
  int depth = 6;  // cantor
  int n = 101;    // segment
};

struct DimensionSpec {
  CloudSpec cloud;
  double beta = 1.0;
  double delta = std::numeric_limits<double>::infinity();
  std::vector<double> scales{0.1, 0.05, 0.025, 0.0125, 0.00625};
  double h_dedup = 0;
  bool coarea = false;  // treat the cloud as space-time and run the
                        // projection check below
  double s = 1.0;
  double coarea_beta = 1.0;
  double C_ref = std::numeric_limits<double>::infinity();
  double coarea_tol = 0.1;
};

struct PipelineSpec {
  double b = 0.7;
  double c = 0.008;
  double bracket_lo = -0.03;
  double bracket_hi = 0.0;
  int bisections = 25;
  double r_fit = 0.22;
  std::vector<double> ts{0.0, 0.001, 0.003, 0.01, 0.03};
  std::vector<double> radii{0.08, 0.12, 0.18, 0.27, 0.4};
  double s_min = 1.0;         // cleaning exponent must reach this
  double residual_max = 0.5;  // tolerated log-log fit residual
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::string kind;
  std::uint64_t seed = 0;

  std::optional<GridSpec> grid;
  std::optional<BoundarySpec> boundary;
  std::optional<DiskSpec> K;
  SolverParams solver;
  std::vector<double> t_values;
  std::optional<OracleSpec> oracle;

  HeleShawSpec heleshaw;
  AnalysisSpec analysis;
  SignoriniSpec signorini;
  DimensionSpec dimension;
  PipelineSpec pipeline;
};

// ---------------------------------------------------------------------------
// Parsing helpers: every accessor reports the dotted path on failure.

namespace config_detail {

using nlohmann::json;

inline void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected a table");
}

inline void check_keys(const json& j, const std::string& path,
                       std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(path.empty() ? it.key() : path + "." + it.key(),
                               "unknown key");
  }
}

inline std::string sub(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline std::string get_string(const json& j, const std::string& path, const char* key,
                              std::optional<std::string> fallback = std::nullopt) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(sub(path, key), "missing required string");
  }
  const json& v = j.at(key);
  if (!v.is_string()) throw ConfigError(sub(path, key), "expected a string");
  return v.get<std::string>();
}

inline bool get_bool(const json& j, const std::string& path, const char* key,
                     bool fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_boolean()) throw ConfigError(sub(path, key), "expected true or false");
  return v.get<bool>();
}

inline long long get_int(const json& j, const std::string& path, const char* key,
                         std::optional<long long> fallback, long long lo, long long hi) {
  long long v;
  if (!j.contains(key)) {
    if (!fallback) throw ConfigError(sub(path, key), "missing required integer");
    v = *fallback;
  } else {
    const json& jv = j.at(key);
    if (!jv.is_number_integer() && !jv.is_number_unsigned())
      throw ConfigError(sub(path, key), "expected an integer");
    v = jv.get<long long>();
  }
  if (v < lo || v > hi)
    throw ConfigError(sub(path, key), "must lie in [" + std::to_string(lo) + ", " +
                                          std::to_string(hi) + "]");
  return v;
}

// Accepts integers, floats, and the strings "inf" / "-inf" (TOML inf maps to
// a non-finite double directly).
inline double number_of(const json& v, const std::string& path) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw ConfigError(path, "expected a number");
}

inline double get_double(const json& j, const std::string& path, const char* key,
                         std::optional<double> fallback, bool allow_inf = false) {
  double v;
  if (!j.contains(key)) {
    if (!fallback) throw ConfigError(sub(path, key), "missing required number");
    v = *fallback;
  } else {
    v = number_of(j.at(key), sub(path, key));
  }
  if (!allow_inf && !std::isfinite(v)) throw ConfigError(sub(path, key), "must be finite");
  if (std::isnan(v)) throw ConfigError(sub(path, key), "must not be NaN");
  return v;
}

inline std::vector<double> get_double_array(const json& j, const std::string& path,
                                            const char* key, bool required,
                                            std::vector<double> fallback = {}) {
  if (!j.contains(key)) {
    if (required) throw ConfigError(sub(path, key), "missing required array");
    return fallback;
  }
  const json& v = j.at(key);
  if (!v.is_array()) throw ConfigError(sub(path, key), "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    double x = number_of(v[i], sub(path, key) + "[" + std::to_string(i) + "]");
    if (!std::isfinite(x))
      throw ConfigError(sub(path, key) + "[" + std::to_string(i) + "]", "must be finite");
    out.push_back(x);
  }
  return out;
}

inline std::vector<std::vector<double>> get_point_array(const json& j,
                                                        const std::string& path,
                                                        const char* key, bool required) {
  if (!j.contains(key)) {
    if (required) throw ConfigError(sub(path, key), "missing required array of points");
    return {};
  }
  const json& v = j.at(key);
  if (!v.is_array()) throw ConfigError(sub(path, key), "expected an array of points");
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const json& row = v[i];
    std::string rp = sub(path, key) + "[" + std::to_string(i) + "]";
    if (!row.is_array() || row.empty())
      throw ConfigError(rp, "expected a nonempty coordinate array");
    std::vector<double> pt;
    for (std::size_t d = 0; d < row.size(); ++d) {
      double x = number_of(row[d], rp + "[" + std::to_string(d) + "]");
      if (!std::isfinite(x))
        throw ConfigError(rp + "[" + std::to_string(d) + "]", "must be finite");
      pt.push_back(x);
    }
    out.push_back(std::move(pt));
  }
  return out;
}

inline std::vector<std::size_t> get_index_array(const json& j, const std::string& path,
                                                const char* key, long long lo) {
  if (!j.contains(key)) throw ConfigError(sub(path, key), "missing required array");
  const json& v = j.at(key);
  if (!v.is_array()) throw ConfigError(sub(path, key), "expected an array of integers");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::string ip = sub(path, key) + "[" + std::to_string(i) + "]";
    if (!v[i].is_number_integer() && !v[i].is_number_unsigned())
      throw ConfigError(ip, "expected an integer");
    long long x = v[i].get<long long>();
    if (x < lo) throw ConfigError(ip, "must be >= " + std::to_string(lo));
    out.push_back(static_cast<std::size_t>(x));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Block parsers.

inline GridSpec parse_grid(const json& j, const std::string& path) {
  require_object(j, path);
  check_keys(j, path, {"dim", "origin", "extent", "resolution"});
  GridSpec g;
  g.dim = static_cast<int>(get_int(j, path, "dim", std::nullopt, 1, 4));
  g.origin = get_double_array(j, path, "origin", true);
  g.extent = get_double_array(j, path, "extent", true);
  g.resolution = get_index_array(j, path, "resolution", 3);
  auto dim = static_cast<std::size_t>(g.dim);
  if (g.origin.size() != dim) throw ConfigError(sub(path, "origin"), "length must equal dim");
  if (g.extent.size() != dim) throw ConfigError(sub(path, "extent"), "length must equal dim");
  if (g.resolution.size() != dim)
    throw ConfigError(sub(path, "resolution"), "length must equal dim");
  for (std::size_t d = 0; d < dim; ++d)
    if (g.extent[d] <= 0)
      throw ConfigError(sub(path, "extent") + "[" + std::to_string(d) + "]",
                        "must be positive");
  return g;
}

inline BoundarySpec parse_boundary(const json& j, const std::string& path, int dim) {
  require_object(j, path);
  check_keys(j, path, {"kind", "expr", "points", "values", "snap"});
  BoundarySpec b;
  b.kind = get_string(j, path, "kind", std::string("expr"));
  if (b.kind == "expr") {
    b.expr = get_string(j, path, "expr");
    try {
      Expr compiled = Expr::parse(b.expr);
      if (compiled.min_dim() > static_cast<std::size_t>(dim))
        throw ConfigError(sub(path, "expr"),
                          "references x" + std::to_string(compiled.min_dim()) +
                              " but grid.dim is " + std::to_string(dim));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(sub(path, "expr"), e.what());
    }
  } else if (b.kind == "table") {
    b.points = get_point_array(j, path, "points", true);
    b.values = get_double_array(j, path, "values", true);
    b.snap = get_double(j, path, "snap", 0.75);
    if (b.points.size() != b.values.size())
      throw ConfigError(sub(path, "values"), "length must match points");
    if (b.points.empty()) throw ConfigError(sub(path, "points"), "must be nonempty");
    for (std::size_t i = 0; i < b.points.size(); ++i)
      if (b.points[i].size() != static_cast<std::size_t>(dim))
        throw ConfigError(sub(path, "points") + "[" + std::to_string(i) + "]",
                          "dimension must equal grid.dim");
    if (b.snap <= 0) throw ConfigError(sub(path, "snap"), "must be positive");
  } else {
    throw ConfigError(sub(path, "kind"), "expected \"expr\" or \"table\"");
  }
  return b;
}

inline DiskSpec parse_disks(const json& j, const std::string& path, int dim) {
  require_object(j, path);
  check_keys(j, path, {"kind", "centers", "radii"});
  std::string kind = get_string(j, path, "kind", std::string("disks"));
  if (kind != "disks") throw ConfigError(sub(path, "kind"), "expected \"disks\"");
  DiskSpec k;
  k.centers = get_point_array(j, path, "centers", true);
  k.radii = get_double_array(j, path, "radii", true);
  if (k.centers.size() != k.radii.size())
    throw ConfigError(sub(path, "radii"), "length must match centers");
  if (k.centers.empty()) throw ConfigError(sub(path, "centers"), "must be nonempty");
  for (std::size_t i = 0; i < k.centers.size(); ++i) {
    if (k.centers[i].size() != static_cast<std::size_t>(dim))
      throw ConfigError(sub(path, "centers") + "[" + std::to_string(i) + "]",
                        "dimension must equal grid.dim");
    if (k.radii[i] <= 0)
      throw ConfigError(sub(path, "radii") + "[" + std::to_string(i) + "]",
                        "must be positive");
  }
  return k;
}

inline SolverParams parse_solver(const json& j, const std::string& path) {
  require_object(j, path);
  check_keys(j, path, {"tol", "max_iter", "omega", "contact_threshold"});
  SolverParams p;
  p.tol = get_double(j, path, "tol", 0.0);
  p.max_iter = static_cast<int>(
      get_int(j, path, "max_iter", 200000, 1, std::numeric_limits<int>::max()));
  p.omega = get_double(j, path, "omega", 1.7);
  p.contact_threshold = get_double(j, path, "contact_threshold", 0.0);
  if (p.tol < 0) throw ConfigError(sub(path, "tol"), "must be >= 0 (0 = auto)");
  if (p.omega <= 1.0 || p.omega >= 2.0)
    throw ConfigError(sub(path, "omega"), "must lie strictly between 1 and 2");
  if (p.contact_threshold < 0)
    throw ConfigError(sub(path, "contact_threshold"), "must be >= 0 (0 = auto)");
  return p;
}

inline OracleSpec parse_oracle(const json& j, const std::string& path, int dim) {
  require_object(j, path);
  check_keys(j, path, {"kind", "contact_radius", "center", "radius_factor"});
  OracleSpec o;
  o.kind = get_string(j, path, "kind");
  if (o.kind != "radial") throw ConfigError(sub(path, "kind"), "expected \"radial\"");
  o.contact_radius = get_double(j, path, "contact_radius", std::nullopt);
  if (o.contact_radius <= 0)
    throw ConfigError(sub(path, "contact_radius"), "must be positive");
  o.center = get_double_array(j, path, "center", false,
                              std::vector<double>(static_cast<std::size_t>(dim), 0.0));
  if (o.center.size() != static_cast<std::size_t>(dim))
    throw ConfigError(sub(path, "center"), "length must equal grid.dim");
  o.radius_factor = get_double(j, path, "radius_factor", 2.0);
  if (o.radius_factor <= 0)
    throw ConfigError(sub(path, "radius_factor"), "must be positive");
  return o;
}

inline HeleShawSpec parse_heleshaw(const json& j, const std::string& path) {
  require_object(j, path);
  check_keys(j, path, {"scales"});
  HeleShawSpec h;
  h.scales = get_double_array(j, path, "scales", false, h.scales);
  if (h.scales.size() < 3) throw ConfigError(sub(path, "scales"), "need at least 3 scales");
  for (double s : h.scales)
    if (s <= 0) throw ConfigError(sub(path, "scales"), "scales must be positive");
  return h;
}

inline AnalysisSpec parse_analysis(const json& j, const std::string& path) {
  require_object(j, path);
  check_keys(j, path,
             {"points", "t", "from_field", "r_fit", "r_min", "kernel_snap", "noise_floor",
              "theta", "order", "tail", "stratum_tol", "anomalous_gap"});
  AnalysisSpec a;
  a.points = get_point_array(j, path, "points", true);
  if (a.points.empty()) throw ConfigError(sub(path, "points"), "must be nonempty");
  a.t = get_double(j, path, "t", 0.0);
  a.from_field = get_string(j, path, "from_field", std::string());
  a.r_fit = get_double(j, path, "r_fit", 0.0);
  a.r_min = get_double(j, path, "r_min", 0.0);
  a.kernel_snap = get_double(j, path, "kernel_snap", 0.02);
  a.noise_floor = get_double(j, path, "noise_floor", 8.0);
  a.theta = get_double(j, path, "theta", 0.9);
  a.order = static_cast<int>(get_int(j, path, "order", 24, 4, 256));
  a.tail = static_cast<int>(get_int(j, path, "tail", 8, 2, 64));
  a.stratum_tol = get_double(j, path, "stratum_tol", 0.05);
  a.anomalous_gap = get_double(j, path, "anomalous_gap", 0.1);
  if (a.r_fit < 0) throw ConfigError(sub(path, "r_fit"), "must be >= 0 (0 = auto)");
  if (a.r_min < 0) throw ConfigError(sub(path, "r_min"), "must be >= 0 (0 = auto)");
  if (a.theta <= 0 || a.theta >= 1)
    throw ConfigError(sub(path, "theta"), "must lie strictly between 0 and 1");
  if (a.kernel_snap < 0) throw ConfigError(sub(path, "kernel_snap"), "must be >= 0");
  if (a.noise_floor < 0) throw ConfigError(sub(path, "noise_floor"), "must be >= 0");
  if (a.stratum_tol <= 0) throw ConfigError(sub(path, "stratum_tol"), "must be positive");
  if (a.anomalous_gap <= 0) throw ConfigError(sub(path, "anomalous_gap"), "must be positive");
  return a;
}

inline SignoriniSpec parse_signorini(const json& j, const std::string& path) {
  require_object(j, path);
  check_keys(j, path, {"lambdas", "dims", "tol", "radii", "quad_order", "n_random"});
  SignoriniSpec s;
  s.lambdas = get_double_array(j, path, "lambdas", false, s.lambdas);
  if (s.lambdas.empty()) throw ConfigError(sub(path, "lambdas"), "must be nonempty");
  for (double l : s.lambdas) {
    bool integer = std::abs(l - std::round(l)) < 1e-12;
    bool half = std::abs(l - std::round(l - 0.5) - 0.5) < 1e-12;
    if (l < 1.5 || (!integer && !half))
      throw ConfigError(sub(path, "lambdas"),
                        "entries must be integers >= 2 or half-integers >= 3/2");
  }
  if (j.contains("dims")) {
    auto dims = get_index_array(j, path, "dims", 2);
    s.dims.assign(dims.begin(), dims.end());
  }
  for (int n : s.dims)
    if (n < 2 || n > 6) throw ConfigError(sub(path, "dims"), "entries must lie in [2, 6]");
  s.tol = get_double(j, path, "tol", 1e-8);
  if (s.tol <= 0) throw ConfigError(sub(path, "tol"), "must be positive");
  s.radii = get_double_array(j, path, "radii", false, s.radii);
  if (s.radii.size() < 3) throw ConfigError(sub(path, "radii"), "need at least 3 radii");
  for (std::size_t i = 0; i < s.radii.size(); ++i) {
    if (s.radii[i] <= 0) throw ConfigError(sub(path, "radii"), "radii must be positive");
    if (i > 0 && s.radii[i] <= s.radii[i - 1])
      throw ConfigError(sub(path, "radii"), "radii must be strictly increasing");
  }
  s.quad_order = static_cast<int>(get_int(j, path, "quad_order", 32, 4, 256));
  s.n_random = static_cast<int>(get_int(j, path, "n_random", 3, 0, 64));
  return s;
}

inline CloudSpec parse_cloud(const json& j, const std::string& path) {
  require_object(j, path);
  check_keys(j, path, {"kind", "points", "depth", "n"});
  CloudSpec c;
  c.kind = get_string(j, path, "kind", std::string("points"));
  if (c.kind == "points") {
    c.points = get_point_array(j, path, "points", true);
    if (c.points.empty()) throw ConfigError(sub(path, "points"), "must be nonempty");
  } else if (c.kind == "cantor") {
    c.depth = static_cast<int>(get_int(j, path, "depth", 6, 0, 16));
  } else if (c.kind == "segment") {
    c.n = static_cast<int>(get_int(j, path, "n", 101, 1, 1000000));
  } else {
    throw ConfigError(sub(path, "kind"), "expected \"points\", \"cantor\" or \"segment\"");
  }
  return c;
}

inline DimensionSpec parse_dimension(const json& j, const std::string& path) {
  require_object(j, path);
  check_keys(j, path, {"cloud", "beta", "delta", "scales", "h_dedup", "coarea", "s",
                       "coarea_beta", "C_ref", "coarea_tol"});
  DimensionSpec d;
  if (!j.contains("cloud")) throw ConfigError(sub(path, "cloud"), "missing required table");
  d.cloud = parse_cloud(j.at("cloud"), sub(path, "cloud"));
  d.beta = get_double(j, path, "beta", 1.0);
  if (d.beta <= 0) throw ConfigError(sub(path, "beta"), "must be positive");
  d.delta = get_double(j, path, "delta", std::numeric_limits<double>::infinity(),
                       /*allow_inf=*/true);
  if (d.delta <= 0) throw ConfigError(sub(path, "delta"), "must be positive");
  d.scales = get_double_array(j, path, "scales", false, d.scales);
  if (d.scales.size() < 3) throw ConfigError(sub(path, "scales"), "need at least 3 scales");
  for (double s : d.scales)
    if (s <= 0) throw ConfigError(sub(path, "scales"), "scales must be positive");
  d.h_dedup = get_double(j, path, "h_dedup", 0.0);
  if (d.h_dedup < 0) throw ConfigError(sub(path, "h_dedup"), "must be >= 0");
  d.coarea = get_bool(j, path, "coarea", false);
  d.s = get_double(j, path, "s", 1.0);
  d.coarea_beta = get_double(j, path, "coarea_beta", 1.0);
  d.C_ref = get_double(j, path, "C_ref", std::numeric_limits<double>::infinity(),
                       /*allow_inf=*/true);
  d.coarea_tol = get_double(j, path, "coarea_tol", 0.1);
  if (d.coarea) {
    if (d.s <= 0) throw ConfigError(sub(path, "s"), "must be positive");
    if (d.coarea_beta <= 0) throw ConfigError(sub(path, "coarea_beta"), "must be positive");
    if (d.C_ref <= 0) throw ConfigError(sub(path, "C_ref"), "must be positive");
    if (d.coarea_tol <= 0) throw ConfigError(sub(path, "coarea_tol"), "must be positive");
  }
  return d;
}

inline PipelineSpec parse_pipeline(const json& j, const std::string& path) {
  require_object(j, path);
  check_keys(j, path, {"b", "c", "bracket_lo", "bracket_hi", "bisections", "r_fit", "ts",
                       "radii", "s_min", "residual_max"});
  PipelineSpec p;
  p.b = get_double(j, path, "b", 0.7);
  p.c = get_double(j, path, "c", 0.008);
  if (p.b <= 0) throw ConfigError(sub(path, "b"), "must be positive");
  if (p.c <= 0) throw ConfigError(sub(path, "c"), "must be positive");
  p.bracket_lo = get_double(j, path, "bracket_lo", -0.03);
  p.bracket_hi = get_double(j, path, "bracket_hi", 0.0);
  if (p.bracket_lo >= p.bracket_hi)
    throw ConfigError(sub(path, "bracket_lo"), "must be below bracket_hi");
  p.bisections = static_cast<int>(get_int(j, path, "bisections", 25, 4, 60));
  p.r_fit = get_double(j, path, "r_fit", 0.22);
  if (p.r_fit <= 0) throw ConfigError(sub(path, "r_fit"), "must be positive");
  p.ts = get_double_array(j, path, "ts", false, p.ts);
  if (p.ts.size() < 2) throw ConfigError(sub(path, "ts"), "need at least 2 offsets");
  for (std::size_t i = 1; i < p.ts.size(); ++i)
    if (p.ts[i] <= p.ts[i - 1])
      throw ConfigError(sub(path, "ts"), "offsets must be strictly increasing");
  p.radii = get_double_array(j, path, "radii", false, p.radii);
  if (p.radii.size() < 3) throw ConfigError(sub(path, "radii"), "need at least 3 radii");
  for (std::size_t i = 0; i < p.radii.size(); ++i) {
    if (p.radii[i] <= 0) throw ConfigError(sub(path, "radii"), "radii must be positive");
    if (i > 0 && p.radii[i] <= p.radii[i - 1])
      throw ConfigError(sub(path, "radii"), "radii must be strictly increasing");
  }
  p.s_min = get_double(j, path, "s_min", 1.0);
  p.residual_max = get_double(j, path, "residual_max", 0.5);
  if (p.residual_max <= 0) throw ConfigError(sub(path, "residual_max"), "must be positive");
  return p;
}

inline std::vector<double> parse_t_values(const json& j, const std::string& path,
                                          bool nonnegative) {
  auto t = get_double_array(j, path, "t_values", true);
  if (t.size() < 2) throw ConfigError(sub(path, "t_values"), "need at least 2 values");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (nonnegative && t[i] < 0)
      throw ConfigError(sub(path, "t_values") + "[" + std::to_string(i) + "]",
                        "must be >= 0");
    if (i > 0 && t[i] <= t[i - 1])
      throw ConfigError(sub(path, "t_values"), "must be strictly increasing (violated at index " +
                                                   std::to_string(i) + ")");
  }
  return t;
}

}  // namespace config_detail

// ---------------------------------------------------------------------------

inline const std::vector<std::string>& config_kinds() {
  static const std::vector<std::string> kinds{
      "solve", "family", "heleshaw", "analyze", "signorini", "dimension", "full-pipeline"};
  return kinds;
}

/// Parse and validate a config document. Throws ConfigError on any schema
/// violation; the message names the dotted path of the offending entry.
inline ExperimentConfig parse_config(const nlohmann::json& doc) {
  using namespace config_detail;
  require_object(doc, "");

  ExperimentConfig cfg;
  cfg.schema_version = static_cast<int>(
      get_int(doc, "", "schema_version", kConfigSchemaVersion, 1, kConfigSchemaVersion));
  cfg.kind = get_string(doc, "", "kind");
  bool known = false;
  for (const auto& k : config_kinds()) known = known || k == cfg.kind;
  if (!known)
    throw ConfigError("kind", "unknown experiment kind \"" + cfg.kind +
                                  "\" (expected one of: solve, family, heleshaw, analyze, "
                                  "signorini, dimension, full-pipeline)");
  cfg.seed = static_cast<std::uint64_t>(
      get_int(doc, "", "seed", 0, 0, std::numeric_limits<long long>::max()));

  auto parse_grid_block = [&](bool required) {
    if (!doc.contains("grid")) {
      if (required) throw ConfigError("grid", "missing required table");
      return;
    }
    cfg.grid = parse_grid(doc.at("grid"), "grid");
  };
  auto parse_boundary_block = [&](bool required) {
    if (!doc.contains("boundary")) {
      if (required) throw ConfigError("boundary", "missing required table");
      return;
    }
    if (!cfg.grid) throw ConfigError("boundary", "requires a grid table");
    cfg.boundary = parse_boundary(doc.at("boundary"), "boundary", cfg.grid->dim);
  };
  auto parse_solver_block = [&] {
    if (doc.contains("solver")) cfg.solver = parse_solver(doc.at("solver"), "solver");
  };

  if (cfg.kind == "solve") {
    check_keys(doc, "", {"schema_version", "kind", "seed", "grid", "boundary", "solver",
                         "oracle"});
    parse_grid_block(true);
    parse_boundary_block(true);
    parse_solver_block();
    if (doc.contains("oracle"))
      cfg.oracle = parse_oracle(doc.at("oracle"), "oracle", cfg.grid->dim);
  } else if (cfg.kind == "family") {
    check_keys(doc, "",
               {"schema_version", "kind", "seed", "grid", "boundary", "solver", "t_values"});
    parse_grid_block(true);
    parse_boundary_block(true);
    parse_solver_block();
    cfg.t_values = parse_t_values(doc, "", /*nonnegative=*/false);
  } else if (cfg.kind == "heleshaw") {
    check_keys(doc, "",
               {"schema_version", "kind", "seed", "grid", "K", "solver", "t_values",
                "heleshaw"});
    parse_grid_block(true);
    if (!doc.contains("K")) throw ConfigError("K", "missing required table");
    cfg.K = parse_disks(doc.at("K"), "K", cfg.grid->dim);
    parse_solver_block();
    cfg.t_values = parse_t_values(doc, "", /*nonnegative=*/true);
    if (doc.contains("heleshaw"))
      cfg.heleshaw = parse_heleshaw(doc.at("heleshaw"), "heleshaw");
  } else if (cfg.kind == "analyze") {
    check_keys(doc, "",
               {"schema_version", "kind", "seed", "grid", "boundary", "solver", "analysis"});
    if (!doc.contains("analysis")) throw ConfigError("analysis", "missing required table");
    cfg.analysis = parse_analysis(doc.at("analysis"), "analysis");
    if (cfg.analysis.from_field.empty()) {
      parse_grid_block(true);
      parse_boundary_block(true);
    } else {
      parse_grid_block(false);
      parse_boundary_block(false);
    }
    parse_solver_block();
  } else if (cfg.kind == "signorini") {
    check_keys(doc, "", {"schema_version", "kind", "seed", "signorini"});
    if (doc.contains("signorini"))
      cfg.signorini = parse_signorini(doc.at("signorini"), "signorini");
  } else if (cfg.kind == "dimension") {
    check_keys(doc, "", {"schema_version", "kind", "seed", "dimension"});
    if (!doc.contains("dimension")) throw ConfigError("dimension", "missing required table");
    cfg.dimension = parse_dimension(doc.at("dimension"), "dimension");
  } else {  // full-pipeline
    check_keys(doc, "", {"schema_version", "kind", "seed", "grid", "solver", "pipeline"});
    parse_grid_block(true);
    if (cfg.grid->dim != 2)
      throw ConfigError("grid.dim", "the full pipeline runs on planar grids");
    parse_solver_block();
    if (doc.contains("pipeline"))
      cfg.pipeline = parse_pipeline(doc.at("pipeline"), "pipeline");
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Canonical serialization. Emits every field of every block the kind uses,
// defaults included, with keys in nlohmann::json's sorted order, so parsing a
// canonical document and re-serializing is the identity on bytes.

namespace config_detail {

inline nlohmann::json inf_or(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

}  // namespace config_detail

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  using nlohmann::json;
  json j;
  j["schema_version"] = cfg.schema_version;
  j["kind"] = cfg.kind;
  j["seed"] = cfg.seed;

  auto grid_json = [&] {
    json g;
    g["dim"] = cfg.grid->dim;
    g["origin"] = cfg.grid->origin;
    g["extent"] = cfg.grid->extent;
    g["resolution"] = cfg.grid->resolution;
    return g;
  };
  auto boundary_json = [&] {
    json b;
    b["kind"] = cfg.boundary->kind;
    if (cfg.boundary->kind == "expr") {
      b["expr"] = cfg.boundary->expr;
    } else {
      b["points"] = cfg.boundary->points;
      b["values"] = cfg.boundary->values;
      b["snap"] = cfg.boundary->snap;
    }
    return b;
  };
  auto solver_json = [&] {
    json s;
    s["tol"] = cfg.solver.tol;
    s["max_iter"] = cfg.solver.max_iter;
    s["omega"] = cfg.solver.omega;
    s["contact_threshold"] = cfg.solver.contact_threshold;
    return s;
  };

  if (cfg.kind == "solve") {
    j["grid"] = grid_json();
    j["boundary"] = boundary_json();
    j["solver"] = solver_json();
    if (cfg.oracle) {
      json o;
      o["kind"] = cfg.oracle->kind;
      o["contact_radius"] = cfg.oracle->contact_radius;
      o["center"] = cfg.oracle->center;
      o["radius_factor"] = cfg.oracle->radius_factor;
      j["oracle"] = o;
    }
  } else if (cfg.kind == "family") {
    j["grid"] = grid_json();
    j["boundary"] = boundary_json();
    j["solver"] = solver_json();
    j["t_values"] = cfg.t_values;
  } else if (cfg.kind == "heleshaw") {
    j["grid"] = grid_json();
    json k;
    k["kind"] = "disks";
    k["centers"] = cfg.K->centers;
    k["radii"] = cfg.K->radii;
    j["K"] = k;
    j["solver"] = solver_json();
    j["t_values"] = cfg.t_values;
    json h;
    h["scales"] = cfg.heleshaw.scales;
    j["heleshaw"] = h;
  } else if (cfg.kind == "analyze") {
    if (cfg.grid) j["grid"] = grid_json();
    if (cfg.boundary) j["boundary"] = boundary_json();
    j["solver"] = solver_json();
    json a;
    a["points"] = cfg.analysis.points;
    a["t"] = cfg.analysis.t;
    if (!cfg.analysis.from_field.empty()) a["from_field"] = cfg.analysis.from_field;
    a["r_fit"] = cfg.analysis.r_fit;
    a["r_min"] = cfg.analysis.r_min;
    a["kernel_snap"] = cfg.analysis.kernel_snap;
    a["noise_floor"] = cfg.analysis.noise_floor;
    a["theta"] = cfg.analysis.theta;
    a["order"] = cfg.analysis.order;
    a["tail"] = cfg.analysis.tail;
    a["stratum_tol"] = cfg.analysis.stratum_tol;
    a["anomalous_gap"] = cfg.analysis.anomalous_gap;
    j["analysis"] = a;
  } else if (cfg.kind == "signorini") {
    json s;
    s["lambdas"] = cfg.signorini.lambdas;
    s["dims"] = cfg.signorini.dims;
    s["tol"] = cfg.signorini.tol;
    s["radii"] = cfg.signorini.radii;
    s["quad_order"] = cfg.signorini.quad_order;
    s["n_random"] = cfg.signorini.n_random;
    j["signorini"] = s;
  } else if (cfg.kind == "dimension") {
    json d;
    json c;
    c["kind"] = cfg.dimension.cloud.kind;
    if (cfg.dimension.cloud.kind == "points") c["points"] = cfg.dimension.cloud.points;
    if (cfg.dimension.cloud.kind == "cantor") c["depth"] = cfg.dimension.cloud.depth;
    if (cfg.dimension.cloud.kind == "segment") c["n"] = cfg.dimension.cloud.n;
    d["cloud"] = c;
    d["beta"] = cfg.dimension.beta;
    d["delta"] = config_detail::inf_or(cfg.dimension.delta);
    d["scales"] = cfg.dimension.scales;
    d["h_dedup"] = cfg.dimension.h_dedup;
    d["coarea"] = cfg.dimension.coarea;
    if (cfg.dimension.coarea) {
      d["s"] = cfg.dimension.s;
      d["coarea_beta"] = cfg.dimension.coarea_beta;
      d["C_ref"] = config_detail::inf_or(cfg.dimension.C_ref);
      d["coarea_tol"] = cfg.dimension.coarea_tol;
    }
    j["dimension"] = d;
  } else {  // full-pipeline
    j["grid"] = grid_json();
    j["solver"] = solver_json();
    json p;
    p["b"] = cfg.pipeline.b;
    p["c"] = cfg.pipeline.c;
    p["bracket_lo"] = cfg.pipeline.bracket_lo;
    p["bracket_hi"] = cfg.pipeline.bracket_hi;
    p["bisections"] = cfg.pipeline.bisections;
    p["r_fit"] = cfg.pipeline.r_fit;
    p["ts"] = cfg.pipeline.ts;
    p["radii"] = cfg.pipeline.radii;
    p["s_min"] = cfg.pipeline.s_min;
    p["residual_max"] = cfg.pipeline.residual_max;
    j["pipeline"] = p;
  }
  return j;
}

/// Canonical textual form: sorted keys, two-space indent, trailing newline.
inline std::string config_dump(const ExperimentConfig& cfg) {
  return config_to_json(cfg).dump(2) + "\n";
}

/// Load a config from a file. ".json" parses as JSON; anything else goes
/// through the TOML-subset reader (which also sniffs JSON bodies).
inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError(path, "cannot open config file");
  std::ostringstream ss;
  ss << is.rdbuf();
  nlohmann::json doc;
  try {
    doc = parse_config_text(ss.str());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
  return parse_config(doc);
}

}  // namespace fblab
