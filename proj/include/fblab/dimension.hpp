#pragma once

// Dimension estimation for finite point clouds sampling singular sets and
// singular-time sets: Hausdorff-premeasure upper bounds via greedy ball
// covers, box-counting dimension fits, and the coarea-type projection check
// relating a space-time cloud's modulus exponent to the box dimension of its
// time projection.
//
// A finite cloud has premeasure 0 and box dimension 0 in the strict sense;
// every estimator here instead treats each point as a sample of an underlying
// continuum set at the cloud's own resolution (the minimal nearest-neighbour
// distance), and reports upper bounds and least-squares slope estimates with
// their residuals. Outputs are labeled "estimate" accordingly.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fblab {

/// A finite set of points in R^dim (spatial, temporal, or space-time with the
/// time coordinate last). Always lexicographically sorted and deduplicated.
struct PointCloud {
  std::size_t dim = 0;
  std::vector<std::vector<double>> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Builds a cloud: validates sizes and finiteness, sorts lexicographically,
/// and deduplicates. With h_dedup > 0 points are identified whenever every
/// coordinate rounds to the same multiple of h_dedup (the lexicographically
/// smallest representative survives); with h_dedup = 0 only exact duplicates
/// collapse.
inline PointCloud make_cloud(std::size_t dim, std::vector<std::vector<double>> pts,
                             double h_dedup = 0.0) {
  if (dim == 0) throw std::invalid_argument("make_cloud: dim must be positive");
  if (!(h_dedup >= 0.0)) throw std::invalid_argument("make_cloud: h_dedup must be >= 0");
  for (const auto& p : pts) {
    if (p.size() != dim) throw std::invalid_argument("make_cloud: point dimension mismatch");
    for (double c : p)
      if (!std::isfinite(c)) throw std::invalid_argument("make_cloud: non-finite coordinate");
  }
  std::sort(pts.begin(), pts.end());
  if (h_dedup == 0.0) {
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  } else {
    std::map<std::vector<long long>, std::size_t> seen;
    std::vector<std::vector<double>> kept;
    for (auto& p : pts) {
      std::vector<long long> key(dim);
      for (std::size_t d = 0; d < dim; ++d) key[d] = std::llround(p[d] / h_dedup);
      if (seen.emplace(std::move(key), kept.size()).second) kept.push_back(std::move(p));
    }
    pts = std::move(kept);
    std::sort(pts.begin(), pts.end());
  }
  return PointCloud{dim, std::move(pts)};
}

namespace detail {

inline double point_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t d = 0; d < a.size(); ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
  return std::sqrt(s);
}

}  // namespace detail

/// Largest pairwise distance (0 for empty or singleton clouds).
inline double diameter(const PointCloud& cloud) {
  double best = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    for (std::size_t j = i + 1; j < cloud.size(); ++j)
      best = std::max(best, detail::point_dist(cloud.points[i], cloud.points[j]));
  return best;
}

/// Sampling resolution: the smallest nearest-neighbour distance, i.e. the
/// finest scale at which the cloud distinguishes points (0 if fewer than 2).
inline double sample_resolution(const PointCloud& cloud) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    double nn = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cloud.size(); ++j)
      if (j != i) nn = std::min(nn, detail::point_dist(cloud.points[i], cloud.points[j]));
    best = std::min(best, nn);
  }
  return std::isfinite(best) ? best : 0.0;
}

namespace detail {

/// Greedy cover of the cloud by balls of diameter d: centers are chosen by
/// farthest-point traversal from the lexicographic minimum (index 0 of the
/// sorted cloud; maximin ties resolve to the smaller index, i.e. the
/// lexicographically smaller point), inserting until every point lies
/// strictly within d/2 of a center. Each center then claims the still
/// unclaimed points within that radius, in insertion order, and contributes
/// (diam(claimed) + h)^beta: the h inflation accounts for every sample
/// standing in for an h-sized piece of the underlying set.
inline double greedy_cover_sum(const PointCloud& cloud, double beta, double d, double h) {
  const std::size_t n = cloud.size();
  if (d <= h)  // capture radius below the resolution: all balls are singletons
    return static_cast<double>(n) * std::pow(h, beta);

  const double rho = 0.5 * d * (1.0 - 1e-9);
  std::vector<double> dist(n);
  std::vector<std::size_t> centers{0};
  for (std::size_t i = 0; i < n; ++i) dist[i] = point_dist(cloud.points[i], cloud.points[0]);
  for (;;) {
    std::size_t far = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (dist[i] > dist[far]) far = i;
    if (dist[far] < rho) break;
    centers.push_back(far);
    for (std::size_t i = 0; i < n; ++i)
      dist[i] = std::min(dist[i], point_dist(cloud.points[i], cloud.points[far]));
  }

  std::vector<bool> claimed(n, false);
  double sum = 0;
  for (std::size_t c : centers) {
    std::vector<std::size_t> subset;
    for (std::size_t i = 0; i < n; ++i)
      if (!claimed[i] && point_dist(cloud.points[i], cloud.points[c]) < rho) {
        claimed[i] = true;
        subset.push_back(i);
      }
    if (subset.empty()) continue;
    double diam = 0;
    for (std::size_t a = 0; a < subset.size(); ++a)
      for (std::size_t b = a + 1; b < subset.size(); ++b)
        diam = std::max(diam, point_dist(cloud.points[subset[a]], cloud.points[subset[b]]));
    sum += std::pow(diam + h, beta);
  }
  return sum;
}

}  // namespace detail

/// Upper bound on the beta-dimensional Hausdorff premeasure at scale delta:
/// the infimum of sum diam(E_i)^beta over covers with diam(E_i) < delta.
/// Returns the cheapest of (a) the one-set cover diam(cloud)^beta whenever
/// diam(cloud) <= delta, and (b) greedy ball covers at the dyadic scales
/// delta, delta/2, delta/4, ... down to the cloud resolution. Anchoring the
/// ladder at delta makes the bound nondecreasing under dyadic refinement of
/// delta (the candidate covers of delta/2 are a subset of those of delta),
/// matching the monotonicity of the true premeasure.
inline double hausdorff_premeasure(const PointCloud& cloud, double beta, double delta) {
  if (!(beta > 0) || !std::isfinite(beta))
    throw std::invalid_argument("hausdorff_premeasure: beta must be positive and finite");
  if (!(delta > 0)) throw std::invalid_argument("hausdorff_premeasure: delta must be positive");
  if (cloud.empty()) return 0.0;

  const double D = diameter(cloud);
  const double h = sample_resolution(cloud);
  double best = std::numeric_limits<double>::infinity();
  if (D <= delta) best = std::pow(D, beta);

  double d = std::isfinite(delta) ? delta : std::max(D, h);
  for (int j = 0; j < 64 && d > 0; ++j, d *= 0.5) {
    best = std::min(best, detail::greedy_cover_sum(cloud, beta, d, h));
    if (d <= h) break;  // finer scales all give the constant n * h^beta
  }
  return best;
}

/// JSON report for one premeasure evaluation.
inline nlohmann::json premeasure_json(const PointCloud& cloud, double beta, double delta) {
  double bound = hausdorff_premeasure(cloud, beta, delta);
  nlohmann::json j;
  j["beta"] = beta;
  j["delta"] = std::isfinite(delta) ? nlohmann::json(delta) : nlohmann::json();
  j["bound"] = bound;
  j["residual"] = 0.0;  // a cover sum is exact; only slope fits carry residuals
  j["label"] = "estimate";
  return j;
}

/// One row of a box-counting table.
struct BoxCount {
  double scale = 0;
  std::size_t count = 0;
};

/// Box-counting dimension estimate: the least-squares slope of log N(eps)
/// against log(1/eps), with the rms fit residual and the (eps, N) table.
struct BoxDimResult {
  double value = 0.0;
  double residual = 0.0;
  bool degenerate = false;  // a single occupied box at every scale
  std::vector<BoxCount> table;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["value"] = value;
    j["residual"] = residual;
    j["degenerate"] = degenerate;
    j["label"] = "estimate";
    auto& rows = j["table"] = nlohmann::json::array();
    for (const auto& row : table) rows.push_back({{"scale", row.scale}, {"count", row.count}});
    return j;
  }
};

/// Counts occupied boxes of side eps on the grid anchored at the cloud's
/// coordinate-wise minimum.
inline std::size_t box_count(const PointCloud& cloud, double eps) {
  if (!(eps > 0)) throw std::invalid_argument("box_count: scale must be positive");
  if (cloud.empty()) return 0;
  std::vector<double> anchor(cloud.dim, std::numeric_limits<double>::infinity());
  for (const auto& p : cloud.points)
    for (std::size_t d = 0; d < cloud.dim; ++d) anchor[d] = std::min(anchor[d], p[d]);
  std::map<std::vector<long long>, bool> boxes;
  std::vector<long long> key(cloud.dim);
  for (const auto& p : cloud.points) {
    for (std::size_t d = 0; d < cloud.dim; ++d)
      key[d] = static_cast<long long>(std::floor((p[d] - anchor[d]) / eps));
    boxes[key] = true;
  }
  return boxes.size();
}

/// Box-counting dimension over the given scales (at least 3 required).
inline BoxDimResult box_dim(const PointCloud& cloud, std::vector<double> scales) {
  if (scales.size() < 3) throw std::invalid_argument("box_dim: at least 3 scales required");
  for (double s : scales)
    if (!(s > 0) || !std::isfinite(s))
      throw std::invalid_argument("box_dim: scales must be positive and finite");
  if (cloud.empty()) throw std::invalid_argument("box_dim: empty cloud");
  std::sort(scales.begin(), scales.end(), std::greater<>());

  BoxDimResult out;
  bool single = true;
  for (double eps : scales) {
    std::size_t n = box_count(cloud, eps);
    single = single && n == 1;
    out.table.push_back({eps, n});
  }
  if (single) {
    out.degenerate = true;  // no scaling information at all: report dimension 0
    return out;
  }

  const std::size_t m = out.table.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& row : out.table) {
    double x = -std::log(row.scale), y = std::log(static_cast<double>(row.count));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  double det = m * sxx - sx * sx;
  double slope = (m * sxy - sx * sy) / det;
  double intercept = (sy - slope * sx) / m;
  double rss = 0;
  for (const auto& row : out.table) {
    double x = -std::log(row.scale), y = std::log(static_cast<double>(row.count));
    double e = y - (intercept + slope * x);
    rss += e * e;
  }
  out.value = slope;
  out.residual = std::sqrt(rss / static_cast<double>(m));
  return out;
}

/// Writes the (scale, N(eps)) table as CSV.
inline void box_counts_to_csv(std::ostream& os, const BoxDimResult& r) {
  os << "scale,count\n";
  for (const auto& row : r.table) os << row.scale << "," << row.count << "\n";
}

/// pi_1: drops the last (time) coordinate of a space-time cloud.
inline PointCloud project_space(const PointCloud& cloud) {
  if (cloud.dim < 2) throw std::invalid_argument("project_space: cloud must be space-time");
  std::vector<std::vector<double>> pts;
  pts.reserve(cloud.size());
  for (const auto& p : cloud.points) pts.emplace_back(p.begin(), p.end() - 1);
  return make_cloud(cloud.dim - 1, std::move(pts));
}

/// pi_2: keeps only the last (time) coordinate of a space-time cloud.
inline PointCloud project_time(const PointCloud& cloud) {
  if (cloud.dim < 2) throw std::invalid_argument("project_time: cloud must be space-time");
  std::vector<std::vector<double>> pts;
  pts.reserve(cloud.size());
  for (const auto& p : cloud.points) pts.push_back({p.back()});
  return make_cloud(1, std::move(pts));
}

/// Diagnostic report of the coarea-type projection check on a space-time
/// cloud: the fitted pairwise modulus constant, the pairs violating a
/// reference constant, and the box dimension of the time projection compared
/// against beta / s.
struct CoareaReport {
  double s = 0;
  double beta = 0;
  double beta_over_s = 0;
  double C_fit = 0;  // max |t'-t| / |x'-x|^s; +inf if two points share x
  std::size_t n_pairs = 0;
  std::vector<std::array<std::size_t, 2>> violations;  // pairs exceeding C_ref
  BoxDimResult pi2;
  bool consistent = false;  // pi2.value <= beta/s + tolerance

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["s"] = s;
    j["beta"] = beta;
    j["beta_over_s"] = beta_over_s;
    j["C_fit"] = std::isfinite(C_fit) ? nlohmann::json(C_fit) : nlohmann::json();
    j["n_pairs"] = n_pairs;
    auto& v = j["violations"] = nlohmann::json::array();
    for (const auto& pr : violations) v.push_back({pr[0], pr[1]});
    j["pi2"] = pi2.to_json();
    j["consistent"] = consistent;
    j["label"] = "estimate";
    return j;
  }
};

/// Checks the hypothesis |t' - t| <= C |x' - x|^s pairwise on a space-time
/// cloud, fits C as the largest observed ratio, lists the pairs exceeding
/// C_ref (pairs sharing the same spatial point always violate), and compares
/// box_dim(pi_2(cloud)) with beta / s at the given tolerance.
inline CoareaReport coarea_projection_check(
    const PointCloud& spacetime, double s, double beta, std::vector<double> pi2_scales,
    double C_ref = std::numeric_limits<double>::infinity(), double tol = 0.1) {
  if (spacetime.dim < 2)
    throw std::invalid_argument("coarea_projection_check: cloud must be space-time");
  if (!(s > 0) || !(beta > 0))
    throw std::invalid_argument("coarea_projection_check: s and beta must be positive");
  if (spacetime.empty()) throw std::invalid_argument("coarea_projection_check: empty cloud");

  CoareaReport rep;
  rep.s = s;
  rep.beta = beta;
  rep.beta_over_s = beta / s;

  const std::size_t n = spacetime.size();
  const std::size_t sd = spacetime.dim - 1;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      ++rep.n_pairs;
      double dx = 0;
      for (std::size_t d = 0; d < sd; ++d) {
        double v = spacetime.points[i][d] - spacetime.points[j][d];
        dx += v * v;
      }
      dx = std::sqrt(dx);
      double dt = std::abs(spacetime.points[i][sd] - spacetime.points[j][sd]);
      double ratio = dx > 0 ? dt / std::pow(dx, s)
                            : (dt > 0 ? std::numeric_limits<double>::infinity() : 0.0);
      rep.C_fit = std::max(rep.C_fit, ratio);
      if (ratio > C_ref * (1 + 1e-12) && rep.violations.size() < 32)
        rep.violations.push_back({i, j});
    }
  }

  rep.pi2 = box_dim(project_time(spacetime), std::move(pi2_scales));
  rep.consistent = rep.pi2.value <= rep.beta_over_s + tol;
  return rep;
}

}  // namespace fblab
