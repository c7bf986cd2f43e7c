#pragma once

// Singular-point analysis at free-boundary points of sampled obstacle-problem
// solutions: regular/singular classification against the half-space and
// quadratic models, least-squares blow-up fits p2/p3/p4 over node annuli,
// truncated-frequency estimates with zero-radius extrapolation, stratum
// labelling, and the contact-cleaning experiment for solution families.
//
// Every "limit" reported here is a finite-resolution extrapolation: fits run
// over the grid nodes in an annulus r_min <= |x - x0| <= r_fit, frequencies
// are extrapolated from profiles over the same window, and each estimate
// carries its fit residual. A truncated frequency reported at its cutoff
// gamma means "at least gamma" (the functional saturates there).

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fblab/ansatz.hpp"
#include "fblab/functionals.hpp"
#include "fblab/solver.hpp"

namespace fblab {

// ---------------------------------------------------------------------------
// Options and result types.

struct FitOptions {
  double r_fit = 0;   // outer fit radius; 0 = 0.8x the distance to the box boundary
  double r_min = 0;   // inner fit radius; 0 = 4x the largest grid spacing
  double misfit_threshold = 0.5;  // fit_p2 rejects above this relative misfit
  double kernel_snap = 0.02;      // p2 eigenvalues at or below this become exact zeros
  double margin_min = 0.2;        // classification margins below this are ambiguous
  double lambda_tol = 0.1;        // slack on frequency gates (>= 3, >= 4)
  double gamma2 = 3.0;            // truncation for the frequency of u - p2
  double gamma3 = 4.0;            // truncation for the frequency of u - P
  double gamma4 = 4.5;            // truncation for the frequency of u - P - p4
  double theta = 0.9;             // profile radius ratio
  int order = 24;                 // quadrature order for profiles and searches
  std::size_t tail = 8;           // extrapolation tail length
  double noise_floor = 8.0;       // drop profile radii below this many grid spacings
};

struct StratumThresholds {
  double tol = 0.05;           // slack when comparing frequencies to 3, 4, gamma4
  double alpha = 0.1;          // expected frequency gap above 2 on the top stratum
  double anomalous_gap = 0.1;  // |lambda2 - 2| below this counts as anomalous
  double p_nonzero = 1e-8;     // coefficient norm above this counts as nonzero
};

enum class StratumLabel {
  sigma_m,             // kernel dimension m <= n-2, frequency gap present
  sigma_m_anomalous,   // m <= n-2, no gain over 2
  sigma_top_lt3,       // m = n-1, lambda2 < 3
  sigma_top_ge3,       // m = n-1, lambda2 >= 3
  sigma_top_3rd,       // lambda2 = 3 with a nonzero harmonic cubic
  sigma_top_ge4,       // ansatz-corrected frequency >= 4
  sigma_top_4th,       // frequency 4 with a nonzero quartic
  sigma_star_candidate // consistent with frequency >= gamma4 at every stage
};

inline std::string to_string(StratumLabel s) {
  switch (s) {
    case StratumLabel::sigma_m: return "Sigma_m";
    case StratumLabel::sigma_m_anomalous: return "Sigma_m^a";
    case StratumLabel::sigma_top_lt3: return "Sigma_{n-1}^{<3}";
    case StratumLabel::sigma_top_ge3: return "Sigma_{n-1}^{>=3}";
    case StratumLabel::sigma_top_3rd: return "Sigma_{n-1}^{3rd}";
    case StratumLabel::sigma_top_ge4: return "Sigma_{n-1}^{>=4}";
    case StratumLabel::sigma_top_4th: return "Sigma_{n-1}^{4th}";
    case StratumLabel::sigma_star_candidate: return "Sigma*-candidate";
  }
  throw std::logic_error("to_string: unknown stratum label");
}

/// A truncated-frequency estimate: the zero-radius extrapolation of
/// phi^gamma together with its rms fit residual. value == gamma means the
/// functional saturated, i.e. the frequency is at least gamma.
struct FrequencyEstimate {
  double value = 0;
  double residual = 0;
  double gamma = 0;
};

/// Misfit comparison at frequency 3: best harmonic cubic against the best
/// member of the odd Signorini family |x_n|((tr A/3) x_n^2 - x'.A x').
struct DichotomyReport {
  double harmonic_misfit = 0;
  double qA_misfit = 0;
  double margin = 0;  // relative gap between the two misfits
  bool harmonic_wins = true;
};

struct SingularPointRecord {
  std::vector<double> x0;
  double t = 0;  // family parameter of the solution the record was taken from

  QuadraticBlowup p2;
  double p2_misfit = 0;
  // Columns map fit-frame coordinates to ambient ones: y = frame^T (x - x0).
  // The last coordinate is the nondegenerate direction of p2; for m = n-1
  // records the transverse block is rotated so the cubic fit is diagonal.
  Eigen::MatrixXd frame;

  std::optional<FrequencyEstimate> lambda2, lambda3, lambda4;

  std::optional<CubicBlowup> p3;  // coefficients in the fit frame
  double p3_misfit = 0;
  double monneau_drift = 0;  // largest observed decrease of r^{-6} H(r, u - p2 - p3)
  std::optional<DichotomyReport> dichotomy;

  std::optional<Poly> ansatz;  // fourth-order ansatz P in the fit frame
  std::optional<DPoly> p4;     // quartic fit in the fit frame
  double p4_misfit = 0;

  std::string degenerate;  // nonempty: why higher-order entries are formal
  StratumLabel stratum = StratumLabel::sigma_top_ge3;

  nlohmann::json to_json() const;
};

enum class PointKind { regular, singular, ambiguous };

inline std::string to_string(PointKind k) {
  switch (k) {
    case PointKind::regular: return "regular";
    case PointKind::singular: return "singular";
    case PointKind::ambiguous: return "ambiguous";
  }
  throw std::logic_error("to_string: unknown point kind");
}

struct Classification {
  PointKind kind = PointKind::ambiguous;
  double halfspace_misfit = 0;
  double p2_misfit = 0;
  double margin = 0;               // relative gap between the two misfits
  std::vector<double> direction;   // best half-space normal
  std::optional<SingularPointRecord> record;  // present for singular points
};

// ---------------------------------------------------------------------------
// Fit machinery: node clouds and weighted least squares.

namespace detail {

inline double box_clearance(const Grid& g, std::span<const double> x0) {
  double d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < g.dim(); ++i) {
    d = std::min(d, x0[i] - g.origin()[i]);
    d = std::min(d, g.upper(i) - x0[i]);
  }
  return d;
}

inline double max_spacing(const Grid& g) {
  double h = 0;
  for (int d = 0; d < g.dim(); ++d) h = std::max(h, g.spacing(d));
  return h;
}

/// Resolve the fit window [r_min, r_fit] for a field around x0.
inline std::pair<double, double> fit_window(const Grid& g, std::span<const double> x0,
                                            const FitOptions& opt) {
  double h = max_spacing(g);
  double r_min = opt.r_min > 0 ? opt.r_min : 4.0 * h;
  double r_fit = opt.r_fit > 0 ? opt.r_fit : 0.8 * box_clearance(g, x0);
  // A ratio above theta^{-4} leaves enough profile radii to extrapolate.
  if (!(r_fit > r_min * 1.6))
    throw std::invalid_argument(
        "blowup fit: analysis window too small (r_fit must exceed 1.6 r_min; refine "
        "the grid or enlarge r_fit)");
  if (r_fit > box_clearance(g, x0))
    throw std::invalid_argument("blowup fit: the ball of radius r_fit around x0 leaves the box");
  return {r_min, r_fit};
}

/// Grid nodes with r_min <= |x - x0| <= r_fit, as offsets y = x - x0 plus the
/// sampled values. Fits use raw nodes, so synthetic data that is exact at
/// nodes is fitted without interpolation error.
struct NodeCloud {
  int n = 0;
  std::size_t count = 0;
  std::vector<double> y;    // packed offsets, n per node
  std::vector<double> rad;  // |y|
  std::vector<double> w;    // sampled values
};

inline NodeCloud annulus_cloud(const ScalarField& u, std::span<const double> x0,
                               double r_min, double r_fit) {
  NodeCloud c;
  c.n = u.grid.dim();
  for_each_node(u.grid, [&](std::size_t flat, auto, std::span<const double> x) {
    double rr = 0;
    for (int i = 0; i < c.n; ++i) rr += (x[i] - x0[i]) * (x[i] - x0[i]);
    double r = std::sqrt(rr);
    if (r < r_min || r > r_fit) return;
    for (int i = 0; i < c.n; ++i) c.y.push_back(x[i] - x0[i]);
    c.rad.push_back(r);
    c.w.push_back(u.values[flat]);
    ++c.count;
  });
  if (c.count < 8)
    throw std::invalid_argument("blowup fit: fewer than 8 grid nodes in the fit annulus");
  return c;
}

/// Relative misfit of fixed model values against the data, both scaled by
/// rad^{-k} so each shell of the annulus counts equally for a k-homogeneous
/// model. Zero data means zero misfit (flagged degenerate by callers).
inline double relative_misfit(const NodeCloud& c, const std::vector<double>& model,
                              double k) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < c.count; ++i) {
    double s = std::pow(c.rad[i], -k);
    double d = (c.w[i] - model[i]) * s;
    double v = c.w[i] * s;
    num += d * d;
    den += v * v;
  }
  return den > 0 ? std::sqrt(num / den) : 0.0;
}

struct WlsFit {
  Eigen::VectorXd coeff;
  double misfit = 0;     // relative, in the rad^{-k} scaling
  double data_norm = 0;  // scaled l2 norm of the data
  bool rank_deficient = false;
};

/// Least squares of the data against column j = basis(i, j), with both sides
/// scaled by rad^{-k}.
inline WlsFit weighted_fit(const NodeCloud& c,
                           const std::function<double(std::size_t, std::size_t)>& basis,
                           std::size_t k_cols, double k) {
  Eigen::MatrixXd B(c.count, k_cols);
  Eigen::VectorXd d(c.count);
  for (std::size_t i = 0; i < c.count; ++i) {
    double s = std::pow(c.rad[i], -k);
    for (std::size_t j = 0; j < k_cols; ++j) B(i, j) = s * basis(i, j);
    d[i] = s * c.w[i];
  }
  WlsFit out;
  out.data_norm = d.norm();
  Eigen::MatrixXd G = B.transpose() * B;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(G);
  lu.setThreshold(1e-10);
  out.rank_deficient = lu.rank() < (Eigen::Index)k_cols;
  out.coeff = out.rank_deficient ? Eigen::VectorXd::Zero(k_cols)
                                 : lu.solve(B.transpose() * d).eval();
  out.misfit = out.data_norm > 0 ? (B * out.coeff - d).norm() / out.data_norm : 0.0;
  return out;
}

/// Euclidean projection of a vector onto the simplex {v >= 0, sum v = 1}.
inline Eigen::VectorXd project_simplex(Eigen::VectorXd v) {
  std::vector<double> s(v.data(), v.data() + v.size());
  std::sort(s.begin(), s.end(), std::greater<double>());
  double cum = 0, tau = 0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    cum += s[j];
    double t = (cum - 1.0) / (double)(j + 1);
    if (s[j] - t > 0) tau = t;
  }
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = std::max(0.0, v[i] - tau);
  return v;
}

/// Profile-and-extrapolate the truncated frequency phi^gamma of a residual
/// field over [r_min, r_fit]. The residual is first normalized so that
/// max_r H(r)/r^{2 gamma} = 1: phi^gamma is not scale-invariant (the
/// truncation term has an absolute scale), and without the normalization a
/// small-amplitude residual would saturate at gamma no matter how it decays.
/// A residual with no signal at all still reports the saturated value gamma,
/// meaning "at least gamma at this resolution".
inline FrequencyEstimate truncated_frequency(const ScalarField& w, std::span<const double> x0,
                                             double r_min, double r_fit, double gamma,
                                             const FitOptions& opt) {
  FunctionalInput in = make_input(w);
  ProfileOptions po;
  po.theta = opt.theta;
  po.r_min = r_min;
  po.order = opt.order;
  po.eps_slack = default_eps_slack(max_spacing(w.grid));
  FrequencyProfile prof = profile(in, x0, r_fit, po);
  double scale = 0;
  for (const auto& rec : prof.records)
    scale = std::max(scale, rec.H / std::pow(rec.r, 2 * gamma));
  if (!(scale > 0)) return {gamma, 0.0, gamma};
  std::vector<double> radii, vals;
  for (const auto& rec : prof.records) {
    double t = std::pow(rec.r, 2 * gamma);
    radii.push_back(rec.r);
    vals.push_back((rec.D / scale + gamma * t) / (rec.H / scale + t));
  }

  // Grid-backed functionals at radius r carry a relative error of order
  // (h/r)^2 from interpolation, so radii below a few spacings are pure noise.
  // Keep the smallest trusted radii (they sit closest to the r -> 0 limit);
  // if the floor eats almost everything, fall back to the largest radii.
  double floor_r = opt.noise_floor * max_spacing(w.grid);
  std::size_t first_bad = radii.size();
  for (std::size_t i = 0; i < radii.size(); ++i)
    if (radii[i] < floor_r) {
      first_bad = i;
      break;
    }
  std::size_t usable = std::max<std::size_t>(first_bad, std::min<std::size_t>(4, radii.size()));
  std::size_t m = std::min(opt.tail, usable);
  std::vector<double> rt(radii.begin() + (usable - m), radii.begin() + usable);
  std::vector<double> vt(vals.begin() + (usable - m), vals.begin() + usable);
  Extrapolation ex = extrapolate_tail(rt, vt, po.eps_slack);

  // Plateau guard: fitting a + b r^c to a constant-plus-noise tail is
  // ill-posed (small exponents are nearly collinear with the constant), so
  // accept the trended extrapolation only when it beats the plateau by more
  // than the point noise, and never let it leave the data range by more than
  // a few times the observed variation.
  double mean = 0;
  for (double v : vt) mean += v;
  mean /= (double)vt.size();
  double res0 = 0;
  for (double v : vt) res0 += (v - mean) * (v - mean);
  res0 = std::sqrt(res0 / (double)vt.size());
  double sigma = 0;
  for (std::size_t i = 1; i + 1 < vt.size(); ++i) {
    double d2 = vt[i + 1] - 2 * vt[i] + vt[i - 1];
    sigma += d2 * d2;
  }
  sigma = vt.size() > 2 ? std::sqrt(sigma / (6.0 * (double)(vt.size() - 2))) : res0;
  double vmin = *std::min_element(vt.begin(), vt.end());
  double vmax = *std::max_element(vt.begin(), vt.end());
  bool insignificant = res0 <= 1.5 * ex.residual + 2 * sigma;
  bool overshoot = ex.value < vmin - 3 * (vmax - vmin) - 2 * sigma ||
                   ex.value > vmax + 3 * (vmax - vmin) + 2 * sigma;
  if (insignificant || overshoot) return {mean, res0, gamma};
  return {ex.value, ex.residual, gamma};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Node-exact residual fields.

/// Field with values u(x) - model(x - x0) at every node. Subtracting the
/// model at the nodes (rather than after interpolation) keeps the residual's
/// interpolation error proportional to the residual itself.
inline ScalarField residual_field(const ScalarField& u, std::span<const double> x0,
                                  const std::function<double(std::span<const double>)>& model) {
  ScalarField out(u.grid);
  int n = u.grid.dim();
  std::vector<double> y(n);
  for_each_node(u.grid, [&](std::size_t flat, auto, std::span<const double> x) {
    for (int i = 0; i < n; ++i) y[i] = x[i] - x0[i];
    out.values[flat] = u.values[flat] - model(y);
  });
  return out;
}

// ---------------------------------------------------------------------------
// rescale: w_r(x) = w(x0 + r x) / sqrt(H(r, w)).

inline std::function<double(std::span<const double>)> rescale(
    const ScalarField& w, std::span<const double> x0, double r, int order = 32) {
  if (!(r > 0)) throw std::invalid_argument("rescale: radius must be positive");
  if (r > detail::box_clearance(w.grid, x0))
    throw std::invalid_argument("rescale: the ball of radius r around x0 leaves the box");
  auto wp = std::make_shared<ScalarField>(w);
  int n = w.grid.dim();
  auto sph = sphere_rule(n, order);
  std::vector<double> c(x0.begin(), x0.end());
  double Hr = std::pow(r, 1 - n) * sphere_integral(
                                       [&](std::span<const double> x) {
                                         double v = interpolate(*wp, x);
                                         return v * v;
                                       },
                                       c, r, sph);
  if (!(Hr > 0)) throw std::domain_error("rescale: H(r, w) = 0");
  double s = std::sqrt(Hr);
  return [wp, c, r, s, n](std::span<const double> x) {
    std::vector<double> z(n);
    for (int i = 0; i < n; ++i) z[i] = c[i] + r * x[i];
    return interpolate(*wp, z) / s;
  };
}

// ---------------------------------------------------------------------------
// fit_p2: constrained least squares against (1/2) y . A y with A symmetric
// positive semidefinite and trace 1 (projection onto the spectral simplex).

struct P2Fit {
  QuadraticBlowup p2;
  double misfit = 0;
};

namespace detail {

inline P2Fit fit_p2_cloud(const NodeCloud& c, double kernel_snap) {
  int n = c.n;
  std::vector<std::pair<int, int>> cols;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) cols.emplace_back(i, j);
  auto basis = [&](std::size_t i, std::size_t j) {
    auto [a, b] = cols[j];
    double v = c.y[i * n + a] * c.y[i * n + b];
    return a == b ? 0.5 * v : v;
  };
  WlsFit ls = weighted_fit(c, basis, cols.size(), 2.0);

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t j = 0; j < cols.size(); ++j) {
    auto [a, b] = cols[j];
    A(a, b) = ls.coeff[j];
    A(b, a) = ls.coeff[j];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  Eigen::VectorXd lam = project_simplex(es.eigenvalues());
  // Eigenvalues within the snap tolerance of zero are higher-order leakage
  // in a finite-window fit; collapse them so the kernel dimension is exact.
  if (lam.maxCoeff() > kernel_snap) {
    for (Eigen::Index i = 0; i < lam.size(); ++i)
      if (lam[i] <= kernel_snap) lam[i] = 0.0;
    lam /= lam.sum();
  }
  A = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
  A = 0.5 * (A + A.transpose());
  double tr = A.trace();
  if (tr > 0) A /= tr;

  std::vector<double> model(c.count);
  for (std::size_t i = 0; i < c.count; ++i) {
    double v = 0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) v += c.y[i * n + a] * A(a, b) * c.y[i * n + b];
    model[i] = 0.5 * v;
  }
  P2Fit out;
  out.p2 = make_p2(A);
  out.misfit = relative_misfit(c, model, 2.0);
  return out;
}

}  // namespace detail

inline P2Fit fit_p2(const ScalarField& u, std::span<const double> x0,
                    const FitOptions& opt = {}) {
  auto [r_min, r_fit] = detail::fit_window(u.grid, x0, opt);
  P2Fit out = detail::fit_p2_cloud(detail::annulus_cloud(u, x0, r_min, r_fit), opt.kernel_snap);
  if (out.misfit > opt.misfit_threshold) {
    std::ostringstream os;
    os << "fit_p2: not singular-quadratic (relative misfit " << out.misfit
       << " exceeds " << opt.misfit_threshold << ")";
    throw std::runtime_error(os.str());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Half-space misfit: the regular model (1/2) max(0, e.y)^2 over unit e.

struct HalfspaceFit {
  std::vector<double> e;
  double misfit = 0;
};

namespace detail {

inline double halfspace_misfit_dir(const NodeCloud& c, std::span<const double> e) {
  std::vector<double> model(c.count);
  int n = c.n;
  for (std::size_t i = 0; i < c.count; ++i) {
    double t = 0;
    for (int a = 0; a < n; ++a) t += e[a] * c.y[i * n + a];
    model[i] = t > 0 ? 0.5 * t * t : 0.0;
  }
  return relative_misfit(c, model, 2.0);
}

}  // namespace detail

inline HalfspaceFit fit_halfspace(const detail::NodeCloud& c, int order = 16) {
  int n = c.n;
  HalfspaceFit best;
  best.misfit = std::numeric_limits<double>::infinity();
  auto consider = [&](std::span<const double> e) {
    double m = detail::halfspace_misfit_dir(c, e);
    if (m < best.misfit) {
      best.misfit = m;
      best.e.assign(e.begin(), e.end());
    }
  };
  if (n == 1) {
    double plus[1] = {1.0}, minus[1] = {-1.0};
    consider(plus);
    consider(minus);
    return best;
  }
  auto rule = sphere_rule(n, order);
  for (const auto& node : rule.nodes) consider(node);
  // Local refinement: walk toward better directions along coordinate
  // perturbations with a shrinking step.
  std::vector<double> e = best.e, trial(n);
  for (double step = 0.25; step > 1e-4;) {
    bool improved = false;
    for (int a = 0; a < n && !improved; ++a) {
      for (double sgn : {1.0, -1.0}) {
        trial = e;
        trial[a] += sgn * step;
        double norm = 0;
        for (double v : trial) norm += v * v;
        norm = std::sqrt(norm);
        for (double& v : trial) v /= norm;
        double misfit = detail::halfspace_misfit_dir(c, trial);
        if (misfit < best.misfit) {
          best.misfit = misfit;
          best.e = trial;
          e = trial;
          improved = true;
          break;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return best;
}

// ---------------------------------------------------------------------------
// fit_p3: harmonic cubics divisible by y_n in the p2 frame, diagonalized by
// an in-plane rotation.

struct P3Fit {
  CubicBlowup p3;          // diagonal coefficients in the (updated) frame
  Eigen::MatrixXd frame;   // y = frame^T (x - x0) diagonalizes the cubic
  double misfit = 0;
  double monneau_drift = 0;
};

namespace detail {

/// Rotated offsets: replaces cloud.y by frame^T y.
inline NodeCloud rotate_cloud(const NodeCloud& c, const Eigen::MatrixXd& frame) {
  NodeCloud out = c;
  int n = c.n;
  for (std::size_t i = 0; i < c.count; ++i) {
    Eigen::Map<const Eigen::VectorXd> y(c.y.data() + i * n, n);
    Eigen::VectorXd z = frame.transpose() * y;
    for (int a = 0; a < n; ++a) out.y[i * n + a] = z[a];
  }
  return out;
}

/// Subtract (1/2) y.Ay from the cloud values (offsets already in A's frame
/// when A is diagonal; pass the ambient A for ambient offsets).
inline NodeCloud subtract_quadratic(const NodeCloud& c, const Eigen::MatrixXd& A) {
  NodeCloud out = c;
  int n = c.n;
  for (std::size_t i = 0; i < c.count; ++i) {
    double v = 0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) v += c.y[i * n + a] * A(a, b) * c.y[i * n + b];
    out.w[i] -= 0.5 * v;
  }
  return out;
}

}  // namespace detail

inline P3Fit fit_p3(const ScalarField& u, std::span<const double> x0,
                    const QuadraticBlowup& p2, double lambda2,
                    const FitOptions& opt = {}) {
  int n = p2.n;
  if (p2.kernel_dim != n - 1)
    throw std::invalid_argument("fit_p3: p2 must have an (n-1)-dimensional kernel");
  if (lambda2 < 3.0 - opt.lambda_tol) {
    std::ostringstream os;
    os << "fit_p3: not in Sigma^{>=3} (lambda2 = " << lambda2 << ")";
    throw std::invalid_argument(os.str());
  }
  auto [r_min, r_fit] = detail::fit_window(u.grid, x0, opt);
  detail::NodeCloud amb = detail::annulus_cloud(u, x0, r_min, r_fit);
  detail::NodeCloud c = detail::rotate_cloud(detail::subtract_quadratic(amb, p2.A), p2.frame);

  // Basis: y_n * (y'.B y') + (c/6) y_n^3 with c = -2 tr B, i.e. per symmetric
  // B-entry: diagonal b_aa -> y_a^2 y_n - y_n^3/3, off-diagonal -> 2 y_a y_b y_n.
  std::vector<std::pair<int, int>> cols;
  for (int a = 0; a < n - 1; ++a)
    for (int b = a; b < n - 1; ++b) cols.emplace_back(a, b);
  auto basis = [&](std::size_t i, std::size_t j) {
    auto [a, b] = cols[j];
    double yn = c.y[i * n + (n - 1)];
    if (a == b) {
      double ya = c.y[i * n + a];
      return ya * ya * yn - yn * yn * yn / 3.0;
    }
    return 2.0 * c.y[i * n + a] * c.y[i * n + b] * yn;
  };
  detail::WlsFit ls = detail::weighted_fit(c, basis, cols.size(), 3.0);

  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n - 1, n - 1);
  for (std::size_t j = 0; j < cols.size(); ++j) {
    auto [a, b] = cols[j];
    B(a, b) = ls.coeff[j];
    B(b, a) = ls.coeff[j];
  }

  P3Fit out;
  out.misfit = ls.misfit;
  out.frame = p2.frame;
  std::vector<Rat> coeff(n);
  if (n == 2) {
    coeff[0] = Rat(B(0, 0)) * 2;
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
    // Transverse eigenvalues in descending order so the leading coefficient
    // comes first; signs normalized for reproducible frames.
    Eigen::VectorXd ev = es.eigenvalues();
    Eigen::MatrixXd V = es.eigenvectors();
    std::vector<int> ord(n - 1);
    for (int i = 0; i < n - 1; ++i) ord[i] = i;
    std::sort(ord.begin(), ord.end(), [&](int a, int b) { return ev[a] > ev[b]; });
    Eigen::MatrixXd S = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < n - 1; ++i) {
      S.block(0, i, n - 1, 1) = V.col(ord[i]);
      coeff[i] = Rat(ev[ord[i]]) * 2;
    }
    normalize_eigenvector_signs(S);
    out.frame = p2.frame * S;
  }
  Rat s(0);
  for (int i = 0; i < n - 1; ++i) s += coeff[i];
  coeff[n - 1] = -s;  // harmonicity, exact in rational arithmetic
  out.p3 = make_p3(n, std::move(coeff));

  // Almost-monotonicity diagnostic for r^{-6} H(r, u - p2 - p3): the largest
  // decrease observed when the radius shrinks.
  Poly cubic = out.p3.poly();
  Eigen::MatrixXd F = out.frame;
  Eigen::MatrixXd A = p2.A;
  auto model = [&](std::span<const double> y) {
    Eigen::Map<const Eigen::VectorXd> ym(y.data(), n);
    double quad = 0.5 * ym.dot(A * ym);
    Eigen::VectorXd z = F.transpose() * ym;
    std::vector<double> zv(z.data(), z.data() + n);
    return quad + cubic.eval(zv);
  };
  ScalarField res = residual_field(u, x0, model);
  FunctionalInput in = make_input(res);
  ProfileOptions po;
  po.theta = opt.theta;
  po.r_min = r_min;
  po.order = opt.order;
  po.eps_slack = default_eps_slack(detail::max_spacing(u.grid));
  FrequencyProfile prof = profile(in, x0, r_fit, po);
  double drift = 0;
  for (std::size_t i = 0; i + 1 < prof.records.size(); ++i)
    drift = std::max(drift, prof.records[i + 1].monneau - prof.records[i].monneau);
  out.monneau_drift = drift;
  return out;
}

// ---------------------------------------------------------------------------
// Cubic dichotomy at frequency 3: harmonic cubic against the odd family
// q_A(y) = |y_n| ((tr A / 3) y_n^2 - y'.A y') with A symmetric PSD.

inline DichotomyReport cubic_dichotomy(const ScalarField& u, std::span<const double> x0,
                                       const QuadraticBlowup& p2,
                                       const FitOptions& opt = {}) {
  int n = p2.n;
  if (p2.kernel_dim != n - 1)
    throw std::invalid_argument("cubic_dichotomy: p2 must have an (n-1)-dimensional kernel");
  auto [r_min, r_fit] = detail::fit_window(u.grid, x0, opt);
  detail::NodeCloud amb = detail::annulus_cloud(u, x0, r_min, r_fit);
  detail::NodeCloud c = detail::rotate_cloud(detail::subtract_quadratic(amb, p2.A), p2.frame);

  // Harmonic route: same basis as fit_p3.
  std::vector<std::pair<int, int>> cols;
  for (int a = 0; a < n - 1; ++a)
    for (int b = a; b < n - 1; ++b) cols.emplace_back(a, b);
  auto hbasis = [&](std::size_t i, std::size_t j) {
    auto [a, b] = cols[j];
    double yn = c.y[i * n + (n - 1)];
    if (a == b) {
      double ya = c.y[i * n + a];
      return ya * ya * yn - yn * yn * yn / 3.0;
    }
    return 2.0 * c.y[i * n + a] * c.y[i * n + b] * yn;
  };
  detail::WlsFit hfit = detail::weighted_fit(c, hbasis, cols.size(), 3.0);

  // Odd Signorini route, linear in the entries of A; the least-squares
  // minimizer is projected back onto the PSD cone before scoring.
  auto qbasis = [&](std::size_t i, std::size_t j) {
    auto [a, b] = cols[j];
    double yn = c.y[i * n + (n - 1)];
    double ayn = std::abs(yn);
    if (a == b) {
      double ya = c.y[i * n + a];
      return ayn * (yn * yn / 3.0 - ya * ya);
    }
    return ayn * (-2.0 * c.y[i * n + a] * c.y[i * n + b]);
  };
  detail::WlsFit qfit = detail::weighted_fit(c, qbasis, cols.size(), 3.0);
  Eigen::MatrixXd Aq = Eigen::MatrixXd::Zero(n - 1, n - 1);
  for (std::size_t j = 0; j < cols.size(); ++j) {
    auto [a, b] = cols[j];
    Aq(a, b) = qfit.coeff[j];
    Aq(b, a) = qfit.coeff[j];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Aq);
  Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
  Aq = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
  std::vector<double> qmodel(c.count);
  for (std::size_t i = 0; i < c.count; ++i) {
    double yn = c.y[i * n + (n - 1)];
    double quad = 0;
    for (int a = 0; a < n - 1; ++a)
      for (int b = 0; b < n - 1; ++b) quad += c.y[i * n + a] * Aq(a, b) * c.y[i * n + b];
    qmodel[i] = std::abs(yn) * (Aq.trace() * yn * yn / 3.0 - quad);
  }
  double qmisfit = detail::relative_misfit(c, qmodel, 3.0);

  DichotomyReport rep;
  rep.harmonic_misfit = hfit.misfit;
  rep.qA_misfit = qmisfit;
  double worst = std::max({hfit.misfit, qmisfit, 1e-300});
  rep.margin = std::abs(hfit.misfit - qmisfit) / worst;
  rep.harmonic_wins = hfit.misfit <= qmisfit;
  return rep;
}

// ---------------------------------------------------------------------------
// fit_p4: 4-homogeneous harmonic polynomials divisible by y_n.

struct P4Fit {
  DPoly p4;  // in the record frame coordinates
  double misfit = 0;
  FrequencyEstimate lambda4;
  std::string degenerate;  // nonempty when the fit is formal
};

namespace detail {

/// Basis of 4-homogeneous harmonic polynomials divisible by y_n, computed as
/// the kernel of the Laplacian on span{y_n * (cubic monomials)}.
inline std::vector<DPoly> harmonic_quartics_divisible(int n) {
  std::vector<std::vector<unsigned>> cand;
  std::vector<unsigned> e(n, 0);
  // Enumerate cubic exponents and append one power of y_n.
  std::function<void(int, unsigned)> rec = [&](int pos, unsigned left) {
    if (pos == n - 1) {
      e[pos] = left;
      auto full = e;
      full[n - 1] += 1;
      cand.push_back(full);
      return;
    }
    for (unsigned k = 0; k <= left; ++k) {
      e[pos] = k;
      rec(pos + 1, left - k);
    }
  };
  rec(0, 3);

  // Laplacian coefficients land on degree-2 monomials; index them.
  std::map<std::vector<unsigned>, int> quad_index;
  auto quad_of = [&](std::vector<unsigned> q) {
    auto it = quad_index.find(q);
    if (it == quad_index.end())
      it = quad_index.emplace(std::move(q), (int)quad_index.size()).first;
    return it->second;
  };
  std::vector<std::array<double, 3>> entries;  // (row, col, coefficient)
  for (std::size_t j = 0; j < cand.size(); ++j) {
    for (int d = 0; d < n; ++d) {
      if (cand[j][d] < 2) continue;
      auto q = cand[j];
      double coef = (double)q[d] * (q[d] - 1);
      q[d] -= 2;
      entries.push_back({(double)quad_of(q), (double)j, coef});
    }
  }
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero((int)quad_index.size(), (int)cand.size());
  for (const auto& e3 : entries) M((int)e3[0], (int)e3[1]) += e3[2];
  Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
  lu.setThreshold(1e-10);
  Eigen::MatrixXd K = lu.kernel();

  std::vector<DPoly> out;
  for (int col = 0; col < K.cols(); ++col) {
    DPoly p(n);
    for (std::size_t j = 0; j < cand.size(); ++j)
      if (std::abs(K(j, col)) > 1e-14) p.add_term(cand[j], K(j, col));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace detail

inline P4Fit fit_p4(const ScalarField& u, std::span<const double> x0, const Poly& ansatz,
                    const Eigen::MatrixXd& frame, const FitOptions& opt = {}) {
  int n = u.grid.dim();
  auto [r_min, r_fit] = detail::fit_window(u.grid, x0, opt);
  detail::NodeCloud c = detail::rotate_cloud(detail::annulus_cloud(u, x0, r_min, r_fit), frame);
  std::vector<double> z(n);
  double scale = 0;
  for (std::size_t i = 0; i < c.count; ++i) {
    for (int a = 0; a < n; ++a) z[a] = c.y[i * n + a];
    c.w[i] -= ansatz.eval(z);
    scale = std::max(scale, std::abs(c.w[i]) / std::pow(c.rad[i], 4.0));
  }

  P4Fit out;
  out.p4 = DPoly(n);
  out.lambda4 = {opt.gamma4, 0.0, opt.gamma4};
  if (scale < 1e-11) {
    out.degenerate = "degenerate (w == 0)";
    return out;
  }

  std::vector<DPoly> basis = detail::harmonic_quartics_divisible(n);
  auto bfun = [&](std::size_t i, std::size_t j) {
    std::vector<double> y(c.y.begin() + i * n, c.y.begin() + (i + 1) * n);
    return basis[j].eval(y);
  };
  detail::WlsFit ls = detail::weighted_fit(c, bfun, basis.size(), 4.0);
  if (ls.rank_deficient) out.degenerate = "degenerate basis (rank-deficient fit)";
  for (std::size_t j = 0; j < basis.size(); ++j) out.p4 += ls.coeff[j] * basis[j];
  out.misfit = ls.misfit;

  Eigen::MatrixXd F = frame;
  DPoly p4 = out.p4;
  Poly P = ansatz;
  auto model = [&, n](std::span<const double> y) {
    Eigen::Map<const Eigen::VectorXd> ym(y.data(), n);
    Eigen::VectorXd zz = F.transpose() * ym;
    std::vector<double> zv(zz.data(), zz.data() + n);
    return P.eval(zv) + p4.eval(zv);
  };
  ScalarField res = residual_field(u, x0, model);
  out.lambda4 = detail::truncated_frequency(res, x0, r_min, r_fit, opt.gamma4, opt);
  return out;
}

// ---------------------------------------------------------------------------
// Stratum assignment and record validation.

namespace detail {

inline double cubic_norm(const CubicBlowup& p3) {
  double s = 0;
  for (const Rat& a : p3.a) {
    double v = (double)a;
    s += v * v;
  }
  return std::sqrt(s);
}

inline double dpoly_norm(const DPoly& p) {
  double s = 0;
  for (const auto& [e, c] : p.terms()) s += c * c;
  return std::sqrt(s);
}

}  // namespace detail

inline StratumLabel assign_stratum(const SingularPointRecord& rec,
                                   const StratumThresholds& th = {}) {
  int n = rec.p2.n, m = rec.p2.kernel_dim;
  double l2 = rec.lambda2 ? rec.lambda2->value : 2.0;
  if (m <= n - 2)
    return std::abs(l2 - 2.0) <= th.anomalous_gap ? StratumLabel::sigma_m_anomalous
                                                  : StratumLabel::sigma_m;
  if (l2 < 3.0 - th.tol) return StratumLabel::sigma_top_lt3;

  StratumLabel best = StratumLabel::sigma_top_ge3;
  bool p3_nonzero = rec.p3 && detail::cubic_norm(*rec.p3) > th.p_nonzero;
  if (rec.dichotomy && rec.dichotomy->harmonic_wins && p3_nonzero && l2 <= 3.0 + th.tol)
    best = StratumLabel::sigma_top_3rd;
  if (rec.lambda3 && rec.lambda3->value >= 4.0 - th.tol) {
    best = StratumLabel::sigma_top_ge4;
    bool p4_nonzero = rec.p4 && detail::dpoly_norm(*rec.p4) > th.p_nonzero;
    if (p4_nonzero && rec.lambda3->value <= 4.0 + th.tol) best = StratumLabel::sigma_top_4th;
    if (rec.lambda4 && rec.lambda4->value >= rec.lambda4->gamma - th.tol)
      best = StratumLabel::sigma_star_candidate;
  }
  return best;
}

/// Structural invariants: frequencies above the universal floor, sublabels
/// only on the top stratum, and every finer label passing the coarser gates.
inline void validate_record(const SingularPointRecord& rec, const StratumThresholds& th = {}) {
  int n = rec.p2.n, m = rec.p2.kernel_dim;
  if (rec.lambda2 && rec.lambda2->value < 2.0 - th.anomalous_gap - 1e-9)
    throw std::logic_error("singular-point record: lambda2 below 2");
  bool top = rec.stratum != StratumLabel::sigma_m &&
             rec.stratum != StratumLabel::sigma_m_anomalous;
  if (top && m != n - 1)
    throw std::logic_error(
        "singular-point record: top-stratum label requires kernel dimension n-1");
  auto l = [&](const std::optional<FrequencyEstimate>& f) {
    return f ? f->value : -std::numeric_limits<double>::infinity();
  };
  switch (rec.stratum) {
    case StratumLabel::sigma_star_candidate:
      if (!rec.lambda4 || rec.lambda4->value < rec.lambda4->gamma - th.tol)
        throw std::logic_error("singular-point record: Sigma* label without lambda4 evidence");
      [[fallthrough]];
    case StratumLabel::sigma_top_4th:
    case StratumLabel::sigma_top_ge4:
      if (l(rec.lambda3) < 4.0 - th.tol)
        throw std::logic_error("singular-point record: >=4 label without lambda3 evidence");
      [[fallthrough]];
    case StratumLabel::sigma_top_3rd:
    case StratumLabel::sigma_top_ge3:
      if (l(rec.lambda2) < 3.0 - th.tol)
        throw std::logic_error("singular-point record: >=3 label without lambda2 evidence");
      break;
    case StratumLabel::sigma_top_lt3:
      if (l(rec.lambda2) >= 3.0 + th.tol)
        throw std::logic_error("singular-point record: <3 label with lambda2 >= 3");
      break;
    case StratumLabel::sigma_m:
    case StratumLabel::sigma_m_anomalous:
      break;
  }
}

// ---------------------------------------------------------------------------
// Full pipeline: analyze a singular point and classify a free-boundary point.

inline SingularPointRecord analyze_singular_point(const ScalarField& u,
                                                  std::span<const double> x0, double t = 0,
                                                  const FitOptions& opt = {},
                                                  const StratumThresholds& th = {}) {
  int n = u.grid.dim();
  auto [r_min, r_fit] = detail::fit_window(u.grid, x0, opt);

  SingularPointRecord rec;
  rec.x0.assign(x0.begin(), x0.end());
  rec.t = t;
  P2Fit p2fit = fit_p2(u, x0, opt);
  rec.p2 = p2fit.p2;
  rec.p2_misfit = p2fit.misfit;
  rec.frame = rec.p2.frame;

  // Node-exact residual w = u - p2; if it vanishes at every node in the fit
  // window, all higher-order quantities saturate and are reported as formal.
  Eigen::MatrixXd A = rec.p2.A;
  auto quad = [&, n](std::span<const double> y) {
    Eigen::Map<const Eigen::VectorXd> ym(y.data(), n);
    return 0.5 * ym.dot(A * ym);
  };
  ScalarField w2 = residual_field(u, x0, quad);
  double wmax = 0, umax = 0;
  for_each_node(u.grid, [&](std::size_t flat, auto, std::span<const double> x) {
    double rr = 0;
    for (int i = 0; i < n; ++i) rr += (x[i] - x0[i]) * (x[i] - x0[i]);
    if (rr > r_fit * r_fit) return;
    wmax = std::max(wmax, std::abs(w2.values[flat]));
    umax = std::max(umax, std::abs(u.values[flat]));
  });
  bool top = rec.p2.kernel_dim == n - 1;
  if (wmax <= 1e-12 * std::max(1.0, umax)) {
    rec.degenerate = "degenerate (w == 0)";
    rec.lambda2 = FrequencyEstimate{opt.gamma2, 0.0, opt.gamma2};
    if (top) {
      rec.p3 = make_p3(n, std::vector<Rat>(n, Rat(0)));
      rec.dichotomy = DichotomyReport{0, 0, 0, true};
      rec.ansatz = build_ansatz(make_p2(Eigen::MatrixXd(
                                    Eigen::VectorXd::Unit(n, n - 1).asDiagonal())),
                                *rec.p3);
      rec.lambda3 = FrequencyEstimate{opt.gamma3, 0.0, opt.gamma3};
      rec.p4 = DPoly(n);
      rec.lambda4 = FrequencyEstimate{opt.gamma4, 0.0, opt.gamma4};
    }
    rec.stratum = assign_stratum(rec, th);
    return rec;
  }

  rec.lambda2 = detail::truncated_frequency(w2, x0, r_min, r_fit, opt.gamma2, opt);

  if (top && rec.lambda2->value >= 3.0 - opt.lambda_tol) {
    P3Fit p3fit = fit_p3(u, x0, rec.p2, rec.lambda2->value, opt);
    rec.p3 = p3fit.p3;
    rec.p3_misfit = p3fit.misfit;
    rec.monneau_drift = p3fit.monneau_drift;
    rec.frame = p3fit.frame;
    rec.dichotomy = cubic_dichotomy(u, x0, rec.p2, opt);

    // Fourth-order ansatz in the fit frame, where p2 is canonical.
    rec.ansatz = build_ansatz(
        make_p2(Eigen::MatrixXd(Eigen::VectorXd::Unit(n, n - 1).asDiagonal())), *rec.p3);
    Poly P = *rec.ansatz;
    Eigen::MatrixXd F = rec.frame;
    auto ansatz_model = [&, n](std::span<const double> y) {
      Eigen::Map<const Eigen::VectorXd> ym(y.data(), n);
      Eigen::VectorXd z = F.transpose() * ym;
      std::vector<double> zv(z.data(), z.data() + n);
      return P.eval(zv);
    };
    ScalarField w4 = residual_field(u, x0, ansatz_model);
    rec.lambda3 = detail::truncated_frequency(w4, x0, r_min, r_fit, opt.gamma3, opt);

    if (rec.lambda3->value >= 4.0 - opt.lambda_tol) {
      P4Fit p4fit = fit_p4(u, x0, P, rec.frame, opt);
      rec.p4 = p4fit.p4;
      rec.p4_misfit = p4fit.misfit;
      rec.lambda4 = p4fit.lambda4;
      if (!p4fit.degenerate.empty()) rec.degenerate = p4fit.degenerate;
    }
  }
  rec.stratum = assign_stratum(rec, th);
  return rec;
}

/// Classify a free-boundary point of a solved problem as regular (half-space
/// model) or singular (quadratic model), by comparing normalized misfits on
/// the fit annulus. Margins below margin_min are reported as ambiguous.
inline Classification classify_point(const Solution& sol, std::span<const double> x0,
                                     double t = 0, const FitOptions& opt = {},
                                     const StratumThresholds& th = {}) {
  const Grid& g = sol.u.grid;
  double h = detail::max_spacing(g);
  auto fb = free_boundary(sol);
  double dist = std::numeric_limits<double>::infinity();
  for (const auto& p : fb) {
    double rr = 0;
    for (int i = 0; i < g.dim(); ++i) rr += (p[i] - x0[i]) * (p[i] - x0[i]);
    dist = std::min(dist, std::sqrt(rr));
  }
  if (!(dist <= 1.01 * h))
    throw std::invalid_argument(
        "classify_point: x0 is not within one grid cell of the free boundary");

  auto [r_min, r_fit] = detail::fit_window(g, x0, opt);
  detail::NodeCloud cloud = detail::annulus_cloud(sol.u, x0, r_min, r_fit);
  HalfspaceFit hs = fit_halfspace(cloud, opt.order);
  P2Fit p2 = detail::fit_p2_cloud(cloud, opt.kernel_snap);

  Classification out;
  out.halfspace_misfit = hs.misfit;
  out.p2_misfit = p2.misfit;
  out.direction = hs.e;
  double worst = std::max(hs.misfit, p2.misfit);
  out.margin = worst > 0 ? (worst - std::min(hs.misfit, p2.misfit)) / worst : 0.0;
  if (out.margin < opt.margin_min) {
    out.kind = PointKind::ambiguous;
    return out;
  }
  if (hs.misfit <= p2.misfit) {
    out.kind = PointKind::regular;
    return out;
  }
  out.kind = PointKind::singular;
  out.record = analyze_singular_point(sol.u, x0, t, opt, th);
  return out;
}

// ---------------------------------------------------------------------------
// Contact geometry measurements around a singular point.

/// Largest |(x - x0) . n_dir| over contact nodes in B_r(x0); 0 if none.
inline double contact_thickness(const Solution& sol, std::span<const double> x0,
                                std::span<const double> n_dir, double r) {
  const Grid& g = sol.u.grid;
  double out = 0;
  for_each_node(g, [&](std::size_t flat, auto, std::span<const double> x) {
    if (!sol.contact_mask[flat]) return;
    double rr = 0, t = 0;
    for (int i = 0; i < g.dim(); ++i) {
      rr += (x[i] - x0[i]) * (x[i] - x0[i]);
      t += (x[i] - x0[i]) * n_dir[i];
    }
    if (rr <= r * r) out = std::max(out, std::abs(t));
  });
  return out;
}

/// Fraction of grid nodes in B_r(x0) that are contact nodes.
inline double contact_fraction(const Solution& sol, std::span<const double> x0, double r) {
  const Grid& g = sol.u.grid;
  std::size_t inside = 0, contact = 0;
  for_each_node(g, [&](std::size_t flat, auto, std::span<const double> x) {
    double rr = 0;
    for (int i = 0; i < g.dim(); ++i) rr += (x[i] - x0[i]) * (x[i] - x0[i]);
    if (rr > r * r) return;
    ++inside;
    if (sol.contact_mask[flat]) ++contact;
  });
  return inside ? (double)contact / (double)inside : 0.0;
}

// ---------------------------------------------------------------------------
// Cleaning experiment over a monotone solution family.

struct CleaningReport {
  std::vector<double> x0;
  std::vector<double> radii;
  std::vector<double> t_clear;      // +inf where the family never clears B_r
  std::vector<double> barrier_min;  // min over D_r of u(t_max) - u(t_base)
  double exponent_s = 0;            // log-log slope of t_clear against r
  double exponent_residual = 0;
  int usable = 0;                   // radii with finite positive t_clear
  double growth_constant = 0;       // realized c in min_{D_r}(u^t - u^0) >= c r (t - t0)

  nlohmann::json to_json() const;
};

/// For each radius, the smallest family parameter whose solution has no
/// contact node in B_r(x0) (binary search; contact sets shrink along the
/// family). D_r is the part of the sphere of radius r at angle at least
/// arcsin(1/sqrt(2n)) from the plane {y . n_dir = 0}, with n_dir the
/// nondegenerate direction of the record's p2.
inline CleaningReport cleaning_experiment(const SolutionFamily& fam,
                                          const SingularPointRecord& rec,
                                          std::vector<double> radii, int order = 32) {
  if (fam.solutions.empty()) throw std::invalid_argument("cleaning_experiment: empty family");
  const Grid& g = fam.solutions.front().u.grid;
  int n = g.dim();
  bool radii_ok = !radii.empty() && radii.front() > 0;
  for (std::size_t i = 0; radii_ok && i + 1 < radii.size(); ++i)
    radii_ok = radii[i] < radii[i + 1];
  if (!radii_ok)
    throw std::invalid_argument(
        "cleaning_experiment: radii must be positive and strictly increasing");
  if (radii.back() > detail::box_clearance(g, rec.x0))
    throw std::invalid_argument("cleaning_experiment: largest radius leaves the box");

  auto cleared = [&](std::size_t k, double r) {
    bool any = false;
    for_each_node(g, [&](std::size_t flat, auto, std::span<const double> x) {
      if (any || !fam.solutions[k].contact_mask[flat]) return;
      double rr = 0;
      for (int i = 0; i < n; ++i) rr += (x[i] - rec.x0[i]) * (x[i] - rec.x0[i]);
      if (rr <= r * r) any = true;
    });
    return !any;
  };

  Eigen::VectorXd n_dir = rec.p2.frame.col(n - 1);
  auto sph = sphere_rule(n, order);
  auto barrier = [&](const Solution& a, const Solution& b, double r) {
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> x(n);
    double cut = r / std::sqrt(2.0 * n);
    for (const auto& node : sph.nodes) {
      double t = 0;
      for (int d = 0; d < n; ++d) t += node[d] * n_dir[d];
      if (std::abs(t) * r <= cut) continue;
      for (int d = 0; d < n; ++d) x[d] = rec.x0[d] + r * node[d];
      best = std::min(best, interpolate(a.u, x) - interpolate(b.u, x));
    }
    return best;
  };

  CleaningReport rep;
  rep.x0 = rec.x0;
  rep.radii = radii;
  const double inf = std::numeric_limits<double>::infinity();
  std::size_t last = fam.solutions.size() - 1;
  for (double r : radii) {
    if (!cleared(last, r)) {
      rep.t_clear.push_back(inf);
    } else {
      std::size_t lo = 0, hi = last;  // not cleared at lo (else t_clear = t0)
      if (cleared(0, r)) {
        rep.t_clear.push_back(fam.t_values[0]);
      } else {
        while (hi - lo > 1) {
          std::size_t mid = (lo + hi) / 2;
          (cleared(mid, r) ? hi : lo) = mid;
        }
        rep.t_clear.push_back(fam.t_values[hi]);
      }
    }
    rep.barrier_min.push_back(barrier(fam.solutions[last], fam.solutions[0], r));
  }

  // Realized growth constant over all later family members and radii.
  double c_real = std::numeric_limits<double>::infinity();
  for (double r : radii)
    for (std::size_t k = 1; k <= last; ++k) {
      double dt = fam.t_values[k] - fam.t_values[0];
      if (!(dt > 0)) continue;
      c_real = std::min(c_real, barrier(fam.solutions[k], fam.solutions[0], r) / (r * dt));
    }
  rep.growth_constant = std::isfinite(c_real) ? c_real : 0.0;

  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < radii.size(); ++i)
    if (std::isfinite(rep.t_clear[i]) && rep.t_clear[i] > 0) {
      lx.push_back(std::log(radii[i]));
      ly.push_back(std::log(rep.t_clear[i]));
    }
  rep.usable = (int)lx.size();
  if (rep.usable >= 2) {
    double mx = 0, my = 0;
    for (int i = 0; i < rep.usable; ++i) {
      mx += lx[i];
      my += ly[i];
    }
    mx /= rep.usable;
    my /= rep.usable;
    double sxx = 0, sxy = 0;
    for (int i = 0; i < rep.usable; ++i) {
      sxx += (lx[i] - mx) * (lx[i] - mx);
      sxy += (lx[i] - mx) * (ly[i] - my);
    }
    rep.exponent_s = sxx > 0 ? sxy / sxx : 0.0;
    double rss = 0;
    for (int i = 0; i < rep.usable; ++i) {
      double e = ly[i] - my - rep.exponent_s * (lx[i] - mx);
      rss += e * e;
    }
    rep.exponent_residual = std::sqrt(rss / rep.usable);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// The two-bump pinch family: data with two wells at (+-b, 0) whose contact
// blobs pinch at the origin as the offset C0 crosses a critical value.

/// (1/40) x1^2 + (19/40) x2^2 + c cos(pi x1/b) cosh(pi x2/b) + C0.
/// The quadratic part has trace 1 and the oscillation is harmonic, so the
/// whole expression solves Delta v = 1 exactly; it is therefore also the
/// unconstrained solution of the discrete problem (up to O(h^2)), and its
/// two wells at (+-b, 0) really do appear in the interior. The weak x1
/// confinement keeps the far ends of the axis clear, so as C0 decreases the
/// contact blobs grow around the wells and merge at the origin, where the
/// barrier c > 0 makes the last gap close. Requires 2c > b^2/20 (wells below
/// the barrier by more than the x1 confinement).
inline double two_bump_value(std::span<const double> x, double b, double c, double C0) {
  double k = std::numbers::pi / b;
  return 0.025 * x[0] * x[0] + 0.475 * x[1] * x[1] +
         c * std::cos(k * x[0]) * std::cosh(k * x[1]) + C0;
}

struct PinchResult {
  double C0 = 0;              // offset on the still-pinched side of the bracket
  Solution base;              // solved at C0
  std::vector<double> x0;     // contact node nearest the origin (re-centered)
};

/// Bisect the data offset between "contact reaches the origin" and "a
/// neighborhood of the origin is contact-free". Solves are warm-started.
inline PinchResult find_pinch(const Grid& g, double b, double c, double C0_lo, double C0_hi,
                              const SolverParams& params = {}, int bisections = 30) {
  if (g.dim() != 2) throw std::invalid_argument("find_pinch: the two-bump family is planar");
  double h = detail::max_spacing(g);
  auto solve_at = [&](double C0, const ScalarField* warm) {
    // make_problem samples the datum on boundary nodes only; the interior is
    // reconstructed by the solver, so the wells at (+-b, 0) emerge from the
    // discrete equation rather than from pointwise samples of the datum.
    auto p = make_problem(
        g, [&](std::span<const double> x) { return two_bump_value(x, b, c, C0); }, params);
    return solve_obstacle(p, warm);
  };
  auto origin_clear = [&](const Solution& s) {
    bool contact = false;
    for_each_node(g, [&](std::size_t flat, auto, std::span<const double> x) {
      if (contact || !s.contact_mask[flat]) return;
      if (x[0] * x[0] + x[1] * x[1] <= (2 * h) * (2 * h)) contact = true;
    });
    return !contact;
  };

  Solution lo_sol = solve_at(C0_lo, nullptr);
  if (origin_clear(lo_sol))
    throw std::invalid_argument("find_pinch: bracket does not straddle the pinch (low side clear)");
  Solution hi_sol = solve_at(C0_hi, &lo_sol.u);
  if (!origin_clear(hi_sol))
    throw std::invalid_argument(
        "find_pinch: bracket does not straddle the pinch (high side pinned)");

  double lo = C0_lo, hi = C0_hi;
  for (int i = 0; i < bisections; ++i) {
    double mid = 0.5 * (lo + hi);
    Solution s = solve_at(mid, &lo_sol.u);
    if (origin_clear(s)) {
      hi = mid;
    } else {
      lo = mid;
      lo_sol = std::move(s);
    }
  }

  PinchResult out;
  out.C0 = lo;
  out.base = std::move(lo_sol);
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> bx(2, 0.0);
  for_each_node(g, [&](std::size_t flat, auto, std::span<const double> x) {
    if (!out.base.contact_mask[flat]) return;
    double rr = x[0] * x[0] + x[1] * x[1];
    if (rr < best) {
      best = rr;
      bx.assign(x.begin(), x.end());
    }
  });
  out.x0 = bx;
  return out;
}

// ---------------------------------------------------------------------------
// Serialization.

namespace detail {

inline nlohmann::json matrix_json(const Eigen::MatrixXd& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json freq_json(const std::optional<FrequencyEstimate>& f) {
  if (!f) return nullptr;
  return {{"value", f->value}, {"residual", f->residual}, {"gamma", f->gamma}};
}

inline nlohmann::json finite_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

}  // namespace detail

inline nlohmann::json SingularPointRecord::to_json() const {
  nlohmann::json j;
  j["x0"] = x0;
  j["t"] = t;
  j["m"] = p2.kernel_dim;
  j["p2"] = {{"A", detail::matrix_json(p2.A)},
             {"eigenvalues", std::vector<double>(p2.eigenvalues.data(),
                                                 p2.eigenvalues.data() + p2.n)},
             {"misfit", p2_misfit}};
  j["frame"] = detail::matrix_json(frame);
  j["lambda2"] = detail::freq_json(lambda2);
  j["lambda3"] = detail::freq_json(lambda3);
  j["lambda4"] = detail::freq_json(lambda4);
  if (p3) {
    std::vector<double> a;
    for (const Rat& v : p3->a) a.push_back((double)v);
    j["p3"] = {{"a", a}, {"misfit", p3_misfit}, {"monneau_drift", monneau_drift}};
  } else {
    j["p3"] = nullptr;
  }
  if (dichotomy) {
    j["dichotomy"] = {{"harmonic_misfit", dichotomy->harmonic_misfit},
                      {"qA_misfit", dichotomy->qA_misfit},
                      {"margin", dichotomy->margin},
                      {"harmonic_wins", dichotomy->harmonic_wins}};
  } else {
    j["dichotomy"] = nullptr;
  }
  j["ansatz"] = ansatz ? ansatz->to_json() : nlohmann::json(nullptr);
  if (p4) {
    j["p4"] = {{"poly", p4->to_json()}, {"misfit", p4_misfit}};
  } else {
    j["p4"] = nullptr;
  }
  j["degenerate"] = degenerate;
  j["stratum"] = to_string(stratum);
  return j;
}

inline nlohmann::json CleaningReport::to_json() const {
  nlohmann::json j;
  j["x0"] = x0;
  j["radii"] = radii;
  nlohmann::json tc = nlohmann::json::array();
  for (double v : t_clear) tc.push_back(detail::finite_or_null(v));
  j["t_clear"] = tc;
  nlohmann::json bm = nlohmann::json::array();
  for (double v : barrier_min) bm.push_back(detail::finite_or_null(v));
  j["barrier_min"] = bm;
  j["exponent_s"] = exponent_s;
  j["exponent_residual"] = exponent_residual;
  j["usable"] = usable;
  j["growth_constant"] = growth_constant;
  return j;
}

/// Flat CSV: one row per record with the headline quantities.
inline void records_to_csv(std::ostream& os, std::span<const SingularPointRecord> recs) {
  if (recs.empty()) {
    os << "t,m,lambda2,lambda3,lambda4,stratum\n";
    return;
  }
  int n = recs.front().p2.n;
  for (int i = 0; i < n; ++i) os << "x0_" << i << ",";
  os << "t,m,lambda2,lambda3,lambda4,stratum\n";
  auto num = [&](const std::optional<FrequencyEstimate>& f) {
    return f ? detail::fmt_num(f->value) : std::string("nan");
  };
  for (const auto& r : recs) {
    for (int i = 0; i < n; ++i) os << detail::fmt_num(r.x0[i]) << ",";
    os << detail::fmt_num(r.t) << "," << r.p2.kernel_dim << "," << num(r.lambda2) << ","
       << num(r.lambda3) << "," << num(r.lambda4) << "," << to_string(r.stratum) << "\n";
  }
}

}  // namespace fblab
