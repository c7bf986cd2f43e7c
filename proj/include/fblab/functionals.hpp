#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fblab/grid.hpp"
#include "fblab/poly.hpp"
#include "fblab/quadrature.hpp"
#include "fblab/signorini.hpp"

namespace fblab {

/// A function the monotonicity functionals can consume: value everywhere,
/// gradient for D, and (optionally) a Laplacian route for E. Solver output
/// supplies the exact identity Delta w = -chi_{u=0}; analytic inputs supply
/// exact derivatives; plain fields fall back to centered differences.
struct FunctionalInput {
  int n = 0;
  std::function<double(std::span<const double>)> value;
  std::function<void(std::span<const double>, std::span<double>)> gradient;
  std::function<double(std::span<const double>)> laplacian;  // null: E unavailable
};

template <class C>
FunctionalInput make_input(const PolyT<C>& p) {
  int n = p.dim();
  auto grads = std::make_shared<std::vector<PolyT<C>>>();
  for (int i = 0; i < n; ++i) grads->push_back(p.dx(i));
  auto lap = std::make_shared<PolyT<C>>(p.laplacian());
  FunctionalInput in;
  in.n = n;
  in.value = [p](std::span<const double> x) { return p.eval(x); };
  in.gradient = [grads, n](std::span<const double> x, std::span<double> g) {
    for (int i = 0; i < n; ++i) g[i] = (*grads)[i].eval(x);
  };
  in.laplacian = [lap](std::span<const double> x) { return lap->eval(x); };
  return in;
}

inline FunctionalInput make_input(const SignoriniSolution& q) {
  int n = q.n;
  // Differentiating the stored polynomials per evaluation dominates the cost
  // of high-order quadrature, so cache the derivative polynomials up front.
  auto even_dx = std::make_shared<std::vector<Poly>>();
  auto odd_dx = std::make_shared<std::vector<Poly>>();
  for (int i = 0; i < n; ++i) {
    even_dx->push_back(q.even_upper.dx(i));
    odd_dx->push_back(q.odd_part.dx(i));
  }
  FunctionalInput in;
  in.n = n;
  in.value = [q](std::span<const double> x) { return q.eval(x); };
  in.gradient = [q, even_dx, odd_dx](std::span<const double> x, std::span<double> g) {
    int n = q.n;
    double sgn = x[n - 1] >= 0 ? 1.0 : -1.0;
    for (int i = 0; i < n; ++i) g[i] = 0.0;
    if (q.polar) {
      std::complex<double> w(x[n - 2], std::abs(x[n - 1]));
      auto dw = q.lambda * std::pow(w, q.lambda - 1);
      g[n - 2] += q.polar_amp * dw.real();
      g[n - 1] += sgn * q.polar_amp * (-dw.imag());
    } else {
      std::vector<double> y(x.begin(), x.end());
      y[n - 1] = std::abs(y[n - 1]);
      for (int i = 0; i < n; ++i)
        g[i] += (i == n - 1 ? sgn : 1.0) * (*even_dx)[i].eval(y);
    }
    for (int i = 0; i < n; ++i) g[i] += (*odd_dx)[i].eval(x);
  };
  // Harmonic off the plane; the plane itself is quadrature-null.
  in.laplacian = [](std::span<const double>) { return 0.0; };
  return in;
}

/// Centered-difference gradient fields, one-sided where the contact mask
/// flips across the stencil (and at the box boundary).
inline std::vector<ScalarField> gradient_fields(const ScalarField& w,
                                                const std::vector<std::uint8_t>* contact) {
  const Grid& g = w.grid;
  int n = g.dim();
  std::vector<ScalarField> out(n, ScalarField(g));
  for_each_node(g, [&](std::size_t flat, std::span<const std::size_t> idx, auto) {
    std::vector<std::size_t> im(idx.begin(), idx.end()), ip(idx.begin(), idx.end());
    for (int d = 0; d < n; ++d) {
      double h = g.spacing(d);
      std::size_t i = idx[d];
      std::size_t last = g.resolution()[d] - 1;
      double deriv;
      if (i == 0) {
        ip[d] = 1;
        deriv = (w.at(ip) - w.values[flat]) / h;
      } else if (i == last) {
        im[d] = last - 1;
        deriv = (w.values[flat] - w.at(im)) / h;
      } else {
        im[d] = i - 1;
        ip[d] = i + 1;
        std::size_t fm = g.flat_index(im), fp = g.flat_index(ip);
        bool mixed_m = contact && (*contact)[fm] != (*contact)[flat];
        bool mixed_p = contact && (*contact)[fp] != (*contact)[flat];
        if (mixed_p && !mixed_m)
          deriv = (w.values[flat] - w.values[fm]) / h;
        else if (mixed_m && !mixed_p)
          deriv = (w.values[fp] - w.values[flat]) / h;
        else
          deriv = (w.values[fp] - w.values[fm]) / (2 * h);
      }
      out[d].values[flat] = deriv;
      im[d] = i;
      ip[d] = i;
    }
  });
  return out;
}

/// Field input with the exact Laplacian route Delta w = -chi (chi sampled as
/// a 0/1 field and interpolated). Pass chi = nullptr for a centered-difference
/// Laplacian instead.
inline FunctionalInput make_input(const ScalarField& w, const ScalarField* chi,
                                  const std::vector<std::uint8_t>* contact = nullptr) {
  int n = w.grid.dim();
  auto wp = std::make_shared<ScalarField>(w);
  auto grads = std::make_shared<std::vector<ScalarField>>(gradient_fields(w, contact));
  FunctionalInput in;
  in.n = n;
  in.value = [wp](std::span<const double> x) { return interpolate(*wp, x); };
  in.gradient = [grads, n](std::span<const double> x, std::span<double> g) {
    for (int i = 0; i < n; ++i) g[i] = interpolate((*grads)[i], x);
  };
  if (chi) {
    auto cp = std::make_shared<ScalarField>(*chi);
    in.laplacian = [cp](std::span<const double> x) { return -interpolate(*cp, x); };
  } else {
    const Grid& g = w.grid;
    ScalarField lap(g);
    for_each_node(g, [&](std::size_t flat, std::span<const std::size_t> idx, auto) {
      double s = 0;
      std::vector<std::size_t> jm(idx.begin(), idx.end()), jp(idx.begin(), idx.end());
      for (int d = 0; d < n; ++d) {
        double h = g.spacing(d);
        std::size_t i = idx[d], last = g.resolution()[d] - 1;
        std::size_t a = i == 0 ? 1 : i - 1;
        std::size_t b = i == last ? last - 1 : i + 1;
        // At the boundary this clamps to the inner stencil; functionals only
        // evaluate strictly inside where the centered form applies.
        jm[d] = a;
        jp[d] = b;
        s += (w.at(jm) + w.at(jp) - 2 * w.values[flat]) / (h * h);
        jm[d] = i;
        jp[d] = i;
      }
      lap.values[flat] = s;
    });
    auto lp = std::make_shared<ScalarField>(std::move(lap));
    in.laplacian = [lp](std::span<const double> x) { return interpolate(*lp, x); };
  }
  return in;
}

inline FunctionalInput make_input(const ScalarField& w) { return make_input(w, nullptr); }

// ---------------------------------------------------------------------------
// The dimensionless quantities and monotonicity functionals.

/// H(r, w) = r^{1-n} integral_{dB_r(x0)} w^2.
inline double H_functional(const FunctionalInput& w, std::span<const double> x0,
                           double r, const QuadratureRule& sph) {
  auto f = [&](std::span<const double> x) {
    double v = w.value(x);
    return v * v;
  };
  return std::pow(r, 1 - w.n) * sphere_integral(f, x0, r, sph);
}

/// D(r, w) = r^{2-n} integral_{B_r(x0)} |grad w|^2.
inline double D_functional(const FunctionalInput& w, std::span<const double> x0,
                           double r, const QuadratureRule& ball) {
  std::vector<double> g(w.n);
  auto f = [&](std::span<const double> x) {
    w.gradient(x, g);
    double s = 0;
    for (double v : g) s += v * v;
    return s;
  };
  return std::pow(r, 2 - w.n) * ball_integral(f, x0, r, ball);
}

inline double phi(double Dv, double Hv) {
  if (!(Hv > 0))
    throw std::domain_error("phi: zero boundary norm (H = 0); use phi_gamma instead");
  return Dv / Hv;
}

inline double phi_gamma(double Dv, double Hv, double r, double gamma) {
  double t = std::pow(r, 2 * gamma);
  return (Dv + gamma * t) / (Hv + t);
}

inline double weiss(double Dv, double Hv, double r, double lambda) {
  return std::pow(r, -2 * lambda) * (Dv - lambda * Hv);
}

struct EIntegrals {
  double I1 = 0;  // r^{2-n} integral w Delta w
  double I2 = 0;  // r^{2-n} integral ((x - x0) . grad w) Delta w
};

inline EIntegrals e_integrals(const FunctionalInput& w, std::span<const double> x0,
                              double r, const QuadratureRule& ball) {
  if (!w.laplacian)
    throw std::invalid_argument("E: input has no Laplacian route");
  std::vector<double> g(w.n);
  auto f1 = [&](std::span<const double> x) { return w.value(x) * w.laplacian(x); };
  auto f2 = [&](std::span<const double> x) {
    w.gradient(x, g);
    double s = 0;
    for (int i = 0; i < w.n; ++i) s += (x[i] - x0[i]) * g[i];
    return s * w.laplacian(x);
  };
  double scale = std::pow(r, 2 - w.n);
  return {scale * ball_integral(f1, x0, r, ball), scale * ball_integral(f2, x0, r, ball)};
}

/// E = (r^{2-n} int w Dw) D - (r^{2-n} int ((x-x0).grad w) Dw) H.
inline double E_functional(const EIntegrals& e, double Dv, double Hv) {
  return e.I1 * Dv - e.I2 * Hv;
}

/// E^gamma: same combination with D + gamma r^{2 gamma} and H + r^{2 gamma}.
inline double E_gamma_functional(const EIntegrals& e, double Dv, double Hv, double r,
                                 double gamma) {
  double t = std::pow(r, 2 * gamma);
  return e.I1 * (Dv + gamma * t) - e.I2 * (Hv + t);
}

// Convenience one-shot forms.
inline double H_functional(const FunctionalInput& w, std::span<const double> x0,
                           double r, int order = 32) {
  return H_functional(w, x0, r, sphere_rule(w.n, order));
}
inline double D_functional(const FunctionalInput& w, std::span<const double> x0,
                           double r, int order = 32) {
  return D_functional(w, x0, r, ball_rule(w.n, order));
}
inline double phi(const FunctionalInput& w, std::span<const double> x0, double r,
                  int order = 32) {
  return phi(D_functional(w, x0, r, order), H_functional(w, x0, r, order));
}
inline double phi_gamma(const FunctionalInput& w, std::span<const double> x0, double r,
                        double gamma, int order = 32) {
  return phi_gamma(D_functional(w, x0, r, order), H_functional(w, x0, r, order), r, gamma);
}
inline double weiss(const FunctionalInput& w, std::span<const double> x0, double r,
                    double lambda, int order = 32) {
  return weiss(D_functional(w, x0, r, order), H_functional(w, x0, r, order), r, lambda);
}
inline double E_functional(const FunctionalInput& w, std::span<const double> x0,
                           double r, int order = 32) {
  auto ball = ball_rule(w.n, order);
  return E_functional(e_integrals(w, x0, r, ball), D_functional(w, x0, r, ball),
                      H_functional(w, x0, r, sphere_rule(w.n, order)));
}
inline double E_gamma_functional(const FunctionalInput& w, std::span<const double> x0,
                                 double r, double gamma, int order = 32) {
  auto ball = ball_rule(w.n, order);
  return E_gamma_functional(e_integrals(w, x0, r, ball),
                            D_functional(w, x0, r, ball),
                            H_functional(w, x0, r, sphere_rule(w.n, order)), r, gamma);
}

// ---------------------------------------------------------------------------
// Frequency profiles across geometric radii.

struct ProfileRecord {
  double r = 0, H = 0, D = 0;
  std::optional<double> phi;  // absent when H = 0
  std::vector<double> phi_gamma;  // aligned with FrequencyProfile::gammas
  std::vector<double> weiss;      // aligned with FrequencyProfile::lambdas
  std::optional<double> E;        // absent without a Laplacian route
  std::vector<double> e_gamma;
  double monneau = 0;  // r^{-6} H
};

struct FrequencyProfile {
  std::vector<double> x0;
  std::vector<double> gammas, lambdas;
  std::vector<ProfileRecord> records;  // radii strictly decreasing
  double eps_slack = 1e-6;
  bool phi_monotone = true;  // nondecreasing in r, up to eps_slack
  std::vector<bool> weiss_monotone;
};

struct ProfileOptions {
  double theta = 0.9;
  double r_min = 0;  // fields: pass 4h
  std::vector<double> gammas, lambdas;
  int order = 32;
  double eps_slack = 1e-6;  // 1e-6 + 10 h for grid-backed inputs
  int max_radii = 200;
};

inline double default_eps_slack(double h) { return 1e-6 + 10.0 * h; }

inline FrequencyProfile profile(const FunctionalInput& w, std::span<const double> x0,
                                double r_max, const ProfileOptions& opt) {
  if (!(opt.theta > 0 && opt.theta < 1))
    throw std::invalid_argument("profile: theta must be in (0,1)");
  if (!(r_max > 0) || r_max < opt.r_min)
    throw std::invalid_argument("profile: need 0 < r_min <= r_max");

  auto sph = sphere_rule(w.n, opt.order);
  auto ball = ball_rule(w.n, opt.order);

  FrequencyProfile p;
  p.x0.assign(x0.begin(), x0.end());
  p.gammas = opt.gammas;
  p.lambdas = opt.lambdas;
  p.eps_slack = opt.eps_slack;

  double r = r_max;
  for (int k = 0; k < opt.max_radii && r >= opt.r_min && r > 0; ++k, r = r_max * std::pow(opt.theta, k)) {
    ProfileRecord rec;
    rec.r = r;
    rec.H = H_functional(w, x0, r, sph);
    rec.D = D_functional(w, x0, r, ball);
    if (rec.H > 0) rec.phi = rec.D / rec.H;
    for (double g : p.gammas) rec.phi_gamma.push_back(phi_gamma(rec.D, rec.H, r, g));
    for (double l : p.lambdas) rec.weiss.push_back(weiss(rec.D, rec.H, r, l));
    if (w.laplacian) {
      auto e = e_integrals(w, x0, r, ball);
      rec.E = E_functional(e, rec.D, rec.H);
      for (double g : p.gammas) rec.e_gamma.push_back(E_gamma_functional(e, rec.D, rec.H, r, g));
    }
    rec.monneau = std::pow(r, -6) * rec.H;
    p.records.push_back(std::move(rec));
  }
  if (p.records.size() < 2)
    throw std::invalid_argument("profile: fewer than two radii between r_min and r_max");

  // Monotone in r means: larger radius, larger value (records run downward).
  for (std::size_t i = 0; i + 1 < p.records.size(); ++i) {
    const auto& big = p.records[i];
    const auto& small = p.records[i + 1];
    if (big.phi && small.phi && *big.phi < *small.phi - p.eps_slack) p.phi_monotone = false;
  }
  for (std::size_t j = 0; j < p.lambdas.size(); ++j) {
    bool mono = true;
    for (std::size_t i = 0; i + 1 < p.records.size(); ++i)
      if (p.records[i].weiss[j] < p.records[i + 1].weiss[j] - p.eps_slack) mono = false;
    p.weiss_monotone.push_back(mono);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Zero-radius extrapolation by fitting quantity(r) = a + b r^c on the tail.

struct Extrapolation {
  double value = 0;     // a
  double residual = 0;  // rms misfit over the tail
  double b = 0, c = 1;
  bool monotone_tail = true;
};

namespace detail {

inline double fit_abc_residual(const std::vector<double>& r, const std::vector<double>& y,
                               double c, double& a, double& b) {
  // Linear least squares for (a, b) at fixed exponent c.
  double s1 = 0, sx = 0, sxx = 0, sy = 0, sxy = 0;
  std::size_t m = r.size();
  for (std::size_t i = 0; i < m; ++i) {
    double x = std::pow(r[i], c);
    s1 += 1;
    sx += x;
    sxx += x * x;
    sy += y[i];
    sxy += x * y[i];
  }
  double det = s1 * sxx - sx * sx;
  if (std::abs(det) < 1e-300) {
    a = sy / s1;
    b = 0;
  } else {
    a = (sy * sxx - sx * sxy) / det;
    b = (s1 * sxy - sx * sy) / det;
  }
  double rss = 0;
  for (std::size_t i = 0; i < m; ++i) {
    double e = y[i] - (a + b * std::pow(r[i], c));
    rss += e * e;
  }
  return std::sqrt(rss / m);
}

}  // namespace detail

inline Extrapolation extrapolate_tail(std::vector<double> radii, std::vector<double> values,
                                      double eps_slack) {
  if (radii.size() < 4)
    throw std::invalid_argument("extrapolation needs at least 4 usable radii");

  Extrapolation out;
  bool nondec = true, noninc = true;
  for (std::size_t i = 0; i + 1 < values.size(); ++i) {
    // radii decrease; compare along decreasing r
    if (values[i + 1] > values[i] + eps_slack) nondec = false;
    if (values[i + 1] < values[i] - eps_slack) noninc = false;
  }
  out.monotone_tail = nondec || noninc;

  double best_res = std::numeric_limits<double>::infinity();
  double best_a = values.back(), best_b = 0, best_c = 1;
  for (int k = 0; k <= 160; ++k) {
    double c = 0.05 * std::pow(8.0 / 0.05, k / 160.0);
    double a, b;
    double res = detail::fit_abc_residual(radii, values, c, a, b);
    if (res < best_res) {
      best_res = res;
      best_a = a;
      best_b = b;
      best_c = c;
    }
  }
  // Golden-section refinement around the winning exponent.
  double lo = best_c / 1.3, hi = best_c * 1.3;
  for (int it = 0; it < 60; ++it) {
    double c1 = lo + (hi - lo) * 0.382, c2 = lo + (hi - lo) * 0.618;
    double a, b;
    if (detail::fit_abc_residual(radii, values, c1, a, b) <
        detail::fit_abc_residual(radii, values, c2, a, b))
      hi = c2;
    else
      lo = c1;
  }
  {
    double a, b;
    double c = 0.5 * (lo + hi);
    double res = detail::fit_abc_residual(radii, values, c, a, b);
    if (res < best_res) {
      best_res = res;
      best_a = a;
      best_b = b;
      best_c = c;
    }
  }
  out.value = best_a;
  out.residual = best_res;
  out.b = best_b;
  out.c = best_c;
  return out;
}

/// Quantity keys: "H", "D", "phi", "E", "monneau", "phi_gamma:<g>", "weiss:<l>".
inline Extrapolation extrapolate_zero_limit(const FrequencyProfile& p,
                                            const std::string& quantity,
                                            std::size_t tail = 8) {
  auto find_index = [](const std::vector<double>& v, double key) {
    for (std::size_t i = 0; i < v.size(); ++i)
      if (std::abs(v[i] - key) < 1e-12) return i;
    throw std::invalid_argument("extrapolate_zero_limit: parameter value not in profile");
  };

  std::function<double(const ProfileRecord&)> get;
  if (quantity == "H") get = [](const ProfileRecord& r) { return r.H; };
  else if (quantity == "D") get = [](const ProfileRecord& r) { return r.D; };
  else if (quantity == "monneau") get = [](const ProfileRecord& r) { return r.monneau; };
  else if (quantity == "phi")
    get = [](const ProfileRecord& r) {
      if (!r.phi) throw std::domain_error("phi: zero boundary norm (H = 0) in profile");
      return *r.phi;
    };
  else if (quantity == "E")
    get = [](const ProfileRecord& r) {
      if (!r.E) throw std::domain_error("E unavailable: no Laplacian route");
      return *r.E;
    };
  else if (quantity.rfind("phi_gamma:", 0) == 0) {
    std::size_t i = find_index(p.gammas, std::stod(quantity.substr(10)));
    get = [i](const ProfileRecord& r) { return r.phi_gamma[i]; };
  } else if (quantity.rfind("weiss:", 0) == 0) {
    std::size_t i = find_index(p.lambdas, std::stod(quantity.substr(6)));
    get = [i](const ProfileRecord& r) { return r.weiss[i]; };
  } else {
    throw std::invalid_argument("extrapolate_zero_limit: unknown quantity " + quantity);
  }

  std::size_t m = std::min(tail, p.records.size());
  std::vector<double> radii, values;
  for (std::size_t i = p.records.size() - m; i < p.records.size(); ++i) {
    radii.push_back(p.records[i].r);
    values.push_back(get(p.records[i]));
  }
  return extrapolate_tail(std::move(radii), std::move(values), p.eps_slack);
}

// ---------------------------------------------------------------------------
// Growth sandwich diagnostics: with lambda_min <= phi <= lambda_max on [r, R],
// (R/r)^{2 lambda_min} <= H(R)/H(r) <= C_delta (R/r)^{2 lambda_max + delta}.

struct GrowthSandwich {
  double lambda_min = 0, lambda_max = 0;
  double worst_lower = std::numeric_limits<double>::infinity();  // min ratio/(R/r)^{2 lmin}
  double worst_upper = 0;                                        // max ratio/(R/r)^{2 lmax + delta}
};

inline GrowthSandwich growth_sandwich(const FrequencyProfile& p, double delta) {
  GrowthSandwich g;
  g.lambda_min = std::numeric_limits<double>::infinity();
  g.lambda_max = -std::numeric_limits<double>::infinity();
  for (const auto& rec : p.records) {
    if (!rec.phi) throw std::domain_error("growth_sandwich: H = 0 in profile");
    g.lambda_min = std::min(g.lambda_min, *rec.phi);
    g.lambda_max = std::max(g.lambda_max, *rec.phi);
  }
  for (std::size_t i = 0; i < p.records.size(); ++i)
    for (std::size_t j = i + 1; j < p.records.size(); ++j) {
      double R = p.records[i].r, r = p.records[j].r;
      double ratio = p.records[i].H / p.records[j].H;
      g.worst_lower = std::min(g.worst_lower, ratio / std::pow(R / r, 2 * g.lambda_min));
      g.worst_upper = std::max(g.worst_upper, ratio / std::pow(R / r, 2 * g.lambda_max + delta));
    }
  return g;
}

// ---------------------------------------------------------------------------
// Export.

namespace detail {
inline std::string fmt_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}
}  // namespace detail

inline void profile_to_csv(std::ostream& os, const FrequencyProfile& p) {
  os << "r,H,D,phi";
  for (double g : p.gammas) os << ",phi_gamma_" << detail::fmt_num(g);
  for (double l : p.lambdas) os << ",W_" << detail::fmt_num(l);
  os << ",E,monneau\n";
  os << std::setprecision(17);
  for (const auto& rec : p.records) {
    os << rec.r << "," << rec.H << "," << rec.D << ",";
    if (rec.phi) os << *rec.phi;
    else os << "nan";
    for (double v : rec.phi_gamma) os << "," << v;
    for (double v : rec.weiss) os << "," << v;
    os << ",";
    if (rec.E) os << *rec.E;
    else os << "nan";
    os << "," << rec.monneau << "\n";
  }
}

inline nlohmann::json profile_to_json(const FrequencyProfile& p) {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& rec : p.records) {
    nlohmann::json j{{"r", rec.r}, {"H", rec.H}, {"D", rec.D}, {"monneau", rec.monneau}};
    if (rec.phi) j["phi"] = *rec.phi;
    if (rec.E) j["E"] = *rec.E;
    for (std::size_t i = 0; i < p.gammas.size(); ++i)
      j["phi_gamma_" + detail::fmt_num(p.gammas[i])] = rec.phi_gamma[i];
    for (std::size_t i = 0; i < p.lambdas.size(); ++i)
      j["W_" + detail::fmt_num(p.lambdas[i])] = rec.weiss[i];
    for (std::size_t i = 0; i < rec.e_gamma.size(); ++i)
      j["E_gamma_" + detail::fmt_num(p.gammas[i])] = rec.e_gamma[i];
    recs.push_back(std::move(j));
  }
  nlohmann::json out{{"x0", p.x0},
                     {"eps_slack", p.eps_slack},
                     {"phi_monotone", p.phi_monotone},
                     {"records", std::move(recs)}};
  for (std::size_t i = 0; i < p.lambdas.size(); ++i)
    out["weiss_monotone_" + detail::fmt_num(p.lambdas[i])] = (bool)p.weiss_monotone[i];
  bool has_phi = true;
  for (const auto& rec : p.records) has_phi = has_phi && rec.phi.has_value();
  if (has_phi && p.records.size() >= 4) {
    auto ex = extrapolate_zero_limit(p, "phi");
    out["phi_limit"] = ex.value;
    out["phi_limit_residual"] = ex.residual;
    out["phi_limit_monotone_tail"] = ex.monotone_tail;
    auto mo = extrapolate_zero_limit(p, "monneau");
    out["monneau_limit"] = mo.value;
    out["monneau_limit_residual"] = mo.residual;
  }
  return out;
}

}  // namespace fblab
