#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fblab/moments.hpp"
#include "fblab/poly.hpp"
#include "fblab/quadrature.hpp"

namespace fblab {

enum class SignoriniFamily { classified2d, qA, symmetrizedQ, custom };

inline std::string to_string(SignoriniFamily f) {
  switch (f) {
    case SignoriniFamily::classified2d: return "2D-classified";
    case SignoriniFamily::qA: return "q_A";
    case SignoriniFamily::symmetrizedQ: return "symmetrized-Q";
    default: return "custom";
  }
}

/// A homogeneous global solution of the thin-obstacle system
///   Delta q <= 0,  q Delta q = 0,  Delta q = 0 off {x_n = 0},  q >= 0 on {x_n = 0},
/// stored as an even and an odd part with respect to x_n -> -x_n.
///
/// The even part is either a polynomial on {x_n >= 0} reflected evenly
/// (even_upper) or, for half-integer homogeneities in the plane, the polar
/// closure amp * rho^lambda cos(lambda theta) with theta = atan2(|x_n|, x_{n-1}).
/// The odd part is a global harmonic polynomial, odd in x_n; it vanishes on
/// the plane and never contributes to the distributional Laplacian.
struct SignoriniSolution {
  int n = 2;
  double lambda = 0;
  SignoriniFamily family = SignoriniFamily::custom;
  Poly even_upper{2};
  Poly odd_part{2};
  bool polar = false;
  double polar_amp = 0;

  double eval_even(std::span<const double> x) const {
    if (polar) {
      std::complex<double> w(x[n - 2], std::abs(x[n - 1]));
      return polar_amp * std::pow(w, lambda).real();
    }
    std::vector<double> y(x.begin(), x.end());
    y[n - 1] = std::abs(y[n - 1]);
    return even_upper.eval(y);
  }

  double eval_odd(std::span<const double> x) const { return odd_part.eval(x); }

  double eval(std::span<const double> x) const { return eval_even(x) + eval_odd(x); }

  std::vector<double> grad(std::span<const double> x) const {
    std::vector<double> g(n, 0.0);
    double sgn = x[n - 1] >= 0 ? 1.0 : -1.0;
    if (polar) {
      std::complex<double> w(x[n - 2], std::abs(x[n - 1]));
      auto dw = lambda * std::pow(w, lambda - 1);
      g[n - 2] += polar_amp * dw.real();
      g[n - 1] += sgn * polar_amp * (-dw.imag());
    } else {
      std::vector<double> y(x.begin(), x.end());
      y[n - 1] = std::abs(y[n - 1]);
      for (int i = 0; i < n; ++i) {
        double d = even_upper.dx(i).eval(y);
        g[i] += (i == n - 1 ? sgn : 1.0) * d;
      }
    }
    for (int i = 0; i < n; ++i) g[i] += odd_part.dx(i).eval(x);
    return g;
  }

  /// 2 d/dx_n of the even part at (x', 0+): the density of the
  /// distributional Laplacian concentrated on the plane.
  double jump_on_plane(std::span<const double> xp) const {
    double j = 0;
    if (polar) {
      std::complex<double> w(xp[n - 2], 0.0);
      j += 2.0 * polar_amp * (-(lambda * std::pow(w, lambda - 1)).imag());
    }
    if (!even_upper.is_zero()) {
      std::vector<double> y(xp.begin(), xp.end());
      y.resize(n);
      y[n - 1] = 0.0;
      j += 2.0 * even_upper.dx(n - 1).eval(y);
    }
    return j;
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"dim", n},
                     {"lambda", lambda},
                     {"family", to_string(family)}};
    nlohmann::json coeffs;
    if (polar) coeffs["polar_amp"] = polar_amp;
    if (!even_upper.is_zero()) coeffs["even_upper"] = even_upper.to_json();
    if (!odd_part.is_zero()) coeffs["odd"] = odd_part.to_json();
    j["coefficients"] = std::move(coeffs);
    return j;
  }
};

namespace detail {

// Re and Im of (x_n + i x_{n-1})^k as exact integer-coefficient polynomials
// in n = 2 (variables x1 = x_{n-1}, x2 = x_n).
inline std::pair<Poly, Poly> z_pow_2d(int k) {
  Poly re = Poly::constant(2, Rat(1)), im(2);
  Poly x1 = Poly::var(2, 0), x2 = Poly::var(2, 1);
  for (int i = 0; i < k; ++i) {
    Poly nre = x2 * re - x1 * im;
    Poly nim = x2 * im + x1 * re;
    re = std::move(nre);
    im = std::move(nim);
  }
  return {re, im};
}

inline bool is_admissible_2d(double lambda) {
  double r = std::round(lambda);
  if (std::abs(lambda - r) < 1e-12) return r >= 1.0;
  double h = std::round(lambda - 0.5);
  if (std::abs(lambda - 0.5 - h) > 1e-12) return false;
  // Half-integers 3/2, 7/2, 11/2, ...: 2*lambda = 3 mod 4.
  long long two = (long long)std::llround(2 * lambda);
  return two >= 3 && (two - 3) % 4 == 0;
}

}  // namespace detail

void verify_signorini(const SignoriniSolution& q, double tol = 1e-10);

/// The full two-parameter family of lambda-homogeneous solutions in the
/// plane. Integer lambda: even part c * sigma_lambda * Re(z^lambda) with the
/// sign sigma_lambda chosen so the plane conditions hold (+Re for
/// lambda = 0 mod 4 and the odd lambda = 3 mod 4, flipped otherwise), odd
/// part a global harmonic polynomial. Half-integer lambda (3/2, 7/2, ...):
/// the polar branch solution; no odd part exists (b must be 0).
inline SignoriniSolution signorini_2d(double lambda, double c, double b) {
  if (!detail::is_admissible_2d(lambda))
    throw std::invalid_argument(
        "signorini_2d: lambda = " + std::to_string(lambda) +
        " is not admissible; the admissible set is {1,2,3,...} U {3/2, 7/2, 11/2, ...}");
  if (c < 0) throw std::invalid_argument("signorini_2d: c must be >= 0");

  SignoriniSolution q;
  q.n = 2;
  q.lambda = lambda;
  q.family = SignoriniFamily::classified2d;

  double r = std::round(lambda);
  if (std::abs(lambda - r) < 1e-12) {
    int k = (int)r;
    auto [re, im] = detail::z_pow_2d(k);
    if (k % 2 == 1) {
      // sigma = (-1)^{(k+1)/2}: lambda = 1 -> -|x_n|, lambda = 3 -> +(x_n^3 - 3 x_n x'^2).
      Rat sigma = ((k + 1) / 2) % 2 == 0 ? Rat(1) : Rat(-1);
      q.even_upper = (Rat(c) * sigma) * re;
      q.odd_part = Rat(b) * re;
    } else {
      Rat sigma = (k / 2) % 2 == 0 ? Rat(1) : Rat(-1);
      q.even_upper = (Rat(c) * sigma) * re;
      q.odd_part = Rat(b) * im;
    }
  } else {
    if (b != 0)
      throw std::invalid_argument(
          "signorini_2d: half-integer lambda admits no odd part (b must be 0)");
    q.polar = true;
    q.polar_amp = c;
  }
  verify_signorini(q);
  return q;
}

/// q_A(x) = |x_n| ( (tr A / 3) x_n^2 - x' . A x' ), the 3-homogeneous
/// solution attached to a PSD (n-1)x(n-1) matrix A.
struct MatrixFamilyQ {
  Eigen::MatrixXd A;
  SignoriniSolution q;
};

inline MatrixFamilyQ make_qA(const Eigen::MatrixXd& A) {
  int m = (int)A.rows();
  if (A.cols() != m || m < 1) throw std::invalid_argument("make_qA: A must be square");
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("make_qA: A must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  if (es.eigenvalues().minCoeff() < -1e-12)
    throw std::invalid_argument("make_qA: A has a negative eigenvalue");

  int n = m + 1;
  // Exact rational image of A keeps the off-plane harmonicity identity exact.
  Poly quad(n);
  Rat tr(0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      std::vector<unsigned> e(n, 0);
      e[i] += 1;
      e[j] += 1;
      quad.add_term(e, Rat(A(i, j)));
    }
    tr += Rat(A(i, i));
  }
  std::vector<unsigned> e3(n, 0);
  e3[n - 1] = 3;
  Poly even = Poly::monomial(n, e3, tr / 3) - Poly::var(n, n - 1) * quad;

  MatrixFamilyQ out{A, SignoriniSolution{}};
  out.q.n = n;
  out.q.lambda = 3;
  out.q.family = SignoriniFamily::qA;
  out.q.even_upper = std::move(even);
  out.q.odd_part = Poly(n);
  verify_signorini(out.q);
  return out;
}

/// Closed form for the sphere inner product of two members of the q_A family:
///   integral_{dB_rho} q_A q_Abar
///     = 2 rho^{n+5} |S^{n-1}| / (n(n+2)(n+4)) * ( tr(A Abar) + tr A tr Abar / 3 ).
/// Derivation: with c_n = |S^{n-1}|/(n(n+2)(n+4)) the sphere moment table
/// gives integral = c_n ( (2/3) trA trAbar + 2 <A, Abar>_F ), and for
/// symmetric matrices <A, Abar>_F = tr(A Abar).  The constant is pinned
/// independently by quadrature in the tests.
inline double inner_qA(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Abar,
                       double rho) {
  if (A.rows() != Abar.rows()) throw std::invalid_argument("inner_qA: dimension mismatch");
  int n = (int)A.rows() + 1;
  double c = 2.0 * std::pow(rho, n + 5) * sphere_area(n) /
             ((double)n * (n + 2) * (n + 4));
  return c * ((A * Abar).trace() + A.trace() * Abar.trace() / 3.0);
}

/// Trace operator on odd-homogeneity solutions: q = -|x_n|(q0(x') + x_n^2 q1)
/// with q0 >= 0; returns q0 as an (n-1)-variable polynomial.
inline Poly trace_T(const SignoriniSolution& q) {
  long long two = (long long)std::llround(2 * q.lambda);
  if (two % 2 != 0 || (two / 2) % 2 != 1)
    throw std::invalid_argument("trace_T: homogeneity must be an odd integer");
  if (q.polar) throw std::invalid_argument("trace_T: polynomial representation required");
  if (q.even_upper.is_zero()) return Poly(q.n - 1);

  auto divided = q.even_upper.divide_by_var(q.n - 1);
  if (!divided)
    throw std::invalid_argument("trace_T: even part is not divisible by x_n");
  Poly minus_q0 = divided->at_zero(q.n - 1);
  Poly q0(q.n - 1);
  for (const auto& [e, c] : minus_q0.terms()) {
    std::vector<unsigned> ep(e.begin(), e.end() - 1);
    q0.add_term(std::move(ep), -c);
  }
  return q0;
}

/// Coefficients of the symmetrized lambda-homogeneous solution
///   Q = sum_j a_j |x'|^{lambda-1-2j} |x_n|^{1+2j},
/// solved exactly from a_j (lambda-1-2j)(lambda-2-2j+n-2)
///                    + a_{j+1} (3+2j)(2+2j) = 0 with a_0 = -1, then all
/// scaled by one common factor to unit L^2(dB_1) norm (ratios stay exact,
/// so off-plane harmonicity is preserved exactly).
struct SymmetrizedQ {
  int n = 0;
  int lambda = 0;
  std::vector<Rat> raw;  // a_0 = -1 convention
  double norm_raw = 0;   // L^2(dB_1) norm of the raw combination
  SignoriniSolution q;   // normalized
};

inline SymmetrizedQ symmetrized_Q(int lambda, int n) {
  if (lambda < 3 || lambda % 2 == 0)
    throw std::invalid_argument("symmetrized_Q: lambda must be odd and >= 3");

  int J = (lambda - 1) / 2;
  std::vector<Rat> a(J + 1);
  a[0] = Rat(-1);
  for (int j = 0; j < J; ++j)
    a[j + 1] = -a[j] * Rat((lambda - 1 - 2 * j) * (lambda - 2 - 2 * j + n - 2)) /
               Rat((3 + 2 * j) * (2 + 2 * j));

  auto assemble = [&](const std::vector<Rat>& coef) {
    Poly rp(n);  // |x'|^2
    for (int i = 0; i + 1 < n; ++i) rp += Poly::var(n, i).pow(2);
    Poly out(n);
    for (int j = 0; j <= J; ++j) {
      std::vector<unsigned> e(n, 0);
      e[n - 1] = 1 + 2 * j;
      out += coef[j] * (rp.pow((lambda - 1 - 2 * j) / 2) *
                        Poly::monomial(n, e, Rat(1)));
    }
    return out;
  };

  Poly raw_upper = assemble(a);
  // Q^2 has even x_n powers, so the reflected integral equals the
  // polynomial one; the moment table gives it exactly.
  double norm2 = sphere_integral_poly(raw_upper * raw_upper, 1.0);
  double norm = std::sqrt(norm2);

  SymmetrizedQ out;
  out.n = n;
  out.lambda = lambda;
  out.raw = a;
  out.norm_raw = norm;
  Rat s = Rat(1.0 / norm);
  std::vector<Rat> scaled(a);
  for (auto& v : scaled) v *= s;
  out.q.n = n;
  out.q.lambda = lambda;
  out.q.family = SignoriniFamily::symmetrizedQ;
  out.q.even_upper = assemble(scaled);
  out.q.odd_part = Poly(n);
  verify_signorini(out.q);
  return out;
}

/// Finite-difference monotonicity report for r -> r^{-lambda} integral_{dB_1}
/// u(r .) q. For admissible even fields this derivative is nonnegative.
struct OddFrequencyReport {
  std::vector<double> radii;
  std::vector<double> values;
  double min_derivative = 0;
};

template <class F>
  requires std::invocable<F, std::span<const double>>
OddFrequencyReport odd_frequency_monotone_check(F&& u, const SignoriniSolution& q,
                                                double lambda,
                                                std::vector<double> radii,
                                                int quad_order = 32) {
  long long two = (long long)std::llround(2 * q.lambda);
  if (two % 2 != 0 || (two / 2) % 2 != 1)
    throw std::invalid_argument("odd_frequency_monotone_check: q must have odd integer homogeneity");
  auto rule = sphere_rule(q.n, quad_order);
  std::vector<double> center(q.n, 0.0);
  OddFrequencyReport rep;
  rep.radii = std::move(radii);
  std::vector<double> y(q.n);
  for (double r : rep.radii) {
    auto f = [&](std::span<const double> x) {
      for (int i = 0; i < q.n; ++i) y[i] = r * x[i];
      return u(std::span<const double>(y)) * q.eval(x);
    };
    rep.values.push_back(std::pow(r, -lambda) * sphere_integral(f, center, 1.0, rule));
  }
  rep.min_derivative = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < rep.radii.size(); ++i) {
    double d = (rep.values[i + 1] - rep.values[i]) / (rep.radii[i + 1] - rep.radii[i]);
    rep.min_derivative = std::min(rep.min_derivative, d);
  }
  return rep;
}

/// psi = integral_{dB_1} w q_A - 2 integral_{dB_{1/2}} w q_A. The r argument
/// labels the scale at which the caller rescaled w; the combination itself is
/// evaluated on the two fixed spheres.
template <class F>
  requires std::invocable<F, std::span<const double>>
double psi_functional(F&& w, const Eigen::MatrixXd& A, double /*r*/,
                      int quad_order = 32) {
  auto qa = make_qA(A);
  auto rule = sphere_rule(qa.q.n, quad_order);
  std::vector<double> center(qa.q.n, 0.0);
  auto f = [&](std::span<const double> x) { return w(x) * qa.q.eval(x); };
  return sphere_integral(f, center, 1.0, rule) -
         2.0 * sphere_integral(f, center, 0.5, rule);
}

/// Invariant suite shared by every catalog element:
///   1. Delta q = 0 off the plane (exact for polynomial pieces, mean-value
///      sampling for the polar branch),
///   2. q >= 0 on the plane (sampled),
///   3. jump 2 d_{x_n} q_even(x',0+) <= 0 (exact polynomial or closed form),
///   4. q * jump = 0 on the plane (complementarity).
inline void verify_signorini(const SignoriniSolution& q, double tol) {
  int n = q.n;
  if (!q.even_upper.is_zero() && !q.even_upper.laplacian().is_zero())
    throw std::logic_error("signorini invariant: even part not harmonic off the plane");
  if (!q.odd_part.is_zero()) {
    if (!q.odd_part.laplacian().is_zero())
      throw std::logic_error("signorini invariant: odd part not harmonic");
    // Odd in x_n, so it vanishes on the plane and carries no jump.
    for (const auto& [e, c] : q.odd_part.terms())
      if (e[n - 1] % 2 == 0)
        throw std::logic_error("signorini invariant: odd part has even x_n terms");
  }

  // Plane samples on [-1,1]^{n-1}.
  std::vector<std::vector<double>> samples;
  if (n == 2) {
    for (int i = 0; i <= 200; ++i) samples.push_back({-1.0 + i / 100.0, 0.0});
  } else {
    for (int i = 0; i <= 40; ++i)
      for (int j = 0; j <= 40; ++j)
        samples.push_back({-1.0 + i / 20.0, -1.0 + j / 20.0, 0.0});
  }
  for (const auto& x : samples) {
    double v = q.eval(x);
    if (v < -tol)
      throw std::logic_error("signorini invariant: q < 0 on the plane");
    double jump = q.jump_on_plane(x);
    if (jump > tol)
      throw std::logic_error("signorini invariant: positive jump (Delta q > 0 on the plane)");
    if (std::abs(jump) > tol && std::abs(v) > tol)
      throw std::logic_error("signorini invariant: q * Delta q != 0 on the plane");
  }

  if (q.polar) {
    // Mean-value property on circles strictly inside the upper half plane.
    for (double cx : {-0.7, -0.2, 0.3, 0.8}) {
      for (double cy : {0.2, 0.6}) {
        double rad = 0.4 * cy;
        double mean = 0;
        int m = 64;
        for (int k = 0; k < m; ++k) {
          double th = 2 * std::numbers::pi * k / m;
          std::vector<double> x{cx + rad * std::cos(th), cy + rad * std::sin(th)};
          mean += q.eval(x);
        }
        mean /= m;
        std::vector<double> c{cx, cy};
        if (std::abs(mean - q.eval(c)) > tol * std::max(1.0, std::abs(q.eval(c))))
          throw std::logic_error("signorini invariant: polar branch not harmonic off the plane");
      }
    }
  }
}

}  // namespace fblab
