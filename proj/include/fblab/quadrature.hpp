#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "fblab/grid.hpp"

namespace fblab {

/// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration.
inline void gauss_legendre(int k, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(k, 0.0);
  weights.assign(k, 0.0);
  for (int i = 0; i < (k + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (k + 0.5));
    double dp = 0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1, p1 = x;
      for (int j = 2; j <= k; ++j) {
        double p2 = ((2 * j - 1) * x * p1 - (j - 1) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = k * (x * p1 - p0) / (x * x - 1);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[i] = -x;
    nodes[k - 1 - i] = x;
    double w = 2.0 / ((1 - x * x) * dp * dp);
    weights[i] = w;
    weights[k - 1 - i] = w;
  }
}

/// Deterministic quadrature on the unit sphere or unit ball, exact for
/// polynomials of total degree <= order.
///  - n=2 sphere: equispaced angles (order+1 of them), trapezoidal weights.
///  - n=3 sphere: Gauss-Legendre in cos(theta) x equispaced azimuth.
///  - n=1 sphere: the two endpoints, weight 1 each.
///  - ball: Gauss-Legendre radii on (0,1) with the r^{n-1} Jacobian folded
///    into the weights, tensored with the sphere rule.
/// Angular nodes carry a half-step phase and the polar count is kept even so
/// that no node lands on the hyperplane {x_n = 0}: integrands with a jump
/// there (e.g. gradients of |x_n| * polynomial) then cancel their odd parts
/// exactly, because the node set stays symmetric under x_n -> -x_n while
/// avoiding the jump itself.
struct QuadratureRule {
  enum class Kind { sphere, ball };
  Kind kind;
  int dim = 0;
  int order = 0;
  std::vector<std::vector<double>> nodes;
  std::vector<double> weights;
};

inline QuadratureRule sphere_rule(int n, int order) {
  if (order < 0) throw std::invalid_argument("sphere_rule: order must be >= 0");
  QuadratureRule q{QuadratureRule::Kind::sphere, n, order, {}, {}};
  if (n == 1) {
    q.nodes = {{-1.0}, {1.0}};
    q.weights = {1.0, 1.0};
  } else if (n == 2) {
    int m = order + 1;
    if (m % 2 != 0) ++m;  // with the half-step phase, odd m would put a node at angle pi
    double w = 2.0 * std::numbers::pi / m;
    // Enumerate the upper semicircle and mirror it, so each node pair is
    // bit-exact symmetric in x_2.
    for (int j = 0; j < m / 2; ++j) {
      double th = 2.0 * std::numbers::pi * (j + 0.5) / m;
      double c = std::cos(th), s = std::sin(th);
      q.nodes.push_back({c, s});
      q.nodes.push_back({c, -s});
      q.weights.push_back(w);
      q.weights.push_back(w);
    }
  } else if (n == 3) {
    int l = (order + 2) / 2;
    if (l % 2 != 0) ++l;  // even count: no Gauss-Legendre node at cos(theta)=0
    int m = order + 1;
    if (m % 2 != 0) ++m;
    std::vector<double> gn, gw;
    gauss_legendre(l, gn, gw);
    double wphi = 2.0 * std::numbers::pi / m;
    for (int i = 0; i < l; ++i) {
      double c = gn[i];
      double s = std::sqrt(std::max(0.0, 1.0 - c * c));
      for (int j = 0; j < m; ++j) {
        double ph = 2.0 * std::numbers::pi * (j + 0.5) / m;
        q.nodes.push_back({s * std::cos(ph), s * std::sin(ph), c});
        q.weights.push_back(gw[i] * wphi);
      }
    }
  } else {
    throw std::invalid_argument("sphere_rule: dim must be 1, 2, or 3");
  }
  return q;
}

inline QuadratureRule ball_rule(int n, int order) {
  QuadratureRule s = sphere_rule(n, order);
  int k = (order + n + 1) / 2;
  std::vector<double> gn, gw;
  gauss_legendre(k, gn, gw);
  QuadratureRule q{QuadratureRule::Kind::ball, n, order, {}, {}};
  for (int i = 0; i < k; ++i) {
    double r = 0.5 * (gn[i] + 1.0);
    double wr = 0.5 * gw[i] * std::pow(r, n - 1);
    for (std::size_t j = 0; j < s.nodes.size(); ++j) {
      std::vector<double> x(n);
      for (int d = 0; d < n; ++d) x[d] = r * s.nodes[j][d];
      q.nodes.push_back(std::move(x));
      q.weights.push_back(wr * s.weights[j]);
    }
  }
  return q;
}

/// r^{n-1} * sum_i w_i f(center + r * node_i)  ==  integral_{dB_r(center)} f.
template <class F>
  requires std::invocable<F, std::span<const double>>
double sphere_integral(F&& f, std::span<const double> center, double r,
                       const QuadratureRule& rule) {
  if (rule.kind != QuadratureRule::Kind::sphere)
    throw std::invalid_argument("sphere_integral: rule is not a sphere rule");
  int n = rule.dim;
  std::vector<double> x(n);
  double s = 0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    for (int d = 0; d < n; ++d) x[d] = center[d] + r * rule.nodes[i][d];
    s += rule.weights[i] * f(std::span<const double>(x));
  }
  return std::pow(r, n - 1) * s;
}

/// Plain integral_{B_r(center)} f; callers apply any r-power normalization.
template <class F>
  requires std::invocable<F, std::span<const double>>
double ball_integral(F&& f, std::span<const double> center, double r,
                     const QuadratureRule& rule) {
  if (rule.kind != QuadratureRule::Kind::ball)
    throw std::invalid_argument("ball_integral: rule is not a ball rule");
  int n = rule.dim;
  std::vector<double> x(n);
  double s = 0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    for (int d = 0; d < n; ++d) x[d] = center[d] + r * rule.nodes[i][d];
    s += rule.weights[i] * f(std::span<const double>(x));
  }
  return std::pow(r, n) * s;
}

inline void require_ball_inside(const Grid& g, std::span<const double> center, double r) {
  for (int d = 0; d < g.dim(); ++d) {
    double slack = 1e-9 * g.spacing(d);
    if (center[d] - r < g.origin()[d] - slack || center[d] + r > g.upper(d) + slack) {
      std::ostringstream os;
      os << "ball of radius " << r << " around coordinate " << (d + 1) << " = "
         << center[d] << " escapes [" << g.origin()[d] << ", " << g.upper(d) << "]";
      throw std::domain_error(os.str());
    }
  }
}

inline double sphere_integral(const ScalarField& u, std::span<const double> center,
                              double r, const QuadratureRule& rule) {
  require_ball_inside(u.grid, center, r);
  return sphere_integral([&](std::span<const double> x) { return interpolate(u, x); },
                         center, r, rule);
}

inline double ball_integral(const ScalarField& u, std::span<const double> center,
                            double r, const QuadratureRule& rule) {
  require_ball_inside(u.grid, center, r);
  return ball_integral([&](std::span<const double> x) { return interpolate(u, x); },
                       center, r, rule);
}

}  // namespace fblab
