#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "fblab/poly.hpp"

namespace fblab {

/// Exact monomial moments over the unit sphere and ball.
///
/// sphere_moment_unit(e, n) returns the rational mu with
///   integral_{S^{n-1}} x^e dsigma = mu * |S^{n-1}|.
/// Computed by reducing the degree through the Laplacian: for a homogeneous
/// g of degree k >= 2, the surface integral of g equals that of
/// Delta g / (k (n + k - 2)). Any odd exponent kills the moment by symmetry.
inline Rat sphere_moment_unit(const std::vector<unsigned>& exps, int n) {
  if ((int)exps.size() != n) throw std::invalid_argument("moment: exponent arity mismatch");
  for (unsigned e : exps)
    if (e % 2 != 0) return Rat(0);

  static std::map<std::pair<int, std::vector<unsigned>>, Rat> cache;
  auto key = std::make_pair(n, exps);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  Poly g = Poly::monomial(n, exps, Rat(1));
  Rat scale(1);
  while (g.degree() > 0) {
    int k = g.degree();
    scale /= Rat(k) * Rat(n + k - 2);
    g = g.laplacian();
  }
  Rat mu = g.is_zero() ? Rat(0) : scale * g.coeff(std::vector<unsigned>(n, 0));
  cache.emplace(std::move(key), mu);
  return mu;
}

/// integral_{B_1} x^e dx = ball_moment_unit(e, n) * |S^{n-1}|.
inline Rat ball_moment_unit(const std::vector<unsigned>& exps, int n) {
  int k = 0;
  for (unsigned e : exps) k += (int)e;
  return sphere_moment_unit(exps, n) / Rat(n + k);
}

/// |S^{n-1}| = 2 pi^{n/2} / Gamma(n/2).
inline double sphere_area(int n) {
  switch (n) {
    case 1: return 2.0;
    case 2: return 2.0 * std::numbers::pi;
    case 3: return 4.0 * std::numbers::pi;
    case 4: return 2.0 * std::numbers::pi * std::numbers::pi;
    default:
      return 2.0 * std::pow(std::numbers::pi, n / 2.0) / std::tgamma(n / 2.0);
  }
}

/// Exact-in-structure integral of a polynomial over the sphere of radius r
/// centered at the origin (moments exact, final combination in double).
template <class C>
double sphere_integral_poly(const PolyT<C>& p, double r) {
  int n = p.dim();
  double s = 0;
  for (const auto& [e, c] : p.terms()) {
    Rat mu = sphere_moment_unit(e, n);
    if (mu == 0) continue;
    int k = PolyT<C>::total(e);
    double cd;
    if constexpr (std::is_same_v<C, Rat>) cd = to_double(c);
    else cd = c;
    s += cd * std::pow(r, n - 1 + k) * to_double(mu);
  }
  return s * sphere_area(n);
}

template <class C>
double ball_integral_poly(const PolyT<C>& p, double r) {
  int n = p.dim();
  double s = 0;
  for (const auto& [e, c] : p.terms()) {
    Rat mu = ball_moment_unit(e, n);
    if (mu == 0) continue;
    int k = PolyT<C>::total(e);
    double cd;
    if constexpr (std::is_same_v<C, Rat>) cd = to_double(c);
    else cd = c;
    s += cd * std::pow(r, n + k) * to_double(mu);
  }
  return s * sphere_area(n);
}

}  // namespace fblab
