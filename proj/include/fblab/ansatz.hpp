#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fblab/poly.hpp"

namespace fblab {

/// Quadratic blow-up profile p2(x) = (1/2) x . A x with trace(A) = 1 and
/// A positive semidefinite. kernel_dim is the dimension of {p2 = 0}.
struct QuadraticBlowup {
  int n = 0;
  Eigen::MatrixXd A;
  Eigen::VectorXd eigenvalues;  // ascending
  Eigen::MatrixXd frame;        // orthonormal eigenvectors, matching columns
  int kernel_dim = 0;

  DPoly dpoly() const {
    DPoly p(n);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        std::vector<unsigned> e(n, 0);
        e[i] += 1;
        e[j] += 1;
        p.add_term(e, (i == j ? 0.5 : 1.0) * A(i, j));
      }
    return p;
  }

  /// (1/2) x_n^2, the in-frame profile at the top stratum.
  static Poly canonical_p2(int n) {
    std::vector<unsigned> e(n, 0);
    e[n - 1] = 2;
    return Poly::monomial(n, e, Rat(1, 2));
  }
};

/// Deterministic sign/tie convention so frames are reproducible: each
/// eigenvector is flipped to make its largest-magnitude entry positive
/// (first such entry on exact ties).
inline void normalize_eigenvector_signs(Eigen::MatrixXd& V) {
  for (int c = 0; c < V.cols(); ++c) {
    int best = 0;
    for (int r = 1; r < V.rows(); ++r)
      if (std::abs(V(r, c)) > std::abs(V(best, c))) best = r;
    if (V(best, c) < 0) V.col(c) *= -1.0;
  }
}

inline QuadraticBlowup make_p2(const Eigen::MatrixXd& A) {
  int n = (int)A.rows();
  if (A.cols() != n || n < 1) throw std::invalid_argument("make_p2: A must be square");
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("make_p2: A must be symmetric");
  if (std::abs(A.trace() - 1.0) > 1e-12)
    throw std::invalid_argument("make_p2: trace(A) must be 1");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success) throw std::runtime_error("make_p2: eigensolver failed");
  QuadraticBlowup q;
  q.n = n;
  q.A = 0.5 * (A + A.transpose());
  q.eigenvalues = es.eigenvalues();
  q.frame = es.eigenvectors();
  normalize_eigenvector_signs(q.frame);
  for (int i = 0; i < n; ++i) {
    if (q.eigenvalues[i] < -1e-12)
      throw std::invalid_argument("make_p2: A has a negative eigenvalue");
    if (std::abs(q.eigenvalues[i]) < 1e-9) ++q.kernel_dim;
  }
  return q;
}

/// Cubic correction in the frame p2 = (1/2) x_n^2:
///   p3 = sum_alpha (a_alpha/2) x_alpha^2 x_n + (a_n/6) x_n^3,
/// harmonic iff sum_alpha a_alpha + a_n = 0 (enforced exactly).
struct CubicBlowup {
  int n = 0;
  std::vector<Rat> a;  // a[0..n-2] transverse, a[n-1] axial

  Poly poly() const {
    Poly p(n);
    for (int al = 0; al < n - 1; ++al) {
      std::vector<unsigned> e(n, 0);
      e[al] = 2;
      e[n - 1] = 1;
      p.add_term(e, a[al] / 2);
    }
    std::vector<unsigned> e(n, 0);
    e[n - 1] = 3;
    p.add_term(e, a[n - 1] / 6);
    return p;
  }
};

inline CubicBlowup make_p3(int n, std::vector<Rat> a) {
  if ((int)a.size() != n) throw std::invalid_argument("make_p3: need n coefficients");
  Rat s(0);
  for (const Rat& v : a) s += v;
  if (s != 0)
    throw std::invalid_argument("make_p3: harmonicity requires the coefficients to sum to 0");
  return CubicBlowup{n, std::move(a)};
}

/// The quartic-in-x_n correction determined by p3 alone:
///   Q = sum_alpha (a_alpha^2 - a_alpha a_n / 3)(x_n^3/12 - x_alpha^2 x_n/2).
inline Poly ansatz_Q(const CubicBlowup& p3) {
  int n = p3.n;
  Poly q(n);
  for (int al = 0; al < n - 1; ++al) {
    Rat c = p3.a[al] * p3.a[al] - p3.a[al] * p3.a[n - 1] / 3;
    std::vector<unsigned> e3(n, 0);
    e3[n - 1] = 3;
    q.add_term(e3, c / 12);
    std::vector<unsigned> e2(n, 0);
    e2[al] = 2;
    e2[n - 1] = 1;
    q.add_term(e2, -c / 2);
  }
  return q;
}

/// Fourth-order ansatz in the rotated frame:
///   P = (1/2) x_n^2 + p3 + (1/2)(p3/x_n)^2 + x_n Q,
/// with Delta P = 1 exactly for every harmonic p3 of the stored form.
/// Requires p2 in-frame (A = e_n e_n^T up to 1e-12) with kernel_dim n-1.
inline Poly build_ansatz(const QuadraticBlowup& p2, const CubicBlowup& p3) {
  int n = p3.n;
  if (p2.n != n) throw std::invalid_argument("build_ansatz: dimension mismatch");
  if (p2.kernel_dim != n - 1)
    throw std::invalid_argument("build_ansatz: p2 must vanish on a hyperplane (kernel_dim n-1)");
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(n, n);
  E(n - 1, n - 1) = 1.0;
  if ((p2.A - E).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("build_ansatz: rotate to the frame p2 = x_n^2/2 first");

  Poly cubic = p3.poly();
  auto g = cubic.divide_by_var(n - 1);
  if (!g) throw std::logic_error("build_ansatz: p3 not divisible by x_n");
  Poly Q = ansatz_Q(p3);
  Poly xn = Poly::var(n, n - 1);
  return QuadraticBlowup::canonical_p2(n) + cubic + Rat(1, 2) * (*g * *g) + xn * Q;
}

/// Osculating rotation field X_alpha = (1 + a x_n) e_alpha - a x_alpha e_n.
struct RotationField {
  int n = 0;
  int alpha = 0;  // 0-based, in [0, n-2]
  Rat a;
  std::vector<Poly> comps;
};

inline RotationField make_rotation_field(int n, int alpha, Rat a) {
  if (alpha < 0 || alpha >= n - 1)
    throw std::invalid_argument("make_rotation_field: alpha must index a kernel direction");
  RotationField X{n, alpha, a, std::vector<Poly>(n, Poly(n))};
  X.comps[alpha] = Poly::constant(n, Rat(1)) + a * Poly::var(n, n - 1);
  X.comps[n - 1] = -a * Poly::var(n, alpha);
  return X;
}

inline Poly directional_derivative(const Poly& p, const RotationField& X) {
  Poly s(p.dim());
  for (int i = 0; i < p.dim(); ++i) s += X.comps[i] * p.dx(i);
  return s;
}

/// X_alpha X_alpha p, the second derivative along the rotation field.
inline Poly rotational_second_derivative(const Poly& p, const RotationField& X) {
  return directional_derivative(directional_derivative(p, X), X);
}

}  // namespace fblab
