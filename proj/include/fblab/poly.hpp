#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fblab {

using Rat = boost::multiprecision::cpp_rational;

inline double to_double(const Rat& q) { return q.convert_to<double>(); }

/// Dense-exponent multivariate polynomial over coefficient ring C.
/// C is either Rat (exact mode, used for every identity check) or double
/// (fitting mode). Zero coefficients are never stored.
template <class C>
class PolyT {
 public:
  using Exps = std::vector<unsigned>;

  PolyT() : dim_(0) {}
  explicit PolyT(int dim) : dim_(dim) {}

  static PolyT constant(int dim, C c) {
    PolyT p(dim);
    p.add_term(Exps(dim, 0), std::move(c));
    return p;
  }
  static PolyT var(int dim, int i) {
    PolyT p(dim);
    Exps e(dim, 0);
    e.at(i) = 1;
    p.add_term(e, C(1));
    return p;
  }
  static PolyT monomial(int dim, Exps e, C c) {
    PolyT p(dim);
    if ((int)e.size() != dim) throw std::invalid_argument("monomial: exponent arity mismatch");
    p.add_term(std::move(e), std::move(c));
    return p;
  }

  int dim() const { return dim_; }
  bool is_zero() const { return terms_.empty(); }
  const std::map<Exps, C>& terms() const { return terms_; }

  int degree() const {
    int d = 0;
    for (const auto& [e, c] : terms_) d = std::max(d, total(e));
    return terms_.empty() ? -1 : d;
  }
  int lowest_degree() const {
    int d = std::numeric_limits<int>::max();
    for (const auto& [e, c] : terms_) d = std::min(d, total(e));
    return terms_.empty() ? -1 : d;
  }

  C coeff(const Exps& e) const {
    auto it = terms_.find(e);
    return it == terms_.end() ? C(0) : it->second;
  }

  void add_term(Exps e, C c) {
    if (c == C(0)) return;
    auto [it, fresh] = terms_.emplace(std::move(e), std::move(c));
    if (!fresh) {
      it->second += c;
      if (it->second == C(0)) terms_.erase(it);
    }
  }

  PolyT& operator+=(const PolyT& o) {
    check_dim(o);
    for (const auto& [e, c] : o.terms_) add_term(e, c);
    return *this;
  }
  PolyT& operator-=(const PolyT& o) {
    check_dim(o);
    for (const auto& [e, c] : o.terms_) add_term(e, C(-c));
    return *this;
  }
  friend PolyT operator+(PolyT a, const PolyT& b) { return a += b; }
  friend PolyT operator-(PolyT a, const PolyT& b) { return a -= b; }
  friend PolyT operator*(const PolyT& a, const PolyT& b) {
    a.check_dim(b);
    PolyT r(a.dim_);
    for (const auto& [ea, ca] : a.terms_)
      for (const auto& [eb, cb] : b.terms_) {
        Exps e(a.dim_);
        for (int i = 0; i < a.dim_; ++i) e[i] = ea[i] + eb[i];
        r.add_term(std::move(e), ca * cb);
      }
    return r;
  }
  friend PolyT operator*(const C& s, PolyT p) {
    PolyT r(p.dim_);
    if (s == C(0)) return r;
    for (auto& [e, c] : p.terms_) r.add_term(e, s * c);
    return r;
  }
  PolyT operator-() const { return C(-1) * *this; }

  PolyT pow(unsigned k) const {
    PolyT r = constant(dim_, C(1));
    for (unsigned i = 0; i < k; ++i) r = r * *this;
    return r;
  }

  PolyT dx(int i) const {
    PolyT r(dim_);
    for (const auto& [e, c] : terms_) {
      if (e[i] == 0) continue;
      Exps d = e;
      d[i] -= 1;
      r.add_term(std::move(d), c * C((int)e[i]));
    }
    return r;
  }

  PolyT laplacian() const {
    PolyT r(dim_);
    for (int i = 0; i < dim_; ++i) r += dx(i).dx(i);
    return r;
  }

  /// Exact division by x_i; nullopt when some term lacks the factor.
  std::optional<PolyT> divide_by_var(int i) const {
    PolyT r(dim_);
    for (const auto& [e, c] : terms_) {
      if (e[i] == 0) return std::nullopt;
      Exps d = e;
      d[i] -= 1;
      r.add_term(std::move(d), c);
    }
    return r;
  }

  /// Substitute x_i = 0.
  PolyT at_zero(int i) const {
    PolyT r(dim_);
    for (const auto& [e, c] : terms_)
      if (e[i] == 0) r.add_term(e, c);
    return r;
  }

  /// Keep only terms of total degree d.
  PolyT homogeneous_part(int d) const {
    PolyT r(dim_);
    for (const auto& [e, c] : terms_)
      if (total(e) == d) r.add_term(e, c);
    return r;
  }

  bool is_homogeneous() const {
    int d = -1;
    for (const auto& [e, c] : terms_) {
      if (d < 0) d = total(e);
      if (total(e) != d) return false;
    }
    return true;
  }

  double eval(std::span<const double> x) const {
    if ((int)x.size() != dim_) throw std::invalid_argument("eval: point arity mismatch");
    double s = 0;
    for (const auto& [e, c] : terms_) {
      double m = coeff_double(c);
      for (int i = 0; i < dim_; ++i)
        for (unsigned k = 0; k < e[i]; ++k) m *= x[i];
      s += m;
    }
    return s;
  }

  PolyT<double> to_double() const {
    PolyT<double> r(dim_);
    for (const auto& [e, c] : terms_) r.add_term(e, coeff_double(c));
    return r;
  }

  static int total(const Exps& e) { return std::accumulate(e.begin(), e.end(), 0u); }

  nlohmann::json to_json() const;
  static PolyT from_json(const nlohmann::json& j);

  std::string str(const std::vector<std::string>& names = {}) const {
    if (terms_.empty()) return "0";
    std::ostringstream os;
    bool first = true;
    for (const auto& [e, c] : terms_) {
      os << (first ? "" : " + ") << "(" << c << ")";
      for (int i = 0; i < dim_; ++i)
        if (e[i]) {
          os << "*"
             << (i < (int)names.size() ? names[i] : "x" + std::to_string(i + 1));
          if (e[i] > 1) os << "^" << e[i];
        }
      first = false;
    }
    return os.str();
  }

 private:
  static double coeff_double(const Rat& c) { return fblab::to_double(c); }
  static double coeff_double(double c) { return c; }
  void check_dim(const PolyT& o) const {
    if (dim_ != o.dim_) throw std::invalid_argument("poly arity mismatch");
  }

  int dim_;
  std::map<Exps, C> terms_;
};

using Poly = PolyT<Rat>;
using DPoly = PolyT<double>;

// JSON schema: {dim, mode, terms:[{exps, num, den}]}.  Rational coefficients
// must fit int64 when serialized; everything this library constructs does.
template <>
inline nlohmann::json Poly::to_json() const {
  nlohmann::json t = nlohmann::json::array();
  for (const auto& [e, c] : terms_) {
    auto num = boost::multiprecision::numerator(c);
    auto den = boost::multiprecision::denominator(c);
    if (num < std::numeric_limits<std::int64_t>::min() ||
        num > std::numeric_limits<std::int64_t>::max() ||
        den > std::numeric_limits<std::int64_t>::max())
      throw std::range_error("poly coefficient exceeds int64 serialization range");
    t.push_back({{"exps", e},
                 {"num", num.convert_to<std::int64_t>()},
                 {"den", den.convert_to<std::int64_t>()}});
  }
  return {{"dim", dim_}, {"mode", "rational"}, {"terms", t}};
}

template <>
inline nlohmann::json DPoly::to_json() const {
  nlohmann::json t = nlohmann::json::array();
  for (const auto& [e, c] : terms_)
    t.push_back({{"exps", e}, {"num", c}, {"den", 1}});
  return {{"dim", dim_}, {"mode", "double"}, {"terms", t}};
}

template <>
inline Poly Poly::from_json(const nlohmann::json& j) {
  if (j.at("mode") != "rational") throw std::invalid_argument("expected rational poly");
  Poly p(j.at("dim").get<int>());
  for (const auto& t : j.at("terms"))
    p.add_term(t.at("exps").get<Exps>(),
               Rat(t.at("num").get<std::int64_t>(), t.at("den").get<std::int64_t>()));
  return p;
}

template <>
inline DPoly DPoly::from_json(const nlohmann::json& j) {
  DPoly p(j.at("dim").get<int>());
  for (const auto& t : j.at("terms"))
    p.add_term(t.at("exps").get<Exps>(),
               t.at("num").get<double>() / t.at("den").get<double>());
  return p;
}

}  // namespace fblab
