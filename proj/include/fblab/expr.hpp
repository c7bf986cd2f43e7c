#pragma once

// Small arithmetic expression compiler for boundary-data rules in config
// files. Expressions read the spatial coordinates as x1..x9 (x, y, z are
// aliases for the first three) plus the family parameter t, and support
// + - * / ^, parentheses, unary minus, the constant pi, and a fixed catalog
// of math functions. Parsing produces a flat postfix program, so repeated
// evaluation over grid nodes costs no allocation beyond a reused stack.

#include <cctype>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fblab {

class Expr {
 public:
  Expr() = default;

  /// Compile `text` or throw std::invalid_argument with a character offset.
  static Expr parse(std::string_view text) {
    Parser p{text, 0};
    Expr e;
    e.text_.assign(text);
    p.parse_sum(e.ops_);
    p.skip_ws();
    if (p.pos != text.size())
      throw std::invalid_argument(p.err("trailing input"));
    if (e.ops_.empty()) throw std::invalid_argument("expr: empty expression");
    return e;
  }

  /// Evaluate at spatial point `x` with family parameter `t`. Coordinates
  /// beyond x.size() read as an error at parse time only if referenced; at
  /// eval time a variable index out of range throws.
  double eval(std::span<const double> x, double t = 0) const {
    thread_local std::vector<double> stack;
    stack.clear();
    for (const Op& op : ops_) {
      switch (op.kind) {
        case Op::constant:
          stack.push_back(op.value);
          break;
        case Op::variable:
          if (op.index >= x.size())
            throw std::invalid_argument(
                "expr: variable x" + std::to_string(op.index + 1) +
                " is out of range for a " + std::to_string(x.size()) +
                "-dimensional point");
          stack.push_back(x[op.index]);
          break;
        case Op::time:
          stack.push_back(t);
          break;
        case Op::negate:
          stack.back() = -stack.back();
          break;
        case Op::add:
        case Op::sub:
        case Op::mul:
        case Op::div:
        case Op::pow2: {
          double b = stack.back();
          stack.pop_back();
          double& a = stack.back();
          if (op.kind == Op::add) a += b;
          else if (op.kind == Op::sub) a -= b;
          else if (op.kind == Op::mul) a *= b;
          else if (op.kind == Op::div) a /= b;
          else a = std::pow(a, b);
          break;
        }
        case Op::call1:
          stack.back() = op.f1(stack.back());
          break;
        case Op::call2: {
          double b = stack.back();
          stack.pop_back();
          stack.back() = op.f2(stack.back(), b);
          break;
        }
      }
    }
    return stack.back();
  }

  const std::string& text() const { return text_; }
  bool empty() const { return ops_.empty(); }

  /// True if any op reads the family parameter t.
  bool uses_time() const {
    for (const Op& op : ops_)
      if (op.kind == Op::time) return true;
    return false;
  }

  /// Smallest spatial dimension the expression can be evaluated in.
  std::size_t min_dim() const {
    std::size_t d = 0;
    for (const Op& op : ops_)
      if (op.kind == Op::variable) d = std::max(d, op.index + 1);
    return d;
  }

 private:
  struct Op {
    enum Kind { constant, variable, time, negate, add, sub, mul, div, pow2, call1, call2 };
    Kind kind;
    double value = 0;
    std::size_t index = 0;
    double (*f1)(double) = nullptr;
    double (*f2)(double, double) = nullptr;
  };

  struct Parser {
    std::string_view s;
    std::size_t pos;

    std::string err(const std::string& what) const {
      return "expr: " + what + " at position " + std::to_string(pos);
    }

    void skip_ws() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }

    bool accept(char c) {
      skip_ws();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }

    // sum := product (('+' | '-') product)*
    void parse_sum(std::vector<Op>& out) {
      parse_product(out);
      for (;;) {
        if (accept('+')) {
          parse_product(out);
          out.push_back({Op::add});
        } else if (accept('-')) {
          parse_product(out);
          out.push_back({Op::sub});
        } else {
          return;
        }
      }
    }

    // product := unary (('*' | '/') unary)*
    void parse_product(std::vector<Op>& out) {
      parse_unary(out);
      for (;;) {
        if (accept('*')) {
          parse_unary(out);
          out.push_back({Op::mul});
        } else if (accept('/')) {
          parse_unary(out);
          out.push_back({Op::div});
        } else {
          return;
        }
      }
    }

    // unary := '-' unary | power      (so -x^2 parses as -(x^2))
    void parse_unary(std::vector<Op>& out) {
      if (accept('-')) {
        parse_unary(out);
        out.push_back({Op::negate});
        return;
      }
      (void)accept('+');
      parse_power(out);
    }

    // power := primary ('^' unary)?   (right-associative, 2^-3 is legal)
    void parse_power(std::vector<Op>& out) {
      parse_primary(out);
      if (accept('^')) {
        parse_unary(out);
        out.push_back({Op::pow2});
      }
    }

    void parse_primary(std::vector<Op>& out) {
      skip_ws();
      if (pos >= s.size()) throw std::invalid_argument(err("unexpected end of input"));
      char c = s[pos];
      if (c == '(') {
        ++pos;
        parse_sum(out);
        if (!accept(')')) throw std::invalid_argument(err("expected ')'"));
        return;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        parse_number(out);
        return;
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        parse_identifier(out);
        return;
      }
      throw std::invalid_argument(err(std::string("unexpected character '") + c + "'"));
    }

    void parse_number(std::vector<Op>& out) {
      std::size_t start = pos;
      while (pos < s.size() && (std::isdigit(static_cast<unsigned char>(s[pos])) || s[pos] == '.'))
        ++pos;
      if (pos < s.size() && (s[pos] == 'e' || s[pos] == 'E')) {
        std::size_t mark = pos++;
        if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) ++pos;
        if (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
          while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
        } else {
          pos = mark;  // 'e' was not an exponent; leave it for the caller
        }
      }
      std::string tok(s.substr(start, pos - start));
      try {
        std::size_t used = 0;
        double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument("partial");
        out.push_back({Op::constant, v});
      } catch (const std::exception&) {
        pos = start;
        throw std::invalid_argument(err("malformed number '" + tok + "'"));
      }
    }

    void parse_identifier(std::vector<Op>& out) {
      std::size_t start = pos;
      while (pos < s.size() &&
             (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_'))
        ++pos;
      std::string name(s.substr(start, pos - start));

      auto var = [&](std::size_t idx) {
        Op op{Op::variable};
        op.index = idx;
        out.push_back(op);
      };
      if (name == "t") {
        out.push_back({Op::time});
        return;
      }
      if (name == "pi") {
        out.push_back({Op::constant, std::numbers::pi});
        return;
      }
      if (name == "x") return var(0);
      if (name == "y") return var(1);
      if (name == "z") return var(2);
      if (name.size() == 2 && name[0] == 'x' && name[1] >= '1' && name[1] <= '9')
        return var(static_cast<std::size_t>(name[1] - '1'));

      static constexpr std::pair<const char*, double (*)(double)> kUnary[] = {
          {"sin", [](double v) { return std::sin(v); }},
          {"cos", [](double v) { return std::cos(v); }},
          {"tan", [](double v) { return std::tan(v); }},
          {"sinh", [](double v) { return std::sinh(v); }},
          {"cosh", [](double v) { return std::cosh(v); }},
          {"tanh", [](double v) { return std::tanh(v); }},
          {"exp", [](double v) { return std::exp(v); }},
          {"log", [](double v) { return std::log(v); }},
          {"sqrt", [](double v) { return std::sqrt(v); }},
          {"abs", [](double v) { return std::abs(v); }},
      };
      static constexpr std::pair<const char*, double (*)(double, double)> kBinary[] = {
          {"min", [](double a, double b) { return std::min(a, b); }},
          {"max", [](double a, double b) { return std::max(a, b); }},
          {"pow", [](double a, double b) { return std::pow(a, b); }},
          {"hypot", [](double a, double b) { return std::hypot(a, b); }},
      };

      for (const auto& [fname, f] : kUnary) {
        if (name == fname) {
          if (!accept('(')) throw std::invalid_argument(err("expected '(' after '" + name + "'"));
          parse_sum(out);
          if (!accept(')')) throw std::invalid_argument(err("expected ')'"));
          Op op{Op::call1};
          op.f1 = f;
          out.push_back(op);
          return;
        }
      }
      for (const auto& [fname, f] : kBinary) {
        if (name == fname) {
          if (!accept('(')) throw std::invalid_argument(err("expected '(' after '" + name + "'"));
          parse_sum(out);
          if (!accept(',')) throw std::invalid_argument(err("expected ',' in '" + name + "'"));
          parse_sum(out);
          if (!accept(')')) throw std::invalid_argument(err("expected ')'"));
          Op op{Op::call2};
          op.f2 = f;
          out.push_back(op);
          return;
        }
      }
      pos = start;
      throw std::invalid_argument(err("unknown identifier '" + name + "'"));
    }
  };

  std::vector<Op> ops_;
  std::string text_;
};

}  // namespace fblab
