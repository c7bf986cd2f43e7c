#pragma once

// TOML-subset reader producing nlohmann::json. Supports the slice of TOML
// that experiment configs use: [table.header] sections, bare or dotted keys,
// basic "strings", booleans, integers, floats (inf/nan included), homogeneous
// or nested arrays (multi-line, trailing comma allowed), and # comments.
// Everything else is rejected with a line-numbered error. JSON input is
// accepted transparently: a document whose first non-space character is '{'
// is handed to the JSON parser instead.

#include <cctype>
#include <cstdint>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace fblab {

namespace toml_detail {

struct Cursor {
  std::string_view s;
  std::size_t pos = 0;
  int line = 1;

  bool done() const { return pos >= s.size(); }
  char peek() const { return s[pos]; }
  void advance() {
    if (s[pos] == '\n') ++line;
    ++pos;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw std::invalid_argument("config line " + std::to_string(line) + ": " + what);
  }

  // Skip spaces/tabs and comments; newlines too when `newlines` is set.
  void skip(bool newlines) {
    while (!done()) {
      char c = peek();
      if (c == '#') {
        while (!done() && peek() != '\n') advance();
      } else if (c == ' ' || c == '\t' || c == '\r' || (newlines && c == '\n')) {
        advance();
      } else {
        return;
      }
    }
  }

  bool at_line_end() {
    skip(false);
    return done() || peek() == '\n';
  }

  void require_line_end(const char* ctx) {
    if (!at_line_end()) fail(std::string("unexpected trailing characters after ") + ctx);
    if (!done()) advance();  // consume the newline
  }
};

inline bool is_bare_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

inline std::string parse_basic_string(Cursor& c) {
  // Caller has checked the opening quote.
  c.advance();
  std::string out;
  while (!c.done()) {
    char ch = c.peek();
    if (ch == '"') {
      c.advance();
      return out;
    }
    if (ch == '\n') c.fail("unterminated string");
    if (ch == '\\') {
      c.advance();
      if (c.done()) c.fail("unterminated escape");
      char e = c.peek();
      switch (e) {
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        default: c.fail(std::string("unsupported escape '\\") + e + "'");
      }
      c.advance();
    } else {
      out.push_back(ch);
      c.advance();
    }
  }
  c.fail("unterminated string");
}

// One dotted key: bare or quoted segments separated by '.'.
inline std::vector<std::string> parse_key_path(Cursor& c) {
  std::vector<std::string> path;
  for (;;) {
    c.skip(false);
    if (c.done()) c.fail("expected a key");
    std::string seg;
    if (c.peek() == '"') {
      seg = parse_basic_string(c);
    } else {
      while (!c.done() && is_bare_char(c.peek())) {
        seg.push_back(c.peek());
        c.advance();
      }
    }
    if (seg.empty()) c.fail("expected a key");
    path.push_back(std::move(seg));
    c.skip(false);
    if (!c.done() && c.peek() == '.') {
      c.advance();
      continue;
    }
    return path;
  }
}

inline nlohmann::json parse_value(Cursor& c);

inline nlohmann::json parse_array(Cursor& c) {
  c.advance();  // '['
  nlohmann::json arr = nlohmann::json::array();
  for (;;) {
    c.skip(true);
    if (c.done()) c.fail("unterminated array");
    if (c.peek() == ']') {
      c.advance();
      return arr;
    }
    arr.push_back(parse_value(c));
    c.skip(true);
    if (c.done()) c.fail("unterminated array");
    if (c.peek() == ',') {
      c.advance();
      continue;
    }
    if (c.peek() == ']') {
      c.advance();
      return arr;
    }
    c.fail("expected ',' or ']' in array");
  }
}

inline nlohmann::json parse_number_or_keyword(Cursor& c) {
  std::size_t start = c.pos;
  std::string tok;
  while (!c.done()) {
    char ch = c.peek();
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '+' || ch == '-' ||
        ch == '.' || ch == '_') {
      tok.push_back(ch);
      c.advance();
    } else {
      break;
    }
  }
  if (tok.empty()) c.fail("expected a value");
  if (tok == "true") return true;
  if (tok == "false") return false;

  std::string digits;
  for (char ch : tok)
    if (ch != '_') digits.push_back(ch);

  std::string body = digits;
  double sign = 1.0;
  if (!body.empty() && (body[0] == '+' || body[0] == '-')) {
    if (body[0] == '-') sign = -1.0;
    body = body.substr(1);
  }
  if (body == "inf") return sign * std::numeric_limits<double>::infinity();
  if (body == "nan") return std::numeric_limits<double>::quiet_NaN();

  bool is_float = digits.find('.') != std::string::npos ||
                  digits.find('e') != std::string::npos ||
                  digits.find('E') != std::string::npos;
  try {
    std::size_t used = 0;
    if (is_float) {
      double v = std::stod(digits, &used);
      if (used != digits.size()) throw std::invalid_argument("partial");
      return v;
    }
    long long v = std::stoll(digits, &used);
    if (used != digits.size()) throw std::invalid_argument("partial");
    return v;
  } catch (const std::exception&) {
    c.pos = start;
    c.fail("malformed value '" + tok + "'");
  }
}

inline nlohmann::json parse_value(Cursor& c) {
  c.skip(false);
  if (c.done()) c.fail("expected a value");
  char ch = c.peek();
  if (ch == '"') return parse_basic_string(c);
  if (ch == '[') return parse_array(c);
  return parse_number_or_keyword(c);
}

// Walk/create intermediate tables for all but the last path segment.
inline nlohmann::json* descend(nlohmann::json* node, const std::vector<std::string>& path,
                               std::size_t upto, Cursor& c) {
  for (std::size_t i = 0; i < upto; ++i) {
    nlohmann::json& child = (*node)[path[i]];
    if (child.is_null()) child = nlohmann::json::object();
    if (!child.is_object()) c.fail("key '" + path[i] + "' is not a table");
    node = &child;
  }
  return node;
}

inline std::string join_path(const std::vector<std::string>& path) {
  std::string out;
  for (const auto& seg : path) {
    if (!out.empty()) out.push_back('.');
    out += seg;
  }
  return out;
}

}  // namespace toml_detail

/// Parse a TOML-subset document into a JSON object. Throws
/// std::invalid_argument with a line number on any syntax error.
inline nlohmann::json parse_toml(std::string_view text) {
  using namespace toml_detail;
  Cursor c{text};
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* table = &root;
  std::set<std::string> declared_tables;
  std::set<std::string> assigned_keys;
  std::string table_prefix;

  for (;;) {
    c.skip(true);
    if (c.done()) return root;

    if (c.peek() == '[') {
      c.advance();
      if (!c.done() && c.peek() == '[')
        c.fail("arrays of tables ([[...]]) are not supported");
      auto path = parse_key_path(c);
      c.skip(false);
      if (c.done() || c.peek() != ']') c.fail("expected ']' to close the table header");
      c.advance();
      c.require_line_end("table header");

      std::string full = join_path(path);
      if (!declared_tables.insert(full).second)
        c.fail("table [" + full + "] declared twice");
      if (assigned_keys.count(full))
        c.fail("table [" + full + "] conflicts with a key of the same name");
      table = descend(&root, path, path.size(), c);
      table_prefix = full + ".";
      continue;
    }

    auto path = parse_key_path(c);
    c.skip(false);
    if (c.done() || c.peek() != '=') c.fail("expected '=' after key '" + join_path(path) + "'");
    c.advance();
    nlohmann::json value = parse_value(c);
    c.require_line_end("value");

    std::string full = table_prefix + join_path(path);
    if (!assigned_keys.insert(full).second || declared_tables.count(full))
      c.fail("duplicate key '" + full + "'");
    nlohmann::json* parent = descend(table, path, path.size() - 1, c);
    if (parent->contains(path.back()) && !(*parent)[path.back()].is_object())
      c.fail("duplicate key '" + full + "'");
    if (parent->contains(path.back()))
      c.fail("key '" + full + "' would overwrite a table");
    (*parent)[path.back()] = std::move(value);
  }
}

/// Accept either JSON (first non-space char '{') or the TOML subset.
inline nlohmann::json parse_config_text(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  if (i < text.size() && text[i] == '{') {
    try {
      return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }
  }
  return parse_toml(text);
}

}  // namespace fblab
