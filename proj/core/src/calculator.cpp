#include "grasp/calculator.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>

#include <boost/multiprecision/cpp_dec_float.hpp>

#include "grasp/error.hpp"

namespace grasp {

namespace {

using Decimal = boost::multiprecision::cpp_dec_float_50;

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {}

  Decimal parse() {
    Decimal v = expr();
    skip_ws();
    if (pos_ != src_.size()) fail("unexpected '" + std::string(1, src_[pos_]) + "'");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw UsageError("calculator: " + why + " at position " + std::to_string(pos_));
  }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  // Returns the ASCII operator at the cursor, folding the UTF-8 minus sign
  // and multiplication sign, without consuming it.
  char peek_op(std::size_t* width = nullptr) {
    skip_ws();
    if (pos_ >= src_.size()) return '\0';
    auto rest = src_.substr(pos_);
    std::size_t w = 1;
    char op = rest[0];
    if (rest.starts_with("\xE2\x88\x92")) {
      op = '-';
      w = 3;
    } else if (rest.starts_with("\xC3\x97")) {
      op = '*';
      w = 2;
    } else if (rest.starts_with("\xC3\xB7")) {
      op = '/';
      w = 2;
    }
    if (width) *width = w;
    return op;
  }

  bool accept(char want) {
    std::size_t w = 0;
    if (peek_op(&w) != want) return false;
    pos_ += w;
    return true;
  }

  Decimal expr() {
    Decimal v = term();
    for (;;) {
      if (accept('+')) v += term();
      else if (accept('-')) v -= term();
      else return v;
    }
  }

  Decimal term() {
    Decimal v = unary();
    for (;;) {
      if (accept('*')) {
        v *= unary();
      } else if (accept('/')) {
        Decimal d = unary();
        if (d == 0) fail("division by zero");
        v /= d;
      } else {
        return v;
      }
    }
  }

  Decimal unary() {
    if (accept('-')) return -unary();
    if (accept('+')) return unary();
    return postfix();
  }

  Decimal postfix() {
    Decimal v = primary();
    while (accept('%')) v /= 100;
    return v;
  }

  Decimal primary() {
    if (accept('(')) {
      Decimal v = expr();
      if (!accept(')')) fail("missing ')'");
      return v;
    }
    skip_ws();
    std::size_t start = pos_;
    std::string digits;
    bool seen_dot = false;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (std::isdigit(static_cast<unsigned char>(c))) {
        digits.push_back(c);
      } else if (c == '.' && !seen_dot) {
        seen_dot = true;
        digits.push_back(c);
      } else if (c == ',' && !digits.empty() && !seen_dot) {
        // thousands separator, as in 1,200,000
      } else {
        break;
      }
      ++pos_;
    }
    if (digits.empty() || digits == ".") {
      pos_ = start;
      fail(pos_ < src_.size() ? "expected a number" : "unexpected end of expression");
    }
    return Decimal(digits);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

std::string trim_zeros(std::string s) {
  if (s.find('.') == std::string::npos) return s;
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  if (s == "-0") s = "0";
  return s;
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return trim_zeros(buf);
}

}  // namespace

std::string format_calc_value(double value) {
  if (value == 0 || std::fabs(value) >= 1) return fixed(value, 2);
  return fixed(value, 4) + " (" + fixed(value * 100, 2) + "%)";
}

CalcResult evaluate_expression(std::string_view expression) {
  Parser parser(expression);
  Decimal v = parser.parse();
  CalcResult r;
  r.exact = v.str(50, std::ios_base::fmtflags(0));
  r.value = v.convert_to<double>();
  if (!std::isfinite(r.value)) throw UsageError("calculator: result out of range");
  r.formatted = format_calc_value(r.value);
  return r;
}

}  // namespace grasp
