#pragma once

#include <string>
#include <string_view>

namespace grasp {

struct CalcResult {
  std::string exact;      // full-precision decimal
  double value = 0;
  std::string formatted;  // what the agent sees
};

/// Evaluates + - * / ( ) with standard precedence, unary minus and postfix
/// percent ("30%" is 0.30). Accepts the typographic operators U+2212 and
/// U+00D7 as well. Arithmetic is decimal with 50 significant digits.
/// Throws UsageError on parse failure or division by zero.
CalcResult evaluate_expression(std::string_view expression);

/// |x| >= 1: at most 2 decimals. 0 < |x| < 1: 4 decimals plus the percent
/// reading, e.g. "0.0562 (5.62%)".
std::string format_calc_value(double value);

}  // namespace grasp
