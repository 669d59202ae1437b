#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace grasp::text {

std::string trim(std::string_view s);
bool is_blank(std::string_view s);

/// Collapses every run of whitespace into one space and trims the ends.
std::string collapse_whitespace(std::string_view s);

/// Lowercased ASCII-alphanumeric tokens; everything else separates.
std::vector<std::string> tokenize(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);
bool starts_with_icase(std::string_view s, std::string_view prefix);

/// 64-bit FNV-1a with the offset basis perturbed by `seed`.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0);
std::uint64_t mix64(std::uint64_t x);
std::string hex64(std::uint64_t v);

/// Substitutes `{name}` placeholders. Unknown placeholders are left as-is.
std::string render_template(std::string_view tmpl,
                            const std::map<std::string, std::string>& values);

/// "12,345,678" with thousands separators; negative values keep the sign.
std::string group_thousands(long long value);

std::string random_uuid();

}  // namespace grasp::text
