#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "grasp/index.hpp"
#include "grasp/provider.hpp"

namespace grasp {

/// Prompt texts with `{placeholder}` substitution. Files in a prompts
/// directory override the built-in defaults one by one.
struct PromptTemplates {
  std::string rephrase;       // {currentQuery}, {lastQuery}
  std::string extract_years;  // {query}
  std::string system;         // domain knowledge for the agent

  static PromptTemplates defaults();
  /// Reads rephrase.txt, extract_years.txt and system.txt from `dir`.
  /// Throws UsageError when `dir` does not exist.
  static PromptTemplates load(const std::filesystem::path& dir);
};

struct QueryPlan {
  std::string original;
  std::string rephrased;
  std::vector<int> extracted_years;  // ascending, unique
  YearFilter filter;
  std::string rationale;
  bool rephrase_fell_back = false;
  bool years_fell_back = false;
};

void to_json(nlohmann::json& j, const QueryPlan& p);
void from_json(const nlohmann::json& j, QueryPlan& p);

struct QueryPrepOptions {
  // Later years admitted beyond the latest queried year; unset means all.
  std::optional<int> max_expansion_years;
  CompletionParams params;
};

/// Parses a reply of the form "2023, 2024" or "NONE". Anything else,
/// including years outside [1900, 2200], yields nullopt.
std::optional<std::vector<int>> parse_year_list(std::string_view reply);

/// Deterministic year finder: FY2024 / FY 2024 / FY24 (2000 + NN), standalone
/// 19xx and 20xx, and "between Y1 and Y2" expanded inclusively.
std::vector<int> find_years(std::string_view text);

/// Every available year from the earliest queried year onward, plus the
/// queried years themselves. Empty `extracted` means no restriction.
YearFilter expand_years(std::span<const int> extracted, std::span<const int> available,
                        std::optional<int> max_expansion_years = std::nullopt);

struct RephraseResult {
  std::string text;
  std::string prompt;
  bool fell_back = false;
  std::string note;
};

struct YearExtraction {
  std::vector<int> years;
  bool fell_back = false;
  std::string note;
};

/// Turns a conversational query into a search-ready QueryPlan. Stateless;
/// safe to share across sessions.
class QueryPlanner {
 public:
  QueryPlanner(const Provider& provider, PromptTemplates templates, QueryPrepOptions options = {});

  /// Never throws on provider failure; falls back to `current_query`.
  RephraseResult rephrase(const std::string& current_query,
                          const std::optional<std::string>& last_query) const;

  YearExtraction extract_years(const std::string& rephrased) const;

  QueryPlan plan(const std::string& current_query, const std::optional<std::string>& last_query,
                 std::span<const int> available_years) const;

  const PromptTemplates& templates() const { return templates_; }

 private:
  const Provider& provider_;
  PromptTemplates templates_;
  QueryPrepOptions options_;
};

}  // namespace grasp
