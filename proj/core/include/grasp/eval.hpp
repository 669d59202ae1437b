#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grasp/agent.hpp"

namespace grasp {

class Engine;

enum class EvalCategory { general_budget, revenues_expenditures, debt_deficits, impact_outcome };
enum class Functionality { table_retrieval, calculation, context, comparison_over_time, sequential };

inline constexpr EvalCategory kAllCategories[] = {
    EvalCategory::general_budget, EvalCategory::revenues_expenditures, EvalCategory::debt_deficits,
    EvalCategory::impact_outcome};
inline constexpr Functionality kAllFunctionalities[] = {
    Functionality::table_retrieval, Functionality::calculation, Functionality::context,
    Functionality::comparison_over_time, Functionality::sequential};

std::string_view to_string(EvalCategory c);
std::string_view to_string(Functionality f);
std::optional<EvalCategory> category_from_string(std::string_view s);
std::optional<Functionality> functionality_from_string(std::string_view s);

inline constexpr double kDefaultRelTolerance = 0.005;

struct Matcher {
  enum class Kind { number_within_tolerance, contains_all, regex } kind = Kind::contains_all;
  double value = 0;                          // number_within_tolerance
  double rel_tol = kDefaultRelTolerance;     // number_within_tolerance
  std::vector<std::string> terms;            // contains_all, case-insensitive
  std::string pattern;                       // regex (ECMAScript, searched)
  bool icase = true;                         // regex

  bool matches(const std::string& answer_text) const;
};

void to_json(nlohmann::json& j, const Matcher& m);
/// Throws UsageError on a malformed matcher.
void from_json(const nlohmann::json& j, Matcher& m);

struct ExpectedCitation {
  std::string doc_id;
  int page = 0;
};

struct EvalCase {
  std::string id;
  std::string question;
  std::optional<std::string> follow_up_of;
  EvalCategory category = EvalCategory::general_budget;
  Functionality functionality = Functionality::table_retrieval;
  std::vector<Matcher> matchers;
  std::optional<ExpectedCitation> expected_citation;
  std::optional<std::string> reference_answer;  // what a perfect backend would say
};

void to_json(nlohmann::json& j, const EvalCase& c);

/// Parses one case; throws UsageError naming the offending field.
EvalCase parse_case(const nlohmann::json& j);

/// One case per line; blank lines are skipped. Errors carry "line N:".
/// Also checks that follow_up_of references resolve and form simple chains.
std::vector<EvalCase> load_cases(const std::filesystem::path& path);
std::vector<EvalCase> parse_cases(std::istream& in);

/// Case ids grouped into chains: each chain starts at a case without a parent
/// and continues through its follow-ups. Chains keep the order of their
/// first case. Throws UsageError on dangling parents, cycles or forks.
std::vector<std::vector<std::size_t>> case_chains(std::span<const EvalCase> cases);

/// Extracts every number in `text`, honoring thousands separators, a leading
/// '$', and the scale words million/M/billion/B/thousand/K. "5.6%" yields 5.6.
std::vector<double> extract_numbers(const std::string& text);

class EvalBackend {
 public:
  virtual ~EvalBackend() = default;
  virtual std::string label() const = 0;
  /// Starts a conversation and returns its id.
  virtual std::string new_session() = 0;
  virtual Answer ask(const std::string& session_id, const std::string& question) = 0;
};

/// Answers through an Engine with per-session history. Session ids are
/// sequential ("session-1", ...) so reports stay reproducible.
class EngineBackend final : public EvalBackend {
 public:
  explicit EngineBackend(const Engine& engine, std::string label = "grasp");
  std::string label() const override { return label_; }
  std::string new_session() override;
  Answer ask(const std::string& session_id, const std::string& question) override;

 private:
  struct Conversation {
    std::vector<ChatMessage> history;
    std::optional<std::string> last_query;
  };
  const Engine& engine_;
  std::string label_;
  std::map<std::string, Conversation> sessions_;
};

struct CaseResult {
  std::string id;
  EvalCategory category{};
  Functionality functionality{};
  std::string session_id;
  bool passed = false;
  std::vector<bool> matched;        // one per matcher
  std::optional<bool> citation_ok;  // unset when the case expects no citation
  std::string answer_text;
  std::optional<std::string> error;
};

struct Tally {
  std::size_t cases = 0;
  std::size_t passed = 0;
  /// nullopt when there are no cases.
  std::optional<double> accuracy() const;
};

struct EvalReport {
  std::string backend;
  std::string timestamp;  // ISO 8601 UTC
  std::vector<CaseResult> cases;  // in execution order
  std::map<EvalCategory, Tally> by_category;        // every category present
  std::map<Functionality, Tally> by_functionality;  // every class present
  Tally overall;
  Tally citations;  // over cases with expected_citation

  std::string summary() const;
};

void to_json(nlohmann::json& j, const CaseResult& r);
void to_json(nlohmann::json& j, const EvalReport& r);

struct EvalOptions {
  std::function<std::chrono::system_clock::time_point()> clock = [] {
    return std::chrono::system_clock::now();
  };
};

/// Runs each chain in its own session, follow-ups after their parent. A
/// backend exception fails that case only.
EvalReport run_eval(std::span<const EvalCase> cases, EvalBackend& backend, const EvalOptions& options = {});

}  // namespace grasp
