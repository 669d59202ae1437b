#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grasp/index.hpp"
#include "grasp/provider.hpp"
#include "grasp/queryprep.hpp"

namespace grasp {

struct ToolSpec {
  std::string name;
  std::string description;  // the model routes on this text
  nlohmann::json argument_schema;
};

enum class StepKind { thought, action, observation };
enum class Termination { final_answer, max_steps, error };

std::string_view to_string(StepKind kind);
std::string_view to_string(Termination t);

/// Provenance of one retrieved chunk, kept on the observation that
/// surfaced it.
struct HitRef {
  std::string chunk_id;
  std::string doc_id;
  int fiscal_year = 0;
  int page = 0;
  int sub_index = 0;
  double score = 0;

  bool operator==(const HitRef&) const = default;
};

struct AgentStep {
  StepKind kind = StepKind::thought;
  std::string content;
  std::optional<std::string> tool_name;
  std::optional<nlohmann::json> tool_args;
  std::vector<HitRef> hits;   // observation steps of budget_tool only
  bool final_answer = false;  // the thought that carried the final answer
};

struct AgentTrace {
  std::vector<AgentStep> steps;
  std::size_t iterations = 0;
  Termination terminated_by = Termination::final_answer;
  QueryPlan plan;
};

struct Citation {
  std::string doc_id;
  std::string title;
  std::string source_url;
  int page = 1;
  int fiscal_year = 0;

  /// source_url + "#page=" + page
  std::string url() const;
  bool operator==(const Citation&) const = default;
};

enum class ChartKind { pie, bar, line };

struct ChartPoint {
  std::string label;
  double value = 0;
  bool operator==(const ChartPoint&) const = default;
};

struct ChartSpec {
  ChartKind kind = ChartKind::bar;
  std::string title;
  std::vector<ChartPoint> series;
  std::string unit;
  bool operator==(const ChartSpec&) const = default;
};

/// Builds a ChartSpec from a {kind, title, series, unit} request. Values may
/// be numbers or numeric strings. Throws UsageError on invalid input: unknown
/// kind, empty series, duplicate labels, or a pie with fewer than two slices
/// or a negative value.
ChartSpec make_chart(const nlohmann::json& request);

struct Answer {
  std::string text;
  std::vector<Citation> citations;
  std::optional<ChartSpec> chart;
  AgentTrace trace;
};

void to_json(nlohmann::json& j, const HitRef& h);
void from_json(const nlohmann::json& j, HitRef& h);
void to_json(nlohmann::json& j, const AgentStep& s);
void from_json(const nlohmann::json& j, AgentStep& s);
void to_json(nlohmann::json& j, const AgentTrace& t);
void from_json(const nlohmann::json& j, AgentTrace& t);
void to_json(nlohmann::json& j, const Citation& c);
void from_json(const nlohmann::json& j, Citation& c);
void to_json(nlohmann::json& j, const ChartSpec& c);
void from_json(const nlohmann::json& j, ChartSpec& c);

/// One Citation per distinct (doc_id, page), ordered by fiscal_year
/// descending, then doc_id, then page.
std::vector<Citation> build_citations(std::span<const SearchHit> hits);

/// Hits whose page the text refers to as "doc_id p.N" (the observation tag
/// form). Empty when the text names none of them.
std::vector<SearchHit> referenced_hits(std::span<const SearchHit> hits, std::string_view text);

// ---------------------------------------------------------------------------
// Tools
// ---------------------------------------------------------------------------

struct ToolContext {
  const VectorIndex& index;
  const Provider& provider;
  const QueryPlan& plan;
  std::size_t k;
};

struct ToolOutcome {
  std::string observation;
  std::vector<SearchHit> hits;
  std::optional<ChartSpec> chart;
};

class Tool {
 public:
  virtual ~Tool() = default;
  virtual const ToolSpec& spec() const = 0;
  /// May throw; the agent turns exceptions into error observations.
  virtual ToolOutcome run(const nlohmann::json& args, const ToolContext& ctx) const = 0;
};

/// Similarity search over the budget documents. Observation passages are
/// prefixed "[doc_id p.N FYyyyy]" followed by an actual/projected qualifier
/// relative to the queried years.
ToolOutcome budget_search(const std::string& query_text, const YearFilter& filter,
                          const VectorIndex& index, const Provider& provider, std::size_t k,
                          std::span<const int> queried_years = {});

class BudgetTool final : public Tool {
 public:
  BudgetTool();
  const ToolSpec& spec() const override { return spec_; }
  /// args: {"query"?: text, "years"?: [int]}. Missing query uses the plan's
  /// rephrased text; years are clamped to the index's available years.
  ToolOutcome run(const nlohmann::json& args, const ToolContext& ctx) const override;

 private:
  ToolSpec spec_;
};

class CalculatorTool final : public Tool {
 public:
  CalculatorTool();
  const ToolSpec& spec() const override { return spec_; }
  ToolOutcome run(const nlohmann::json& args, const ToolContext& ctx) const override;

 private:
  ToolSpec spec_;
};

class ChartTool final : public Tool {
 public:
  ChartTool();
  const ToolSpec& spec() const override { return spec_; }
  ToolOutcome run(const nlohmann::json& args, const ToolContext& ctx) const override;

 private:
  ToolSpec spec_;
};

class ToolRegistry {
 public:
  /// Throws UsageError on duplicate names or empty descriptions.
  void add(std::shared_ptr<const Tool> tool);
  const Tool* find(std::string_view name) const;
  std::span<const std::shared_ptr<const Tool>> tools() const { return tools_; }

  /// budget_tool, calculator_tool, chart_tool
  static ToolRegistry standard();

 private:
  std::vector<std::shared_ptr<const Tool>> tools_;
};

// ---------------------------------------------------------------------------
// ReAct loop
// ---------------------------------------------------------------------------

struct Directive {
  enum class Kind { none, action, final_answer } kind = Kind::none;
  std::string thought;  // text before the directive line
  std::string tool_name;
  std::string raw_args;
  std::string final_text;
};

/// Finds the first line starting with "ACTION " or "FINAL " (code fences and
/// surrounding whitespace ignored). FINAL text runs to the end of the reply.
Directive parse_directive(std::string_view reply);

inline constexpr std::size_t kDefaultMaxSteps = 8;
inline constexpr std::size_t kDefaultTopK = 6;

struct AgentOptions {
  std::size_t max_steps = kDefaultMaxSteps;
  std::size_t k = kDefaultTopK;
  std::string system_prompt;
  CompletionParams params;
};

using StepObserver = std::function<void(const AgentStep&)>;

class Agent {
 public:
  Agent(const Provider& provider, const VectorIndex& index, ToolRegistry tools,
        AgentOptions options = {});

  /// Runs thought/action/observation iterations until the provider emits
  /// FINAL or max_steps provider turns have been spent.
  Answer run(std::span<const ChatMessage> history, const std::string& user_query,
             const QueryPlan& plan, const StepObserver& on_step = {}) const;

  /// System message: domain prompt, tool catalogue and directive protocol.
  std::string system_message() const;

 private:
  const Provider& provider_;
  const VectorIndex& index_;
  ToolRegistry tools_;
  AgentOptions options_;
};

}  // namespace grasp
