#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "grasp/agent.hpp"
#include "grasp/calculator.hpp"
#include "grasp/error.hpp"
#include "grasp/text.hpp"

namespace grasp {

std::string Citation::url() const { return source_url + "#page=" + std::to_string(page); }

std::vector<Citation> build_citations(std::span<const SearchHit> hits) {
  std::map<std::pair<std::string, int>, Citation> unique;
  for (const auto& h : hits) {
    const auto& c = *h.chunk;
    auto key = std::make_pair(c.doc_id, c.page);
    if (unique.contains(key)) continue;
    Citation cit;
    cit.doc_id = c.doc_id;
    cit.page = c.page;
    cit.fiscal_year = c.fiscal_year;
    if (h.document) {
      cit.title = h.document->title;
      cit.source_url = h.document->source_url;
    } else {
      cit.title = c.doc_id;
    }
    unique.emplace(std::move(key), std::move(cit));
  }
  std::vector<Citation> out;
  out.reserve(unique.size());
  for (auto& [key, c] : unique) out.push_back(std::move(c));
  std::stable_sort(out.begin(), out.end(), [](const Citation& a, const Citation& b) {
    if (a.fiscal_year != b.fiscal_year) return a.fiscal_year > b.fiscal_year;
    return std::tie(a.doc_id, a.page) < std::tie(b.doc_id, b.page);
  });
  return out;
}

std::vector<SearchHit> referenced_hits(std::span<const SearchHit> hits, std::string_view text) {
  std::vector<SearchHit> out;
  for (const auto& h : hits) {
    const auto needle = h.chunk->doc_id + " p." + std::to_string(h.chunk->page);
    for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + 1)) {
      auto end = pos + needle.size();
      bool whole = end == text.size() || !std::isdigit(static_cast<unsigned char>(text[end]));
      bool starts = pos == 0 || !std::isalnum(static_cast<unsigned char>(text[pos - 1]));
      if (whole && starts) {
        out.push_back(h);
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

ChartKind chart_kind_from(std::string_view s) {
  if (s == "pie") return ChartKind::pie;
  if (s == "bar") return ChartKind::bar;
  if (s == "line") return ChartKind::line;
  throw UsageError("chart kind must be pie, bar or line, got '" + std::string(s) + "'");
}

std::string_view to_string(ChartKind k) {
  switch (k) {
    case ChartKind::pie: return "pie";
    case ChartKind::bar: return "bar";
    case ChartKind::line: return "line";
  }
  return "bar";
}

double chart_value(const nlohmann::json& v, const std::string& label) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    std::string s;
    for (char c : v.get<std::string>()) {
      if (c != ',' && c != '$' && !std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
    }
    try {
      std::size_t used = 0;
      double d = std::stod(s, &used);
      if (used == s.size()) return d;
    } catch (const std::exception&) {
    }
  }
  throw UsageError("chart value for '" + label + "' is not a number");
}

}  // namespace

ChartSpec make_chart(const nlohmann::json& request) {
  if (!request.is_object()) throw UsageError("chart request must be an object");
  ChartSpec spec;
  spec.kind = chart_kind_from(request.value("kind", std::string("bar")));
  spec.title = request.value("title", std::string());
  spec.unit = request.value("unit", std::string());
  if (!request.contains("series") || !request["series"].is_array()) {
    throw UsageError("chart request needs a 'series' array");
  }
  std::set<std::string> labels;
  for (const auto& point : request["series"]) {
    if (!point.is_object() || !point.contains("label") || !point["label"].is_string() ||
        !point.contains("value")) {
      throw UsageError("chart series entries need 'label' and 'value'");
    }
    ChartPoint p{point["label"].get<std::string>(), 0};
    p.value = chart_value(point["value"], p.label);
    if (!std::isfinite(p.value)) throw UsageError("chart value for '" + p.label + "' is not finite");
    if (!labels.insert(p.label).second) throw UsageError("duplicate chart label '" + p.label + "'");
    spec.series.push_back(std::move(p));
  }
  if (spec.series.empty()) throw UsageError("chart series is empty");
  if (spec.kind == ChartKind::pie) {
    if (spec.series.size() < 2) throw UsageError("pie chart needs at least 2 slices");
    for (const auto& p : spec.series) {
      if (p.value < 0) throw UsageError("pie slice '" + p.label + "' is negative");
    }
  }
  return spec;
}

void to_json(nlohmann::json& j, const ChartSpec& c) {
  auto series = nlohmann::json::array();
  for (const auto& p : c.series) series.push_back({{"label", p.label}, {"value", p.value}});
  j = nlohmann::json{
      {"kind", to_string(c.kind)}, {"title", c.title}, {"series", std::move(series)}, {"unit", c.unit}};
}

void from_json(const nlohmann::json& j, ChartSpec& c) { c = make_chart(j); }

// ---------------------------------------------------------------------------

namespace {

std::string year_qualifier(int doc_year, std::span<const int> queried) {
  std::vector<std::string> parts;
  for (int q : queried) {
    if (doc_year > q) parts.push_back("actual for FY" + std::to_string(q));
    else if (doc_year == q) parts.push_back("projected for FY" + std::to_string(q));
  }
  if (parts.empty()) return {};
  std::string out = " (";
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += "; ";
    out += parts[i];
  }
  return out + ")";
}

std::string describe_years(const YearFilter& f) {
  if (f.match_all()) return "{all}";
  std::string out = "{";
  bool first = true;
  for (int y : f.years) {
    if (!first) out += ", ";
    out += std::to_string(y);
    first = false;
  }
  return out + "}";
}

}  // namespace

ToolOutcome budget_search(const std::string& query_text, const YearFilter& filter,
                          const VectorIndex& index, const Provider& provider, std::size_t k,
                          std::span<const int> queried_years) {
  ToolOutcome out;
  if (text::is_blank(query_text)) throw UsageError("budget_tool: empty query");
  if (index.size() > 0) out.hits = index.search(provider.embed_one(query_text), k, filter);
  if (out.hits.empty()) {
    out.observation = "NO_RESULTS for years " + describe_years(filter);
    return out;
  }
  std::ostringstream obs;
  for (std::size_t i = 0; i < out.hits.size(); ++i) {
    const auto& c = *out.hits[i].chunk;
    if (i) obs << "\n\n";
    obs << '[' << c.doc_id << " p." << c.page << " FY" << c.fiscal_year << ']'
        << year_qualifier(c.fiscal_year, queried_years) << '\n'
        << c.text;
  }
  out.observation = obs.str();
  return out;
}

BudgetTool::BudgetTool()
    : spec_{"budget_tool",
            "Searches the official budget documents and returns the most relevant pages, each "
            "tagged with document, page and fiscal year. Defaults to the user's question and the "
            "fiscal years in scope.",
            {{"type", "object"},
             {"properties",
              {{"query", {{"type", "string"}}},
               {"years", {{"type", "array"}, {"items", {{"type", "integer"}}}}}}}}} {}

ToolOutcome BudgetTool::run(const nlohmann::json& args, const ToolContext& ctx) const {
  std::string query = ctx.plan.rephrased;
  if (args.contains("query")) {
    if (!args["query"].is_string()) throw UsageError("budget_tool: 'query' must be a string");
    if (!text::is_blank(args["query"].get<std::string>())) query = args["query"].get<std::string>();
  }
  YearFilter filter = ctx.plan.filter;
  bool years_given = false;
  if (args.contains("years") && !args["years"].is_null()) {
    if (!args["years"].is_array()) throw UsageError("budget_tool: 'years' must be an array");
    years_given = true;
    auto available = ctx.index.available_years();
    std::set<int> wanted;
    for (const auto& y : args["years"]) {
      if (!y.is_number_integer()) throw UsageError("budget_tool: years must be integers");
      if (std::binary_search(available.begin(), available.end(), y.get<int>())) {
        wanted.insert(y.get<int>());
      }
    }
    filter = YearFilter::only(std::move(wanted));
  }
  ToolOutcome out;
  if (years_given && filter.match_all()) {
    out.observation = "NO_RESULTS for years " + args["years"].dump();
  } else {
    out = budget_search(query, filter, ctx.index, ctx.provider, ctx.k, ctx.plan.extracted_years);
  }
  return out;
}

CalculatorTool::CalculatorTool()
    : spec_{"calculator_tool",
            "Evaluates an arithmetic expression with + - * / ( ) and percent, e.g. "
            "\"(118.4 - 112.1) / 112.1\". Use it for totals, differences and growth rates.",
            {{"type", "object"},
             {"properties", {{"expression", {{"type", "string"}}}}},
             {"required", {"expression"}}}} {}

ToolOutcome CalculatorTool::run(const nlohmann::json& args, const ToolContext&) const {
  if (!args.contains("expression") || !args["expression"].is_string()) {
    throw UsageError("calculator_tool: missing string argument 'expression'");
  }
  return {evaluate_expression(args["expression"].get<std::string>()).formatted, {}, std::nullopt};
}

ChartTool::ChartTool()
    : spec_{"chart_tool",
            "Draws a pie, bar or line chart from labeled values, e.g. the budget split by sector.",
            {{"type", "object"},
             {"properties",
              {{"kind", {{"type", "string"}, {"enum", {"pie", "bar", "line"}}}},
               {"title", {{"type", "string"}}},
               {"unit", {{"type", "string"}}},
               {"series",
                {{"type", "array"},
                 {"items",
                  {{"type", "object"},
                   {"properties", {{"label", {{"type", "string"}}}, {"value", {{"type", "number"}}}}}}}}}}},
             {"required", {"kind", "series"}}}} {}

ToolOutcome ChartTool::run(const nlohmann::json& args, const ToolContext&) const {
  ToolOutcome out;
  out.chart = make_chart(args);
  std::ostringstream obs;
  obs << "chart ready: " << to_string(out.chart->kind) << " \"" << out.chart->title << "\" with "
      << out.chart->series.size() << (out.chart->kind == ChartKind::pie ? " slices" : " points");
  if (!out.chart->unit.empty()) obs << " in " << out.chart->unit;
  out.observation = obs.str();
  return out;
}

void ToolRegistry::add(std::shared_ptr<const Tool> tool) {
  if (!tool) throw UsageError("null tool");
  const auto& spec = tool->spec();
  if (spec.name.empty() || text::is_blank(spec.description)) {
    throw UsageError("tool needs a name and a description");
  }
  if (find(spec.name)) throw UsageError("duplicate tool name '" + spec.name + "'");
  tools_.push_back(std::move(tool));
}

const Tool* ToolRegistry::find(std::string_view name) const {
  for (const auto& t : tools_) {
    if (t->spec().name == name) return t.get();
  }
  return nullptr;
}

ToolRegistry ToolRegistry::standard() {
  ToolRegistry r;
  r.add(std::make_shared<BudgetTool>());
  r.add(std::make_shared<CalculatorTool>());
  r.add(std::make_shared<ChartTool>());
  return r;
}

}  // namespace grasp
