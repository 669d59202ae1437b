#include "grasp/queryprep.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "grasp/corpus.hpp"
#include "grasp/error.hpp"
#include "grasp/text.hpp"

namespace grasp {

PromptTemplates PromptTemplates::defaults() {
  PromptTemplates t;
  t.rephrase =
      "Rephrase the following query to explicitly state the question and the year(s) in which "
      "the question is being asked: {currentQuery}\n\n"
      "There may be additional context that is found in the previous user query: {lastQuery}";
  t.extract_years =
      "List the fiscal years that the following question is about. Output only comma-separated "
      "4-digit years, or NONE if the question names no year.\n\nQuestion: {query}";
  t.system =
      "You answer questions about a town's municipal budget using only the official budget "
      "documents available through your tools.";
  return t;
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw UsageError("prompts directory not found: " + dir.string());
  }
  auto t = defaults();
  auto read_into = [&](const char* name, std::string& slot) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) return;
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string s = ss.str();
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    slot = std::move(s);
  };
  read_into("rephrase.txt", t.rephrase);
  read_into("extract_years.txt", t.extract_years);
  read_into("system.txt", t.system);
  return t;
}

void to_json(nlohmann::json& j, const QueryPlan& p) {
  j = nlohmann::json{{"original", p.original},
                     {"rephrased", p.rephrased},
                     {"extracted_years", p.extracted_years},
                     {"filter", p.filter},
                     {"rationale", p.rationale},
                     {"rephrase_fell_back", p.rephrase_fell_back},
                     {"years_fell_back", p.years_fell_back}};
}

void from_json(const nlohmann::json& j, QueryPlan& p) {
  p.original = j.at("original").get<std::string>();
  p.rephrased = j.at("rephrased").get<std::string>();
  p.extracted_years = j.at("extracted_years").get<std::vector<int>>();
  p.filter = j.at("filter").get<YearFilter>();
  p.rationale = j.value("rationale", "");
  p.rephrase_fell_back = j.value("rephrase_fell_back", false);
  p.years_fell_back = j.value("years_fell_back", false);
}

// ---------------------------------------------------------------------------

namespace {

bool valid_year(int y) { return y >= kMinFiscalYear && y <= kMaxFiscalYear; }

std::vector<int> sorted_unique(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::string join_years(std::span<const int> years) {
  std::string out;
  for (int y : years) {
    if (!out.empty()) out += ", ";
    out += std::to_string(y);
  }
  return out.empty() ? "none" : out;
}

constexpr std::string_view kYearToken = R"((?:FY\s*-?\s*(\d{4}|\d{2})|((?:19|20)\d{2})))";

int year_from_match(const std::ssub_match& fy, const std::ssub_match& plain) {
  if (fy.matched) {
    int v = std::stoi(fy.str());
    return fy.length() == 2 ? 2000 + v : v;
  }
  return std::stoi(plain.str());
}

constexpr int kMaxRangeSpan = 100;

}  // namespace

std::optional<std::vector<int>> parse_year_list(std::string_view reply) {
  auto s = text::trim(reply);
  if (s.empty()) return std::nullopt;
  std::string upper;
  for (char c : s) upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (upper == "NONE" || upper == "NONE.") return std::vector<int>{};
  static const std::regex kList(R"(^\d{4}(\s*,\s*\d{4})*\.?$)");
  if (!std::regex_match(s, kList)) return std::nullopt;
  std::vector<int> years;
  static const std::regex kYear(R"(\d{4})");
  for (std::sregex_iterator it(s.begin(), s.end(), kYear), end; it != end; ++it) {
    int y = std::stoi(it->str());
    if (!valid_year(y)) return std::nullopt;
    years.push_back(y);
  }
  return sorted_unique(std::move(years));
}

std::vector<int> find_years(std::string_view input) {
  const std::string s(input);
  std::vector<int> years;

  static const std::regex kRange("\\bbetween\\s+" + std::string(kYearToken) + "\\s+and\\s+" +
                                     std::string(kYearToken) + "\\b",
                                 std::regex::icase);
  for (std::sregex_iterator it(s.begin(), s.end(), kRange), end; it != end; ++it) {
    const auto& m = *it;
    int a = year_from_match(m[1], m[2]);
    int b = year_from_match(m[3], m[4]);
    if (a > b) std::swap(a, b);
    if (b - a > kMaxRangeSpan) continue;
    for (int y = a; y <= b; ++y) years.push_back(y);
  }

  static const std::regex kSingle("\\b" + std::string(kYearToken) + "\\b", std::regex::icase);
  for (std::sregex_iterator it(s.begin(), s.end(), kSingle), end; it != end; ++it) {
    years.push_back(year_from_match((*it)[1], (*it)[2]));
  }
  std::erase_if(years, [](int y) { return !valid_year(y); });
  return sorted_unique(std::move(years));
}

YearFilter expand_years(std::span<const int> extracted, std::span<const int> available,
                        std::optional<int> max_expansion_years) {
  if (extracted.empty()) return YearFilter::all();
  const int earliest = *std::min_element(extracted.begin(), extracted.end());
  const int latest = *std::max_element(extracted.begin(), extracted.end());
  std::set<int> years(extracted.begin(), extracted.end());
  for (int y : available) {
    if (y < earliest) continue;
    if (max_expansion_years && y > latest + *max_expansion_years) continue;
    years.insert(y);
  }
  return YearFilter::only(std::move(years));
}

// ---------------------------------------------------------------------------

QueryPlanner::QueryPlanner(const Provider& provider, PromptTemplates templates,
                           QueryPrepOptions options)
    : provider_(provider), templates_(std::move(templates)), options_(std::move(options)) {}

RephraseResult QueryPlanner::rephrase(const std::string& current_query,
                                      const std::optional<std::string>& last_query) const {
  if (text::is_blank(current_query)) throw UsageError("rephrase: empty query");
  RephraseResult r;
  r.prompt = text::render_template(
      templates_.rephrase,
      {{"currentQuery", current_query}, {"lastQuery", last_query.value_or("")}});
  auto params = options_.params;
  params.echo = current_query;
  try {
    std::vector<ChatMessage> messages{ChatMessage::user(r.prompt)};
    r.text = text::trim(provider_.complete(messages, params));
    if (r.text.empty()) {
      r.fell_back = true;
      r.note = "provider returned an empty rephrasing";
    }
  } catch (const std::exception& e) {
    r.fell_back = true;
    r.note = std::string("provider failed: ") + e.what();
  }
  if (r.fell_back) r.text = current_query;
  return r;
}

YearExtraction QueryPlanner::extract_years(const std::string& rephrased) const {
  if (text::is_blank(rephrased)) throw UsageError("extract_years: empty query");
  YearExtraction out;
  try {
    std::vector<ChatMessage> messages{
        ChatMessage::user(text::render_template(templates_.extract_years, {{"query", rephrased}}))};
    auto reply = provider_.complete(messages, options_.params);
    if (auto parsed = parse_year_list(reply)) {
      out.years = std::move(*parsed);
      return out;
    }
    out.note = "unparseable provider reply '" + text::collapse_whitespace(reply).substr(0, 80) + "'";
  } catch (const std::exception& e) {
    out.note = std::string("provider failed: ") + e.what();
  }
  out.fell_back = true;
  out.years = find_years(rephrased);
  return out;
}

QueryPlan QueryPlanner::plan(const std::string& current_query,
                             const std::optional<std::string>& last_query,
                             std::span<const int> available_years) const {
  QueryPlan p;
  p.original = current_query;
  std::ostringstream why;

  auto r = rephrase(current_query, last_query);
  p.rephrased = r.text;
  p.rephrase_fell_back = r.fell_back;
  why << "rephrase: " << (r.fell_back ? "fallback to original query (" + r.note + ")" : "provider")
      << " -> \"" << p.rephrased << "\"\n";

  auto y = extract_years(p.rephrased);
  p.extracted_years = y.years;
  p.years_fell_back = y.fell_back;
  why << "years: " << (y.fell_back ? "regex fallback (" + y.note + ")" : "provider") << " -> "
      << join_years(p.extracted_years) << "\n";

  p.filter = expand_years(p.extracted_years, available_years, options_.max_expansion_years);
  if (p.filter.match_all()) {
    why << "filter: all years (no year in query)";
  } else {
    std::vector<int> ys(p.filter.years.begin(), p.filter.years.end());
    why << "filter: " << join_years(ys)
        << " (queried years plus every later available year, which may hold actual figures)";
    if (options_.max_expansion_years) {
      why << ", capped at " << *options_.max_expansion_years << " later year(s)";
    }
  }
  p.rationale = why.str();
  return p;
}

}  // namespace grasp
