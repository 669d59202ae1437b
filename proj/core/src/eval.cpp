#include "grasp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "grasp/engine.hpp"
#include "grasp/error.hpp"
#include "grasp/text.hpp"

namespace grasp {

namespace {

constexpr std::string_view kCategoryNames[] = {"general_budget", "revenues_expenditures",
                                               "debt_deficits", "impact_outcome"};
constexpr std::string_view kFunctionalityNames[] = {"table_retrieval", "calculation", "context",
                                                    "comparison_over_time", "sequential"};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string percent(double x) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * x);
  return buf;
}

std::string iso8601(std::chrono::system_clock::time_point t) {
  std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Scale word right after a number ("1.2M", "$3 billion"). Returns the
// multiplier, or 1 when none follows.
double scale_suffix(const std::string& s, std::size_t pos) {
  while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
  auto word_end = pos;
  while (word_end < s.size() && std::isalpha(static_cast<unsigned char>(s[word_end]))) ++word_end;
  auto word = s.substr(pos, word_end - pos);
  if (word.empty()) return 1;
  auto w = lower(word);
  if (w == "million" || w == "mn") return 1e6;
  if (w == "billion" || w == "bn") return 1e9;
  if (w == "thousand") return 1e3;
  if (word == "M") return 1e6;
  if (word == "B") return 1e9;
  if (word == "K" || word == "k") return 1e3;
  return 1;
}

const nlohmann::json& require(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) throw UsageError(std::string("missing field '") + key + "'");
  return *it;
}

std::string require_text(const nlohmann::json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_string() || text::is_blank(v.get<std::string>())) {
    throw UsageError(std::string("field '") + key + "' must be a non-empty string");
  }
  return v.get<std::string>();
}

}  // namespace

std::string_view to_string(EvalCategory c) { return kCategoryNames[static_cast<int>(c)]; }
std::string_view to_string(Functionality f) { return kFunctionalityNames[static_cast<int>(f)]; }

std::optional<EvalCategory> category_from_string(std::string_view s) {
  for (auto c : kAllCategories) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

std::optional<Functionality> functionality_from_string(std::string_view s) {
  for (auto f : kAllFunctionalities) {
    if (to_string(f) == s) return f;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Matchers
// ---------------------------------------------------------------------------

std::vector<double> extract_numbers(const std::string& text) {
  static const std::regex kNumber(R"((\d{1,3}(?:,\d{3})+|\d+)(?:\.(\d+))?)");
  std::vector<double> out;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kNumber); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    auto start = static_cast<std::size_t>(m.position(0));
    // Digits glued to letters on the left ("FY2024", "Q3") still count, but a
    // number continuing a previous decimal ("1.5" already consumed) cannot
    // occur because the regex consumes the fraction.
    std::string digits = m[1].str();
    digits.erase(std::remove(digits.begin(), digits.end(), ','), digits.end());
    std::string literal = digits;
    if (m[2].matched) literal += "." + m[2].str();
    double value = std::stod(literal);

    std::size_t before = start;
    if (before > 0 && text[before - 1] == '$') --before;
    if (before > 0 && text[before - 1] == '-' &&
        (before == 1 || !std::isalnum(static_cast<unsigned char>(text[before - 2])))) {
      value = -value;
    }
    value *= scale_suffix(text, start + static_cast<std::size_t>(m.length(0)));
    out.push_back(value);
  }
  return out;
}

bool Matcher::matches(const std::string& answer_text) const {
  switch (kind) {
    case Kind::number_within_tolerance: {
      double tol = std::abs(value) * rel_tol;
      if (value == 0) tol = rel_tol;
      for (double n : extract_numbers(answer_text)) {
        if (std::abs(n - value) <= tol) return true;
      }
      return false;
    }
    case Kind::contains_all: {
      auto hay = lower(answer_text);
      return std::all_of(terms.begin(), terms.end(),
                         [&](const std::string& t) { return hay.find(lower(t)) != std::string::npos; });
    }
    case Kind::regex: {
      auto flags = std::regex::ECMAScript;
      if (icase) flags |= std::regex::icase;
      return std::regex_search(answer_text, std::regex(pattern, flags));
    }
  }
  return false;
}

void to_json(nlohmann::json& j, const Matcher& m) {
  switch (m.kind) {
    case Matcher::Kind::number_within_tolerance:
      j = {{"kind", "number_within_tolerance"}, {"payload", {{"value", m.value}, {"rel_tol", m.rel_tol}}}};
      break;
    case Matcher::Kind::contains_all:
      j = {{"kind", "contains_all"}, {"payload", {{"terms", m.terms}}}};
      break;
    case Matcher::Kind::regex:
      j = {{"kind", "regex"}, {"payload", {{"pattern", m.pattern}, {"icase", m.icase}}}};
      break;
  }
}

void from_json(const nlohmann::json& j, Matcher& m) {
  if (!j.is_object()) throw UsageError("matcher must be an object");
  auto kind = require_text(j, "kind");
  const auto& payload = require(j, "payload");
  if (!payload.is_object()) throw UsageError("matcher payload must be an object");
  m = Matcher{};
  if (kind == "number_within_tolerance") {
    m.kind = Matcher::Kind::number_within_tolerance;
    const auto& v = require(payload, "value");
    if (!v.is_number()) throw UsageError("number matcher 'value' must be a number");
    m.value = v.get<double>();
    if (payload.contains("rel_tol")) {
      if (!payload["rel_tol"].is_number() || payload["rel_tol"].get<double>() < 0) {
        throw UsageError("number matcher 'rel_tol' must be a non-negative number");
      }
      m.rel_tol = payload["rel_tol"].get<double>();
    }
  } else if (kind == "contains_all") {
    m.kind = Matcher::Kind::contains_all;
    const auto& terms = require(payload, "terms");
    if (!terms.is_array() || terms.empty()) throw UsageError("contains_all 'terms' must be a non-empty array");
    for (const auto& t : terms) {
      if (!t.is_string() || t.get<std::string>().empty()) {
        throw UsageError("contains_all terms must be non-empty strings");
      }
      m.terms.push_back(t.get<std::string>());
    }
  } else if (kind == "regex") {
    m.kind = Matcher::Kind::regex;
    m.pattern = require_text(payload, "pattern");
    if (payload.contains("icase")) {
      if (!payload["icase"].is_boolean()) throw UsageError("regex 'icase' must be a boolean");
      m.icase = payload["icase"].get<bool>();
    }
    try {
      std::regex probe(m.pattern);
    } catch (const std::regex_error& e) {
      throw UsageError("invalid regex '" + m.pattern + "': " + e.what());
    }
  } else {
    throw UsageError("unknown matcher kind '" + kind + "'");
  }
}

// ---------------------------------------------------------------------------
// Cases
// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const EvalCase& c) {
  j = {{"id", c.id},
       {"question", c.question},
       {"category", to_string(c.category)},
       {"functionality", to_string(c.functionality)},
       {"matchers", c.matchers}};
  if (c.follow_up_of) j["follow_up_of"] = *c.follow_up_of;
  if (c.expected_citation) {
    j["expected_citation"] = {{"doc_id", c.expected_citation->doc_id}, {"page", c.expected_citation->page}};
  }
  if (c.reference_answer) j["reference_answer"] = *c.reference_answer;
}

EvalCase parse_case(const nlohmann::json& j) {
  static const std::set<std::string> kKeys = {"id",       "question",          "follow_up_of",
                                              "category", "functionality",     "matchers",
                                              "expected_citation", "reference_answer", "notes"};
  if (!j.is_object()) throw UsageError("case must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.contains(key)) throw UsageError("unknown field '" + key + "'");
  }
  EvalCase c;
  c.id = require_text(j, "id");
  c.question = require_text(j, "question");
  if (j.contains("follow_up_of") && !j["follow_up_of"].is_null()) c.follow_up_of = require_text(j, "follow_up_of");

  auto cat = require_text(j, "category");
  auto parsed_cat = category_from_string(cat);
  if (!parsed_cat) throw UsageError("unknown category '" + cat + "'");
  c.category = *parsed_cat;
  auto fn = require_text(j, "functionality");
  auto parsed_fn = functionality_from_string(fn);
  if (!parsed_fn) throw UsageError("unknown functionality '" + fn + "'");
  c.functionality = *parsed_fn;

  const auto& matchers = require(j, "matchers");
  if (!matchers.is_array() || matchers.empty()) throw UsageError("'matchers' must be a non-empty array");
  for (std::size_t i = 0; i < matchers.size(); ++i) {
    try {
      c.matchers.push_back(matchers[i].get<Matcher>());
    } catch (const UsageError& e) {
      throw UsageError("matchers[" + std::to_string(i) + "]: " + e.what());
    }
  }

  if (j.contains("expected_citation") && !j["expected_citation"].is_null()) {
    const auto& ec = j["expected_citation"];
    if (!ec.is_object()) throw UsageError("'expected_citation' must be an object");
    ExpectedCitation cit;
    cit.doc_id = require_text(ec, "doc_id");
    const auto& page = require(ec, "page");
    if (!page.is_number_integer() || page.get<int>() < 1) {
      throw UsageError("expected_citation.page must be a positive integer");
    }
    cit.page = page.get<int>();
    c.expected_citation = cit;
  }
  if (j.contains("reference_answer") && !j["reference_answer"].is_null()) {
    if (!j["reference_answer"].is_string()) throw UsageError("'reference_answer' must be a string");
    c.reference_answer = j["reference_answer"].get<std::string>();
  }
  return c;
}

std::vector<EvalCase> parse_cases(std::istream& in) {
  std::vector<EvalCase> cases;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    auto where = "line " + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw UsageError(where + "not valid JSON");
    }
    try {
      auto c = parse_case(j);
      if (!ids.insert(c.id).second) throw UsageError("duplicate id '" + c.id + "'");
      cases.push_back(std::move(c));
    } catch (const UsageError& e) {
      throw UsageError(where + e.what());
    }
  }
  case_chains(cases);
  return cases;
}

std::vector<EvalCase> load_cases(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open question set " + path.string());
  try {
    return parse_cases(in);
  } catch (const UsageError& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

std::vector<std::vector<std::size_t>> case_chains(std::span<const EvalCase> cases) {
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < cases.size(); ++i) by_id.emplace(cases[i].id, i);

  std::map<std::size_t, std::size_t> child_of;  // parent -> follow-up
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (!cases[i].follow_up_of) continue;
    auto it = by_id.find(*cases[i].follow_up_of);
    if (it == by_id.end()) {
      throw UsageError("case '" + cases[i].id + "' follows unknown case '" + *cases[i].follow_up_of + "'");
    }
    if (it->second == i) throw UsageError("case '" + cases[i].id + "' follows itself");
    if (!child_of.emplace(it->second, i).second) {
      throw UsageError("case '" + cases[it->second].id + "' has more than one follow-up");
    }
  }

  std::vector<std::vector<std::size_t>> chains;
  std::vector<bool> placed(cases.size(), false);
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (cases[i].follow_up_of) continue;
    std::vector<std::size_t> chain{i};
    placed[i] = true;
    for (auto it = child_of.find(i); it != child_of.end(); it = child_of.find(it->second)) {
      chain.push_back(it->second);
      placed[it->second] = true;
    }
    chains.push_back(std::move(chain));
  }
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (!placed[i]) throw UsageError("case '" + cases[i].id + "' is part of a follow-up cycle");
  }
  return chains;
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

EngineBackend::EngineBackend(const Engine& engine, std::string label)
    : engine_(engine), label_(std::move(label)) {}

std::string EngineBackend::new_session() {
  auto id = "session-" + std::to_string(sessions_.size() + 1);
  sessions_[id];
  return id;
}

Answer EngineBackend::ask(const std::string& session_id, const std::string& question) {
  auto& conv = sessions_.at(session_id);
  auto answer = engine_.ask(conv.history, conv.last_query, question);
  conv.history.push_back(ChatMessage::user(question));
  conv.history.push_back(ChatMessage::assistant(answer.text));
  conv.last_query = question;
  return answer;
}

// ---------------------------------------------------------------------------
// Running and reporting
// ---------------------------------------------------------------------------

std::optional<double> Tally::accuracy() const {
  if (cases == 0) return std::nullopt;
  return static_cast<double>(passed) / static_cast<double>(cases);
}

EvalReport run_eval(std::span<const EvalCase> cases, EvalBackend& backend, const EvalOptions& options) {
  EvalReport report;
  report.backend = backend.label();
  report.timestamp = iso8601(options.clock());
  for (auto c : kAllCategories) report.by_category[c];
  for (auto f : kAllFunctionalities) report.by_functionality[f];

  for (const auto& chain : case_chains(cases)) {
    std::string session;
    std::optional<std::string> session_error;
    try {
      session = backend.new_session();
    } catch (const std::exception& e) {
      session_error = e.what();
    }
    for (auto idx : chain) {
      const auto& c = cases[idx];
      CaseResult r;
      r.id = c.id;
      r.category = c.category;
      r.functionality = c.functionality;
      r.session_id = session;
      r.matched.assign(c.matchers.size(), false);
      if (session_error) {
        r.error = "could not start a session: " + *session_error;
      } else {
        try {
          auto answer = backend.ask(session, c.question);
          r.answer_text = answer.text;
          for (std::size_t m = 0; m < c.matchers.size(); ++m) r.matched[m] = c.matchers[m].matches(answer.text);
          if (c.expected_citation) {
            r.citation_ok = std::any_of(answer.citations.begin(), answer.citations.end(), [&](const Citation& cit) {
              return cit.doc_id == c.expected_citation->doc_id && cit.page == c.expected_citation->page;
            });
          }
        } catch (const std::exception& e) {
          r.error = e.what();
        }
      }
      if (c.expected_citation && !r.citation_ok) r.citation_ok = false;
      r.passed = !r.error && std::all_of(r.matched.begin(), r.matched.end(), [](bool b) { return b; });

      for (Tally* t : {&report.overall, &report.by_category[c.category], &report.by_functionality[c.functionality]}) {
        ++t->cases;
        if (r.passed) ++t->passed;
      }
      if (r.citation_ok) {
        ++report.citations.cases;
        if (*r.citation_ok) ++report.citations.passed;
      }
      report.cases.push_back(std::move(r));
    }
  }
  return report;
}

namespace {

nlohmann::json tally_json(const Tally& t) {
  auto acc = t.accuracy();
  return {{"cases", t.cases}, {"passed", t.passed}, {"accuracy", acc ? nlohmann::json(*acc) : nlohmann::json()}};
}

std::string tally_line(std::string_view name, const Tally& t) {
  char buf[96];
  auto acc = t.accuracy();
  std::snprintf(buf, sizeof buf, "  %-22.*s %3zu/%-3zu %s\n", static_cast<int>(name.size()), name.data(), t.passed,
                t.cases, acc ? percent(*acc).c_str() : "n/a");
  return buf;
}

}  // namespace

void to_json(nlohmann::json& j, const CaseResult& r) {
  j = {{"id", r.id},
       {"category", to_string(r.category)},
       {"functionality", to_string(r.functionality)},
       {"session_id", r.session_id},
       {"passed", r.passed},
       {"matched", r.matched},
       {"citation_ok", r.citation_ok ? nlohmann::json(*r.citation_ok) : nlohmann::json()},
       {"answer_text", r.answer_text}};
  if (r.error) j["error"] = *r.error;
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  nlohmann::json cats = nlohmann::json::object();
  for (const auto& [c, t] : r.by_category) cats[std::string(to_string(c))] = tally_json(t);
  nlohmann::json fns = nlohmann::json::object();
  for (const auto& [f, t] : r.by_functionality) fns[std::string(to_string(f))] = tally_json(t);
  j = {{"backend", r.backend},
       {"timestamp", r.timestamp},
       {"overall", tally_json(r.overall)},
       {"by_category", std::move(cats)},
       {"by_functionality", std::move(fns)},
       {"citations", tally_json(r.citations)},
       {"cases", r.cases}};
}

std::string EvalReport::summary() const {
  std::ostringstream out;
  out << "Evaluation of " << backend << " (" << timestamp << ")\n";
  out << tally_line("overall", overall);
  out << "By category:\n";
  for (const auto& [c, t] : by_category) out << tally_line(to_string(c), t);
  out << "By functionality:\n";
  for (const auto& [f, t] : by_functionality) out << tally_line(to_string(f), t);
  out << "Expected citations found:\n" << tally_line("citations", citations);

  bool header = false;
  for (const auto& r : cases) {
    if (r.passed) continue;
    if (!header) out << "Failed cases:\n";
    header = true;
    out << "  " << r.id << ": ";
    if (r.error) {
      out << "error: " << *r.error;
    } else {
      std::vector<std::string> missed;
      for (std::size_t i = 0; i < r.matched.size(); ++i) {
        if (!r.matched[i]) missed.push_back("matcher " + std::to_string(i));
      }
      for (std::size_t i = 0; i < missed.size(); ++i) out << (i ? ", " : "") << missed[i];
      out << " not satisfied";
    }
    out << '\n';
  }
  out << "\nFor context only: accuracies of roughly 78% for a retrieval agent on hosted models and 60% and\n"
         "35% for two general-purpose chat assistants have been reported on a different, unpublished\n"
         "municipal budget question set. They are not reproduced here and are not comparable with the\n"
         "scores above.\n";
  return out.str();
}

}  // namespace grasp
