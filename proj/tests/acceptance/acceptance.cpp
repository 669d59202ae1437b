// Acceptance suite: one PASS/FAIL line per primary criterion, exit status 1
// if any fails. Everything runs on the Deskton fixture with the mock provider.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "grasp/corpus.hpp"
#include "grasp/engine.hpp"
#include "grasp/error.hpp"
#include "grasp/eval.hpp"
#include "support/fixture.hpp"

using namespace grasp;
namespace gt = grasp::testing;

namespace {

struct Failure {
  std::string why;
};

void require(bool ok, const std::string& why) {
  if (!ok) throw Failure{why};
}

int failures = 0;

void criterion(const std::string& name, const std::function<std::string()>& body) {
  auto start = std::chrono::steady_clock::now();
  std::string detail;
  bool ok = false;
  try {
    detail = body();
    ok = true;
  } catch (const Failure& f) {
    detail = f.why;
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
  std::cout << (ok ? "PASS " : "FAIL ") << name << " (" << ms << " ms)";
  if (!detail.empty()) std::cout << ": " << detail;
  std::cout << std::endl;
  if (!ok) ++failures;
}

// The fixture corpus re-read from disk and embedded independently of the index.
std::vector<PageChunk> corpus_copy() {
  auto bundle = load_bundle(gt::fixture_manifest());
  std::vector<std::string> texts;
  for (const auto& c : bundle.chunks) texts.push_back(c.text);
  auto vectors = gt::fixture_provider()->embed(texts);
  for (std::size_t i = 0; i < bundle.chunks.size(); ++i) bundle.chunks[i].embedding = vectors[i];
  return bundle.chunks;
}

struct Ranked {
  std::string id;
  double score;
};

std::vector<Ranked> brute_force(const std::vector<PageChunk>& corpus, const EmbeddingVector& q, std::size_t k,
                                const YearFilter& filter) {
  struct Row {
    const PageChunk* c;
    double score;
  };
  std::vector<Row> rows;
  double qq = 0;
  for (float x : q.values) qq += double(x) * double(x);
  for (const auto& c : corpus) {
    if (!filter.match_all() && !filter.years.contains(c.fiscal_year)) continue;
    double dot = 0, cc = 0;
    for (std::size_t i = 0; i < q.values.size(); ++i) {
      dot += double(c.embedding->values[i]) * double(q.values[i]);
      cc += double(c.embedding->values[i]) * double(c.embedding->values[i]);
    }
    rows.push_back({&c, std::clamp(dot / (std::sqrt(cc) * std::sqrt(qq)), -1.0, 1.0)});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.c->fiscal_year, a.c->doc_id, a.c->page, a.c->sub_index) <
           std::tie(b.c->fiscal_year, b.c->doc_id, b.c->page, b.c->sub_index);
  });
  std::vector<Ranked> out;
  for (std::size_t i = 0; i < std::min(k, rows.size()); ++i) out.push_back({rows[i].c->chunk_id, rows[i].score});
  return out;
}

EmbeddingVector random_unit(std::mt19937& rng, std::size_t dim) {
  std::normal_distribution<double> n;
  std::vector<double> v(dim);
  double s = 0;
  for (auto& x : v) {
    x = n(rng);
    s += x * x;
  }
  EmbeddingVector e;
  for (double x : v) e.values.push_back(static_cast<float>(x / std::sqrt(s)));
  return e;
}

YearFilter random_filter(std::mt19937& rng) {
  if (rng() % 10 == 0) return YearFilter::all();
  std::set<int> years;
  int n = 1 + static_cast<int>(rng() % 4);
  for (int i = 0; i < n; ++i) years.insert(2018 + static_cast<int>(rng() % 10));
  return YearFilter::only(years);
}

std::string join(const std::vector<int>& v) {
  std::string s = "{";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s + "}";
}

// ---------------------------------------------------------------------------

std::string retrieval_oracle() {
  const auto& index = gt::fixture_index();
  auto corpus = corpus_copy();
  require(corpus.size() == index.size(), "corpus copy has " + std::to_string(corpus.size()) + " chunks, index " +
                                             std::to_string(index.size()));
  std::mt19937 rng(2024);
  auto start = std::chrono::steady_clock::now();
  for (int t = 0; t < 200; ++t) {
    auto q = random_unit(rng, index.dimension());
    auto got = index.search(q, 10, YearFilter::all());
    auto want = brute_force(corpus, q, 10, YearFilter::all());
    require(got.size() == want.size(), "trial " + std::to_string(t) + ": size mismatch");
    for (std::size_t i = 0; i < got.size(); ++i) {
      require(got[i].chunk->chunk_id == want[i].id && got[i].score == want[i].score,
              "trial " + std::to_string(t) + " rank " + std::to_string(i) + ": " + got[i].chunk->chunk_id + " vs " +
                  want[i].id);
    }
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  require(secs < 5.0, "200 searches took " + std::to_string(secs) + " s");
  return "200/200 exact over " + std::to_string(index.size()) + " chunks";
}

std::string filter_soundness() {
  const auto& index = gt::fixture_index();
  std::mt19937 rng(77);
  std::size_t hits = 0;
  for (int t = 0; t < 1000; ++t) {
    auto q = random_unit(rng, index.dimension());
    auto f = random_filter(rng);
    for (const auto& h : index.search(q, 1 + rng() % 20, f)) {
      ++hits;
      require(f.admits(h.chunk->fiscal_year),
              "trial " + std::to_string(t) + " returned FY" + std::to_string(h.chunk->fiscal_year));
    }
  }
  return "1000 trials, " + std::to_string(hits) + " hits, 0 outside the filter";
}

std::string year_expansion() {
  const std::vector<int> available{2020, 2021, 2022, 2023, 2024, 2025};
  auto years = [](const YearFilter& f) { return std::vector<int>(f.years.begin(), f.years.end()); };
  auto a = expand_years(std::vector<int>{2022}, available);
  require(years(a) == std::vector<int>{2022, 2023, 2024, 2025}, "{2022} -> " + join(years(a)));
  auto b = expand_years(std::vector<int>{}, available);
  require(b.match_all(), "{} -> " + join(years(b)));
  auto c = expand_years(std::vector<int>{2025}, available);
  require(years(c) == std::vector<int>{2025}, "{2025} -> " + join(years(c)));
  return "{2022}->{2022,2023,2024,2025}, {}->all, {2025}->{2025}";
}

std::string rephrasing() {
  const std::string last = "What was the municipal school budget in FY2025?";
  const std::string current = "What about the two years before?";
  const std::string rephrased = "What was the municipal school budget in FY2023 and FY2024?";
  auto t = PromptTemplates::load(gt::prompts_dir());
  auto mock = std::make_shared<MockProvider>(
      std::vector<MockScriptEntry>{gt::script_entry(gt::rephrase_call(t, current, last), rephrased)});
  RecordingProvider recorder(mock);
  QueryPlanner planner(recorder, t);
  auto plan = planner.plan(current, last, gt::fixture_index().available_years());
  require(plan.rephrased == rephrased, "rephrased to '" + plan.rephrased + "'");
  require(!plan.rephrase_fell_back, "rephrase fell back");
  require(plan.filter.admits(2023) && plan.filter.admits(2024) && !plan.filter.match_all(),
          "filter does not pin 2023 and 2024");
  require(plan.filter == YearFilter::only({2023, 2024, 2025}), "filter is not {2023,2024,2025}");
  auto calls = recorder.calls();
  require(!calls.empty(), "no provider call recorded");
  const auto& prompt = calls.front().messages.back().content;
  require(prompt.find(current) != std::string::npos, "recorded prompt lacks the current query");
  require(prompt.find(last) != std::string::npos, "recorded prompt lacks the last query");
  require(prompt.find("{currentQuery}") == std::string::npos && prompt.find("{lastQuery}") == std::string::npos,
          "placeholders left unsubstituted");
  return "search text '" + rephrased + "', filter {2023,2024,2025}";
}

std::string termination_and_grounding() {
  const auto& index = gt::fixture_index();
  auto system = PromptTemplates::load(gt::prompts_dir()).system;
  AgentOptions options;
  options.max_steps = 8;
  options.system_prompt = system;

  QueryPlan plan;
  plan.original = plan.rephrased = "What was the municipal school budget in FY2023?";
  plan.extracted_years = {2023};
  plan.filter = YearFilter::only({2023, 2024, 2025});

  std::size_t calls = 0;
  FunctionProvider stubborn([&](std::span<const ChatMessage>, const CompletionParams&) {
    ++calls;
    return std::string("Still looking.\nACTION budget_tool {}");
  });
  auto stuck = Agent(stubborn, index, ToolRegistry::standard(), options).run({}, plan.original, plan);
  require(calls == 8 && stuck.trace.iterations == 8 && stuck.trace.terminated_by == Termination::max_steps,
          "adversarial run stopped after " + std::to_string(calls) + " calls");

  auto seen_pages = [](const AgentTrace& trace) {
    std::set<std::pair<std::string, int>> out;
    for (const auto& s : trace.steps) {
      for (const auto& h : s.hits) out.emplace(h.doc_id, h.page);
    }
    return out;
  };

  MockProvider mock;
  auto happy = Agent(mock, index, ToolRegistry::standard(), options).run({}, plan.original, plan);
  require(happy.trace.terminated_by == Termination::final_answer, "happy path did not finish");
  require(!happy.citations.empty(), "happy path has no citations");
  for (const auto& c : happy.citations) {
    require(seen_pages(happy.trace).contains({c.doc_id, c.page}), "happy path cites unseen " + c.doc_id);
  }

  const char* questions[] = {"school budget", "police staffing", "debt service", "property tax revenue",
                             "snow and ice", "graduation rate", "glossary overlay", "state aid"};
  std::size_t citations = 0;
  for (int run = 0; run < 100; ++run) {
    std::mt19937 rng(1000 + run);
    FunctionProvider scripted([&](std::span<const ChatMessage> messages, const CompletionParams&) -> std::string {
      switch (rng() % 7) {
        case 0:
        case 1: return "ACTION budget_tool {\"query\": \"" + std::string(questions[rng() % 8]) + "\"}";
        case 2: return "ACTION budget_tool {\"years\": [" + std::to_string(2019 + rng() % 8) + "]}";
        case 3: return "ACTION calculator_tool {\"expression\": \"106848000 - 105300000\"}";
        case 4: return "FINAL " + messages.back().content.substr(0, 300);
        case 5:
          return "FINAL Figures from [deskton-fy20" + std::to_string(20 + rng() % 6) + " p." +
                 std::to_string(1 + rng() % 12) + "] and [made-up-doc p.2 FY2030].";
        default: return "Pondering.";
      }
    });
    auto answer = Agent(scripted, index, ToolRegistry::standard(), options).run({}, plan.original, plan);
    auto seen = seen_pages(answer.trace);
    for (const auto& c : answer.citations) {
      ++citations;
      require(seen.contains({c.doc_id, c.page}),
              "run " + std::to_string(run) + " cites " + c.doc_id + " p." + std::to_string(c.page));
    }
    require(answer.trace.iterations <= 8, "run " + std::to_string(run) + " exceeded max_steps");
  }
  return "adversarial run stopped at 8; 0 fabricated of " + std::to_string(citations) + " citations in 100 runs";
}

std::string actual_vs_projected() {
  gt::TempDir dir;
  Engine engine(gt::fixture_config(dir.path()));
  engine.ingest(gt::fixture_manifest());
  auto answer = engine.ask({}, std::nullopt, "What was the municipal school budget in FY2023?");
  require(!answer.citations.empty(), "no citations");
  const auto& top = answer.citations.front();
  require(top.doc_id == "deskton-fy2024" && top.fiscal_year == 2024,
          "top citation is " + top.doc_id + " p." + std::to_string(top.page));
  Matcher m;
  m.kind = Matcher::Kind::number_within_tolerance;
  m.value = gt::kSchoolFy2023Actual;
  m.rel_tol = 0.005;
  require(m.matches(answer.text), "answer lacks the actual figure: " + answer.text.substr(0, 200));
  Matcher projected = m;
  projected.value = gt::kSchoolFy2023Projected;
  projected.rel_tol = 0;
  return "top citation " + top.url() + "; actual figure present" +
         (projected.matches(answer.text) ? " (projection also quoted)" : "");
}

std::string run_command(const std::string& cmd) {
  std::array<char, 4096> buf{};
  std::string out;
  FILE* p = popen(cmd.c_str(), "r");
  require(p != nullptr, "cannot start: " + cmd);
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) out.append(buf.data(), n);
  int status = pclose(p);
  require(status == 0, "command failed with status " + std::to_string(status) + ": " + cmd);
  return out;
}

std::string quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

std::string cli_determinism() {
  gt::TempDir dir;
  auto config = dir / "config.json";
  std::ofstream(config) << nlohmann::json{{"provider", {{"kind", "mock"}}},
                                          {"index_path", (dir / "grasp.idx").string()},
                                          {"prompts_dir", gt::prompts_dir().string()}}
                               .dump();
  const std::string cli = quote(GRASP_CLI_PATH);
  run_command(cli + " ingest --config " + quote(config.string()) + " --manifest " +
              quote(gt::fixture_manifest().string()) + " > /dev/null");
  const std::string ask = cli + " ask --json --trace --config " + quote(config.string()) +
                          " --question 'What was the municipal school budget in FY2023?'";
  std::string first;
  std::set<std::string> trace_ids;
  for (int i = 0; i < 20; ++i) {
    auto j = nlohmann::json::parse(run_command(ask));
    trace_ids.insert(j["trace_id"].get<std::string>());
    j.erase("trace_id");
    auto bytes = j.dump(2);
    if (i == 0) first = bytes;
    require(bytes == first, "run " + std::to_string(i) + " differs from run 0");
  }
  return "20 runs identical (" + std::to_string(first.size()) + " bytes, " + std::to_string(trace_ids.size()) +
         " distinct trace ids excluded)";
}

struct ScriptedBackend final : EvalBackend {
  std::vector<EvalCase> cases;
  std::set<std::string> wrong;
  std::string label() const override { return "oracle"; }
  std::string new_session() override { return "s"; }
  Answer ask(const std::string&, const std::string& question) override {
    for (const auto& c : cases) {
      if (c.question == question) {
        Answer a;
        a.text = wrong.contains(c.id) ? "No figure available." : *c.reference_answer;
        return a;
      }
    }
    throw std::runtime_error("unknown question");
  }
};

std::string eval_arithmetic() {
  std::vector<EvalCase> cases;
  for (int i = 0; i < 10; ++i) {
    EvalCase c;
    c.id = "case-" + std::to_string(i);
    c.question = "How much was line " + std::to_string(i) + "?";
    c.category = kAllCategories[i % 4];
    c.functionality = kAllFunctionalities[i % 5];
    Matcher m;
    m.kind = Matcher::Kind::number_within_tolerance;
    m.value = 1'000'000.0 * (i + 1);
    c.matchers = {m};
    c.reference_answer = "It was $" + std::to_string(i + 1) + " million.";
    cases.push_back(c);
  }
  ScriptedBackend perfect;
  perfect.cases = cases;
  auto r1 = run_eval(cases, perfect);
  require(r1.overall.accuracy() == 1.0, "perfect backend scored " + std::to_string(r1.overall.accuracy().value_or(-1)));

  ScriptedBackend flawed;
  flawed.cases = cases;
  flawed.wrong = {"case-2", "case-5"};
  auto r2 = run_eval(cases, flawed);
  require(r2.overall.accuracy() == 0.8, "2-of-10 backend scored " + std::to_string(r2.overall.accuracy().value_or(-1)));

  auto j = nlohmann::json(r2);
  std::set<std::string> cats, fns;
  for (const auto& [k, v] : j["by_category"].items()) cats.insert(k);
  for (const auto& [k, v] : j["by_functionality"].items()) fns.insert(k);
  require(cats == std::set<std::string>{"general_budget", "revenues_expenditures", "debt_deficits", "impact_outcome"},
          "unexpected category keys");
  require(fns == std::set<std::string>{"table_retrieval", "calculation", "context", "comparison_over_time",
                                       "sequential"},
          "unexpected functionality keys");
  return "1.0 and 0.8; 4 categories, 5 functionality classes";
}

std::string index_persistence() {
  gt::TempDir dir;
  const auto& index = gt::fixture_index();
  auto path = dir / "fixture.idx";
  index.save(path);
  auto loaded = VectorIndex::load(path);
  require(loaded.size() == index.size(), "chunk count changed");
  const char* words[] = {"school", "budget", "police", "debt", "revenue", "tax", "actual", "projected",
                         "FY2023", "snow", "library", "glossary", "surplus", "aid", "town"};
  std::mt19937 rng(99);
  std::size_t compared = 0;
  for (int t = 0; t < 20; ++t) {
    std::string q;
    for (int w = 0; w < 3 + static_cast<int>(rng() % 4); ++w) q += std::string(words[rng() % 15]) + " ";
    auto v = gt::fixture_provider()->embed_one(q);
    auto f = random_filter(rng);
    auto a = index.search(v, 10, f);
    auto b = loaded.search(v, 10, f);
    require(a.size() == b.size(), "query " + std::to_string(t) + ": result count changed");
    for (std::size_t i = 0; i < a.size(); ++i) {
      require(a[i].chunk->chunk_id == b[i].chunk->chunk_id, "query " + std::to_string(t) + ": order changed");
      require(std::memcmp(&a[i].score, &b[i].score, sizeof(double)) == 0,
              "query " + std::to_string(t) + ": score bits changed");
      require(a[i].chunk->text == b[i].chunk->text && a[i].document && b[i].document &&
                  *a[i].document == *b[i].document,
              "query " + std::to_string(t) + ": provenance changed");
      ++compared;
    }
  }
  return "20 queries, " + std::to_string(compared) + " hits bit-identical";
}

}  // namespace

int main() {
  criterion("retrieval oracle equivalence", retrieval_oracle);
  criterion("filter soundness", filter_soundness);
  criterion("year-expansion contract", year_expansion);
  criterion("rephrasing pipeline", rephrasing);
  criterion("agent termination and grounding", termination_and_grounding);
  criterion("actual-vs-projected behavior", actual_vs_projected);
  criterion("end-to-end determinism", cli_determinism);
  criterion("eval harness arithmetic", eval_arithmetic);
  criterion("index persistence", index_persistence);
  std::cout << (failures == 0 ? "ALL PRIMARY CRITERIA PASS" : std::to_string(failures) + " CRITERIA FAILED")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
