#include <gtest/gtest.h>

#include "grasp/agent.hpp"
#include "grasp/error.hpp"
#include "support/fixture.hpp"

using namespace grasp;

namespace {

SearchHit hit(const std::string& doc, int fy, int page, int sub = 0, double score = 0.5) {
  auto chunk = std::make_shared<PageChunk>();
  chunk->doc_id = doc;
  chunk->fiscal_year = fy;
  chunk->page = page;
  chunk->sub_index = sub;
  chunk->chunk_id = make_chunk_id(doc, page, sub);
  chunk->text = "text of " + chunk->chunk_id;
  auto info = std::make_shared<DocumentInfo>(DocumentInfo{doc, "Title " + doc, "https://x.example/" + doc + ".pdf", fy});
  return {chunk, info, score};
}

QueryPlan plan_for(const std::string& q, std::set<int> years, std::vector<int> extracted) {
  QueryPlan p;
  p.original = q;
  p.rephrased = q;
  p.extracted_years = std::move(extracted);
  p.filter = YearFilter::only(std::move(years));
  return p;
}

}  // namespace

TEST(Citations, DedupAndOrder) {
  std::vector<SearchHit> hits{hit("b", 2023, 4, 0), hit("a", 2024, 9), hit("b", 2023, 4, 1),
                              hit("a", 2024, 2), hit("c", 2023, 1)};
  auto cites = build_citations(hits);
  ASSERT_EQ(cites.size(), 4u);
  EXPECT_EQ(cites[0].doc_id, "a");
  EXPECT_EQ(cites[0].page, 2);
  EXPECT_EQ(cites[1].page, 9);
  EXPECT_EQ(cites[2].doc_id, "b");
  EXPECT_EQ(cites[3].doc_id, "c");
  EXPECT_EQ(cites[0].url(), "https://x.example/a.pdf#page=2");
  EXPECT_EQ(cites[0].title, "Title a");
  EXPECT_TRUE(build_citations({}).empty());
}

TEST(Citations, JsonCarriesUrl) {
  auto c = build_citations(std::vector<SearchHit>{hit("a", 2024, 3)}).at(0);
  auto j = nlohmann::json(c);
  EXPECT_EQ(j["url"], "https://x.example/a.pdf#page=3");
  EXPECT_EQ(j.get<Citation>(), c);
}

TEST(ReferencedHits, MatchesWholeTags) {
  std::vector<SearchHit> hits{hit("doc-fy2024", 2024, 4), hit("doc-fy2024", 2024, 1),
                              hit("doc-fy2023", 2023, 4)};
  auto got = referenced_hits(hits, "It closed at $1 [doc-fy2024 p.4 FY2024].");
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0].chunk->page, 4);
  EXPECT_EQ(got[0].chunk->doc_id, "doc-fy2024");
  // p.14 is not p.1, and xdoc-fy2023 is not doc-fy2023
  EXPECT_TRUE(referenced_hits(hits, "see doc-fy2024 p.14 and xdoc-fy2023 p.4").empty());
  EXPECT_TRUE(referenced_hits(hits, "no tags here").empty());
}

TEST(Chart, ValidRequests) {
  auto c = make_chart({{"kind", "pie"},
                       {"title", "Split"},
                       {"unit", "USD"},
                       {"series", {{{"label", "Schools"}, {"value", "1,000"}}, {{"label", "Police"}, {"value", 250}}}}});
  EXPECT_EQ(c.kind, ChartKind::pie);
  ASSERT_EQ(c.series.size(), 2u);
  EXPECT_DOUBLE_EQ(c.series[0].value, 1000);
  EXPECT_EQ(nlohmann::json(c).get<ChartSpec>(), c);
  EXPECT_EQ(make_chart({{"series", {{{"label", "x"}, {"value", -1}}}}}).kind, ChartKind::bar);
}

TEST(Chart, InvalidRequests) {
  EXPECT_THROW(make_chart({{"kind", "donut"}, {"series", {{{"label", "a"}, {"value", 1}}}}}), UsageError);
  EXPECT_THROW(make_chart({{"kind", "bar"}, {"series", nlohmann::json::array()}}), UsageError);
  EXPECT_THROW(make_chart({{"kind", "pie"}, {"series", {{{"label", "a"}, {"value", 1}}}}}), UsageError);
  EXPECT_THROW(make_chart({{"kind", "pie"},
                           {"series", {{{"label", "a"}, {"value", 1}}, {{"label", "b"}, {"value", -2}}}}}),
               UsageError);
  EXPECT_THROW(make_chart({{"series", {{{"label", "a"}, {"value", 1}}, {{"label", "a"}, {"value", 2}}}}}),
               UsageError);
  EXPECT_THROW(make_chart({{"series", {{{"label", "a"}, {"value", "lots"}}}}}), UsageError);
  EXPECT_THROW(make_chart(nlohmann::json::array()), UsageError);
}

TEST(BudgetSearch, TagsAndQualifiers) {
  const auto& index = grasp::testing::fixture_index();
  const auto& provider = *grasp::testing::fixture_provider();
  std::vector<int> queried{2023};
  auto out = budget_search("municipal school budget FY2023 actual", YearFilter::only({2023, 2024, 2025}), index,
                           provider, 4, queried);
  ASSERT_EQ(out.hits.size(), 4u);
  for (const auto& h : out.hits) {
    EXPECT_GE(h.chunk->fiscal_year, 2023);
    std::string tag = "[" + h.chunk->doc_id + " p." + std::to_string(h.chunk->page) + " FY" +
                      std::to_string(h.chunk->fiscal_year) + "]";
    EXPECT_NE(out.observation.find(tag), std::string::npos) << tag;
  }
  EXPECT_NE(out.observation.find("(actual for FY2023)"), std::string::npos);
  EXPECT_NE(out.observation.find("(projected for FY2023)"), std::string::npos);
}

TEST(BudgetSearch, NoResults) {
  const auto& index = grasp::testing::fixture_index();
  const auto& provider = *grasp::testing::fixture_provider();
  auto out = budget_search("schools", YearFilter::only({1990}), index, provider, 4);
  EXPECT_TRUE(out.hits.empty());
  EXPECT_EQ(out.observation, "NO_RESULTS for years {1990}");
  EXPECT_THROW(budget_search(" ", YearFilter::all(), index, provider, 4), UsageError);
}

TEST(BudgetTool, ArgsOverridePlan) {
  const auto& index = grasp::testing::fixture_index();
  const auto& provider = *grasp::testing::fixture_provider();
  auto plan = plan_for("police staffing", {2021}, {2021});
  ToolContext ctx{index, provider, plan, 3};
  BudgetTool tool;
  auto by_plan = tool.run(nlohmann::json::object(), ctx);
  ASSERT_FALSE(by_plan.hits.empty());
  for (const auto& h : by_plan.hits) EXPECT_EQ(h.chunk->fiscal_year, 2021);

  auto by_args = tool.run({{"years", {2022, 1800}}}, ctx);
  ASSERT_FALSE(by_args.hits.empty());
  for (const auto& h : by_args.hits) EXPECT_EQ(h.chunk->fiscal_year, 2022);

  auto none = tool.run({{"years", {1800}}}, ctx);
  EXPECT_TRUE(none.hits.empty());
  EXPECT_NE(none.observation.find("NO_RESULTS"), std::string::npos);
  EXPECT_THROW(tool.run({{"years", "2022"}}, ctx), UsageError);
  EXPECT_THROW(tool.run({{"query", 5}}, ctx), UsageError);
}

TEST(CalculatorTool, Runs) {
  const auto& index = grasp::testing::fixture_index();
  const auto& provider = *grasp::testing::fixture_provider();
  auto plan = plan_for("q", {}, {});
  ToolContext ctx{index, provider, plan, 3};
  CalculatorTool tool;
  EXPECT_EQ(tool.run({{"expression", "106848000 - 105300000"}}, ctx).observation, "1548000");
  EXPECT_THROW(tool.run(nlohmann::json::object(), ctx), UsageError);
}

TEST(ChartTool, ProducesSpec) {
  const auto& index = grasp::testing::fixture_index();
  const auto& provider = *grasp::testing::fixture_provider();
  auto plan = plan_for("q", {}, {});
  ToolContext ctx{index, provider, plan, 3};
  auto out = ChartTool().run({{"kind", "pie"},
                              {"title", "Budget by sector"},
                              {"series", {{{"label", "A"}, {"value", 1}}, {{"label", "B"}, {"value", 2}}}}},
                             ctx);
  ASSERT_TRUE(out.chart);
  EXPECT_EQ(out.observation, "chart ready: pie \"Budget by sector\" with 2 slices");
}

TEST(ToolRegistry, StandardAndDuplicates) {
  auto r = ToolRegistry::standard();
  ASSERT_EQ(r.tools().size(), 3u);
  EXPECT_TRUE(r.find("budget_tool"));
  EXPECT_TRUE(r.find("calculator_tool"));
  EXPECT_TRUE(r.find("chart_tool"));
  EXPECT_FALSE(r.find("web_search"));
  for (const auto& t : r.tools()) EXPECT_FALSE(t->spec().description.empty());
  EXPECT_THROW(r.add(std::make_shared<BudgetTool>()), UsageError);
}
