#include <gtest/gtest.h>

#include <future>

#include "grasp/engine.hpp"
#include "grasp/error.hpp"
#include "support/fixture.hpp"

using namespace grasp;
using grasp::testing::TempDir;

TEST(Engine, AskWithoutIndexIsUsageError) {
  TempDir dir;
  Engine engine(grasp::testing::fixture_config(dir.path()));
  EXPECT_EQ(engine.index().size(), 0u);
  EXPECT_THROW(engine.ask({}, std::nullopt, "What was the school budget?"), UsageError);
}

TEST(Engine, IngestPersistsAndReloads) {
  TempDir dir;
  auto config = grasp::testing::fixture_config(dir.path());
  std::size_t chunks = 0;
  {
    Engine engine(config);
    auto report = engine.ingest(grasp::testing::fixture_manifest());
    ASSERT_TRUE(report.ok());
    EXPECT_EQ(report.documents_ingested, 6u);
    chunks = engine.index().size();
    EXPECT_EQ(chunks, grasp::testing::fixture_index().size());
  }
  ASSERT_TRUE(std::filesystem::exists(config.index_path));
  Engine reloaded(config);
  EXPECT_EQ(reloaded.index().size(), chunks);
  EXPECT_EQ(reloaded.index().available_years(), (std::vector<int>{2020, 2021, 2022, 2023, 2024, 2025}));
}

TEST(Engine, AnswersSchoolQuestionWithActualFigure) {
  TempDir dir;
  Engine engine(grasp::testing::fixture_config(dir.path()));
  engine.ingest(grasp::testing::fixture_manifest());
  auto answer = engine.ask({}, std::nullopt, "What was the municipal school budget in FY2023?");
  EXPECT_EQ(answer.trace.terminated_by, Termination::final_answer);
  EXPECT_EQ(answer.trace.plan.extracted_years, std::vector<int>{2023});
  EXPECT_EQ(answer.trace.plan.filter, YearFilter::only({2023, 2024, 2025}));
  ASSERT_FALSE(answer.citations.empty());
  EXPECT_EQ(answer.citations.front().fiscal_year, 2024);
  EXPECT_NE(answer.text.find("$106,848,000"), std::string::npos);
}

TEST(Engine, PlanUsesLastQuery) {
  TempDir dir;
  auto t = PromptTemplates::load(grasp::testing::prompts_dir());
  const std::string last = "What was the municipal school budget in FY2025?";
  const std::string follow = "What about the two years before?";
  const std::string rephrased = "What was the municipal school budget in FY2023 and FY2024?";
  auto provider = std::make_shared<MockProvider>(std::vector<MockScriptEntry>{
      grasp::testing::script_entry(grasp::testing::rephrase_call(t, follow, last), rephrased)});
  Engine engine(grasp::testing::fixture_config(dir.path()), provider);
  engine.ingest(grasp::testing::fixture_manifest());
  auto plan = engine.plan(follow, last);
  EXPECT_EQ(plan.rephrased, rephrased);
  EXPECT_EQ(plan.extracted_years, (std::vector<int>{2023, 2024}));
  EXPECT_EQ(plan.filter, YearFilter::only({2023, 2024, 2025}));
}

TEST(Engine, ExpansionCapFromConfig) {
  TempDir dir;
  auto config = grasp::testing::fixture_config(dir.path());
  config.max_expansion_years = 1;
  Engine engine(config);
  engine.ingest(grasp::testing::fixture_manifest());
  EXPECT_EQ(engine.plan("Schools in FY2021?", std::nullopt).filter, YearFilter::only({2021, 2022}));
}

TEST(Engine, ConcurrentIngestConflicts) {
  TempDir dir;
  auto gated = std::make_shared<grasp::testing::GatedProvider>();
  Engine engine(grasp::testing::fixture_config(dir.path()), gated);
  gated->close();
  auto first = std::async(std::launch::async, [&] { return engine.ingest(grasp::testing::fixture_manifest()); });
  gated->wait_until_blocked();
  EXPECT_THROW(engine.ingest(grasp::testing::fixture_manifest()), ConflictError);
  gated->open();
  EXPECT_TRUE(first.get().ok());
  EXPECT_NO_THROW(engine.ingest(grasp::testing::fixture_manifest()));
}
