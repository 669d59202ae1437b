#include <random>

#include <benchmark/benchmark.h>

#include "grasp/calculator.hpp"
#include "grasp/corpus.hpp"
#include "grasp/index.hpp"
#include "grasp/provider.hpp"

using namespace grasp;

namespace {

VectorIndex synthetic_index(std::size_t n, std::size_t dim) {
  std::mt19937 rng(3);
  std::normal_distribution<float> normal;
  std::vector<PageChunk> chunks;
  for (std::size_t i = 0; i < n; ++i) {
    PageChunk c;
    c.doc_id = "doc-" + std::to_string(i % 12);
    c.fiscal_year = 2014 + static_cast<int>(i % 12);
    c.page = static_cast<int>(i / 12) + 1;
    c.chunk_id = make_chunk_id(c.doc_id, c.page, 0);
    c.text = c.chunk_id;
    EmbeddingVector v;
    for (std::size_t d = 0; d < dim; ++d) v.values.push_back(normal(rng));
    c.embedding = std::move(v);
    chunks.push_back(std::move(c));
  }
  VectorIndex index(dim);
  index.add(chunks);
  return index;
}

void BM_Search(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto index = synthetic_index(n, kDefaultMockDim);
  MockProvider provider;
  auto q = provider.embed_one("municipal school budget actual FY2023");
  auto filter = state.range(1) ? YearFilter::only({2022, 2023, 2024, 2025}) : YearFilter::all();
  for (auto _ : state) benchmark::DoNotOptimize(index.search(q, 10, filter));
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(n));
}
BENCHMARK(BM_Search)->Args({60, 0})->Args({1000, 0})->Args({10000, 0})->Args({10000, 1});

void BM_MockEmbedPage(benchmark::State& state) {
  auto pages = read_bundle(std::filesystem::path(GRASP_SOURCE_DIR) / "data/deskton/docs/fy2025.txt");
  const std::string& text = pages.back().second;
  for (auto _ : state) benchmark::DoNotOptimize(hashed_bag_of_tokens(text, kDefaultMockDim));
  state.SetBytesProcessed(state.iterations() * static_cast<long long>(text.size()));
}
BENCHMARK(BM_MockEmbedPage);

void BM_Calculator(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_expression("(106,848,000 - 105,300,000) / 105,300,000"));
}
BENCHMARK(BM_Calculator);

}  // namespace
BENCHMARK_MAIN();
