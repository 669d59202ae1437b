#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <thread>

#include "grasp/error.hpp"
#include "grasp/index.hpp"
#include "support/fixture.hpp"

using namespace grasp;
using grasp::testing::TempDir;

namespace {

PageChunk chunk(const std::string& doc, int year, int page, std::vector<float> v, int sub = 0) {
  PageChunk c;
  c.doc_id = doc;
  c.fiscal_year = year;
  c.page = page;
  c.sub_index = sub;
  c.chunk_id = make_chunk_id(doc, page, sub);
  c.text = "text of " + c.chunk_id;
  c.embedding = EmbeddingVector{std::move(v)};
  return c;
}

EmbeddingVector random_vector(std::mt19937& rng, std::size_t dim) {
  std::normal_distribution<float> n;
  EmbeddingVector v;
  for (std::size_t i = 0; i < dim; ++i) v.values.push_back(n(rng));
  return v;
}

struct Scored {
  std::string id;
  int year;
  std::string doc;
  int page;
  int sub;
  double score;
};

// Brute-force oracle over an explicit copy of the corpus.
std::vector<std::string> brute_force(const std::vector<PageChunk>& corpus, const EmbeddingVector& q,
                                     std::size_t k, const YearFilter& f) {
  std::vector<Scored> all;
  double qn = 0;
  for (float x : q.values) qn += double(x) * x;
  qn = std::sqrt(qn);
  for (const auto& c : corpus) {
    if (!f.match_all() && !f.years.contains(c.fiscal_year)) continue;
    double dot = 0, cn = 0;
    for (std::size_t i = 0; i < q.values.size(); ++i) {
      dot += double(c.embedding->values[i]) * q.values[i];
      cn += double(c.embedding->values[i]) * c.embedding->values[i];
    }
    all.push_back({c.chunk_id, c.fiscal_year, c.doc_id, c.page, c.sub_index, dot / (std::sqrt(cn) * qn)});
  }
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.year, a.doc, a.page, a.sub) < std::tie(b.year, b.doc, b.page, b.sub);
  });
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) ids.push_back(all[i].id);
  return ids;
}

std::vector<std::string> ids_of(const std::vector<SearchHit>& hits) {
  std::vector<std::string> out;
  for (const auto& h : hits) out.push_back(h.chunk->chunk_id);
  return out;
}

std::vector<PageChunk> random_corpus(std::mt19937& rng, std::size_t n, std::size_t dim) {
  std::vector<PageChunk> corpus;
  for (std::size_t i = 0; i < n; ++i) {
    int year = 2020 + static_cast<int>(i % 6);
    corpus.push_back(chunk("doc" + std::to_string(year), year, static_cast<int>(i / 6) + 1,
                           random_vector(rng, dim).values));
  }
  return corpus;
}

}  // namespace

TEST(VectorIndex, MatchesBruteForce) {
  std::mt19937 rng(11);
  auto corpus = random_corpus(rng, 300, 32);
  VectorIndex index;
  index.add(corpus);
  for (int t = 0; t < 50; ++t) {
    auto q = random_vector(rng, 32);
    YearFilter f;
    if (t % 2) f.years = {2021, 2024};
    EXPECT_EQ(ids_of(index.search(q, 10, f)), brute_force(corpus, q, 10, f));
  }
}

TEST(VectorIndex, ScoresAreCosine) {
  VectorIndex index;
  std::vector<PageChunk> batch{chunk("d", 2024, 1, {3, 4})};
  index.add(batch);
  auto hits = index.search(EmbeddingVector{{4, 3}}, 1, {});
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_NEAR(hits[0].score, 24.0 / 25.0, 1e-12);
  EXPECT_LE(hits[0].score, 1.0);
}

TEST(VectorIndex, EqualScoresBreakTiesByYearDocPageSub) {
  VectorIndex index;
  std::vector<PageChunk> batch{chunk("b", 2024, 1, {1, 0}), chunk("a", 2024, 2, {1, 0}),
                               chunk("a", 2024, 1, {1, 0}, 1), chunk("a", 2024, 1, {1, 0}, 0),
                               chunk("z", 2023, 9, {1, 0})};
  index.add(batch);
  auto hits = index.search(EmbeddingVector{{1, 0}}, 5, {});
  EXPECT_EQ(ids_of(hits), (std::vector<std::string>{"z:9:0", "a:1:0", "a:1:1", "a:2:0", "b:1:0"}));
}

TEST(VectorIndex, FilterNeverLeaks) {
  std::mt19937 rng(3);
  auto corpus = random_corpus(rng, 120, 16);
  VectorIndex index;
  index.add(corpus);
  for (int t = 0; t < 200; ++t) {
    YearFilter f;
    for (int y = 2019; y <= 2026; ++y) {
      if (rng() % 3 == 0) f.years.insert(y);
    }
    for (const auto& h : index.search(random_vector(rng, 16), 1 + rng() % 20, f)) {
      EXPECT_TRUE(f.admits(h.chunk->fiscal_year));
    }
  }
  YearFilter none{{1999}};
  EXPECT_TRUE(index.search(random_vector(rng, 16), 5, none).empty());
}

TEST(VectorIndex, KLargerThanCorpus) {
  VectorIndex index;
  std::vector<PageChunk> batch{chunk("d", 2024, 1, {1, 0}), chunk("d", 2024, 2, {0, 1})};
  index.add(batch);
  EXPECT_EQ(index.search(EmbeddingVector{{1, 1}}, 50, {}).size(), 2u);
  EXPECT_THROW(index.search(EmbeddingVector{{1, 1}}, 0, {}), UsageError);
}

TEST(VectorIndex, EmptyIndexReturnsNothing) {
  VectorIndex index;
  EXPECT_TRUE(index.search(EmbeddingVector{{1, 1}}, 5, {}).empty());
  EXPECT_TRUE(index.available_years().empty());
}

TEST(VectorIndex, BatchIsAllOrNothing) {
  VectorIndex index(2);
  std::vector<PageChunk> batch{chunk("d", 2024, 1, {1, 0}), chunk("d", 2024, 2, {1, 0, 0})};
  EXPECT_THROW(index.add(batch), UsageError);
  EXPECT_EQ(index.size(), 0u);
  std::vector<PageChunk> zero{chunk("d", 2024, 1, {0, 0})};
  EXPECT_THROW(index.add(zero), UsageError);
  auto missing = chunk("d", 2024, 1, {1, 0});
  missing.embedding.reset();
  EXPECT_THROW(index.add(std::vector<PageChunk>{missing}), UsageError);
  EXPECT_THROW(index.search(EmbeddingVector{{1, 0, 0}}, 1, {}), UsageError);
}

TEST(VectorIndex, UpsertByChunkId) {
  VectorIndex index;
  index.add(std::vector<PageChunk>{chunk("d", 2024, 1, {1, 0})});
  index.add(std::vector<PageChunk>{chunk("d", 2024, 1, {0, 1})});
  EXPECT_EQ(index.size(), 1u);
  auto hits = index.search(EmbeddingVector{{0, 1}}, 1, {});
  EXPECT_NEAR(hits[0].score, 1.0, 1e-12);
}

TEST(VectorIndex, HitsCarryDocumentInfo) {
  VectorIndex index;
  DocumentInfo doc{"d", "Budget FY2024", "https://x/y.pdf", 2024};
  index.replace_document(doc, std::vector<PageChunk>{chunk("d", 2024, 3, {1, 0})});
  auto hits = index.search(EmbeddingVector{{1, 0}}, 1, {});
  ASSERT_TRUE(hits[0].document);
  EXPECT_EQ(*hits[0].document, doc);
  EXPECT_THROW(index.replace_document(doc, std::vector<PageChunk>{chunk("other", 2024, 1, {1, 0})}),
               UsageError);
}

TEST(VectorIndex, SaveLoadRoundTripIsBitExact) {
  TempDir dir;
  std::mt19937 rng(5);
  auto corpus = random_corpus(rng, 80, 24);
  VectorIndex index;
  index.put_document({"doc2020", "Title 2020", "https://t/2020.pdf", 2020});
  index.add(corpus);
  index.save(dir / "i.idx");
  auto loaded = VectorIndex::load(dir / "i.idx");
  EXPECT_EQ(loaded.size(), index.size());
  EXPECT_EQ(loaded.documents(), index.documents());
  for (int t = 0; t < 20; ++t) {
    auto q = random_vector(rng, 24);
    auto a = index.search(q, 10, {});
    auto b = loaded.search(q, 10, {});
    ASSERT_EQ(ids_of(a), ids_of(b));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].score, b[i].score);
  }
  EXPECT_FALSE(std::filesystem::exists(dir / "i.idx.tmp"));
}

TEST(VectorIndex, LoadRejectsDamage) {
  TempDir dir;
  VectorIndex index;
  index.add(std::vector<PageChunk>{chunk("d", 2024, 1, {1, 2, 3})});
  index.save(dir / "i.idx");
  auto bytes = [&] {
    std::ifstream in(dir / "i.idx", std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  }();
  auto write = [&](const std::string& b) {
    std::ofstream out(dir / "i.idx", std::ios::binary | std::ios::trunc);
    out << b;
  };

  write(bytes.substr(0, bytes.size() - 2));
  EXPECT_THROW(VectorIndex::load(dir / "i.idx"), FormatError);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  write(bad_magic);
  EXPECT_THROW(VectorIndex::load(dir / "i.idx"), FormatError);

  auto future = bytes;
  future[8] = 9;
  write(future);
  try {
    VectorIndex::load(dir / "i.idx");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version 9"), std::string::npos) << e.what();
  }

  write(bytes);
  std::filesystem::remove(VectorIndex::sidecar_path(dir / "i.idx"));
  EXPECT_THROW(VectorIndex::load(dir / "i.idx"), Error);
}

TEST(VectorIndex, ConcurrentReadersAndWriter) {
  std::mt19937 rng(9);
  auto corpus = random_corpus(rng, 60, 8);
  VectorIndex index;
  index.add(corpus);
  std::atomic<bool> stop{false};
  std::atomic<int> bad{0};
  std::vector<std::thread> readers;
  for (int r = 0; r < 4; ++r) {
    readers.emplace_back([&, r] {
      std::mt19937 local(r);
      while (!stop) {
        auto hits = index.search(random_vector(local, 8), 5, {});
        if (hits.size() != 5) ++bad;
      }
    });
  }
  for (int w = 0; w < 50; ++w) {
    DocumentInfo doc{"doc2020", "t", "", 2020};
    std::vector<PageChunk> replacement;
    for (int p = 1; p <= 10; ++p) replacement.push_back(chunk("doc2020", 2020, p, random_vector(rng, 8).values));
    index.replace_document(doc, replacement);
  }
  stop = true;
  for (auto& t : readers) t.join();
  EXPECT_EQ(bad, 0);
}

TEST(YearFilter, JsonShape) {
  nlohmann::json j = YearFilter::only({2024, 2023});
  EXPECT_EQ(j.dump(), R"({"match_all":false,"years":[2023,2024]})");
  EXPECT_TRUE(nlohmann::json(YearFilter::all())["match_all"].get<bool>());
}
