#pragma once

#include <filesystem>
#include <memory>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "grasp/chunk.hpp"

namespace grasp {

/// Restricts similarity search to a set of fiscal years. An empty set means
/// no restriction.
struct YearFilter {
  std::set<int> years;

  bool match_all() const noexcept { return years.empty(); }
  bool admits(int fiscal_year) const { return match_all() || years.contains(fiscal_year); }

  static YearFilter all() { return {}; }
  static YearFilter only(std::set<int> ys) { return {std::move(ys)}; }

  bool operator==(const YearFilter&) const = default;
};

void to_json(nlohmann::json& j, const YearFilter& f);
void from_json(const nlohmann::json& j, YearFilter& f);

struct SearchHit {
  std::shared_ptr<const PageChunk> chunk;
  std::shared_ptr<const DocumentInfo> document;
  double score = 0;  // exact cosine similarity
};

/// Ordering used for every result list: score descending, then
/// (fiscal_year, doc_id, page, sub_index) ascending.
bool hit_precedes(const SearchHit& a, const SearchHit& b);

inline constexpr std::uint32_t kIndexFormatVersion = 1;

/// Exact cosine top-k vector store with a fiscal-year filter.
///
/// Many readers or one writer at a time; a batch passed to add() or
/// replace_document() becomes visible atomically.
class VectorIndex {
 public:
  /// dim == 0 adopts the dimension of the first inserted vector.
  explicit VectorIndex(std::size_t dim = 0);

  VectorIndex(const VectorIndex& other);
  VectorIndex& operator=(const VectorIndex& other);
  VectorIndex(VectorIndex&& other) noexcept;
  VectorIndex& operator=(VectorIndex&& other) noexcept;

  /// Upserts by chunk_id. Every chunk needs an embedding of the index
  /// dimension; on any violation nothing is inserted. Returns the number of
  /// chunks inserted or updated.
  std::size_t add(std::span<const PageChunk> chunks);

  /// Drops all chunks of `doc.doc_id`, then inserts `chunks`, as one batch.
  std::size_t replace_document(const DocumentInfo& doc, std::span<const PageChunk> chunks);

  void put_document(const DocumentInfo& doc);

  std::vector<SearchHit> search(const EmbeddingVector& query, std::size_t k,
                                const YearFilter& filter) const;

  std::size_t size() const;
  std::size_t dimension() const;
  std::vector<int> available_years() const;
  std::shared_ptr<const DocumentInfo> document(const std::string& doc_id) const;
  std::vector<DocumentInfo> documents() const;
  std::shared_ptr<const PageChunk> chunk(const std::string& chunk_id) const;

  /// Binary vector file at `path` plus a JSON metadata sidecar at
  /// `path` + ".meta.json".
  void save(const std::filesystem::path& path) const;
  static VectorIndex load(const std::filesystem::path& path);

  static std::filesystem::path sidecar_path(const std::filesystem::path& path);

 private:
  struct Row {
    std::shared_ptr<const PageChunk> chunk;
    std::vector<float> vector;
    double norm = 0;
  };

  void check_batch(std::span<const PageChunk> chunks, std::size_t& dim) const;
  std::size_t insert_locked(std::span<const PageChunk> chunks);
  void erase_doc_locked(const std::string& doc_id);
  std::shared_ptr<const DocumentInfo> doc_locked(const std::string& doc_id) const;

  mutable std::shared_mutex mutex_;
  std::size_t dim_;
  std::vector<Row> rows_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::shared_ptr<const DocumentInfo>> docs_;
};

}  // namespace grasp
