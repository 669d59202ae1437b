#include "grasp/index.hpp"

#include <algorithm>
#include <limits>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>

#include "grasp/error.hpp"

namespace grasp {

static_assert(std::numeric_limits<float>::is_iec559, "index files store IEEE-754 floats");

void to_json(nlohmann::json& j, const YearFilter& f) {
  j = nlohmann::json{{"match_all", f.match_all()}, {"years", f.years}};
}

void from_json(const nlohmann::json& j, YearFilter& f) {
  f.years = j.value("years", std::set<int>{});
}

bool hit_precedes(const SearchHit& a, const SearchHit& b) {
  if (a.score != b.score) return a.score > b.score;
  const auto& ca = *a.chunk;
  const auto& cb = *b.chunk;
  return std::tie(ca.fiscal_year, ca.doc_id, ca.page, ca.sub_index) <
         std::tie(cb.fiscal_year, cb.doc_id, cb.page, cb.sub_index);
}

namespace {

double norm_of(std::span<const float> v) {
  double s = 0;
  for (float x : v) s += double(x) * double(x);
  return std::sqrt(s);
}

}  // namespace

VectorIndex::VectorIndex(std::size_t dim) : dim_(dim) {}

VectorIndex::VectorIndex(const VectorIndex& other) {
  std::shared_lock lock(other.mutex_);
  dim_ = other.dim_;
  rows_ = other.rows_;
  by_id_ = other.by_id_;
  docs_ = other.docs_;
}

VectorIndex& VectorIndex::operator=(const VectorIndex& other) {
  if (this == &other) return *this;
  VectorIndex copy(other);
  *this = std::move(copy);
  return *this;
}

VectorIndex::VectorIndex(VectorIndex&& other) noexcept {
  std::unique_lock lock(other.mutex_);
  dim_ = other.dim_;
  rows_ = std::move(other.rows_);
  by_id_ = std::move(other.by_id_);
  docs_ = std::move(other.docs_);
}

VectorIndex& VectorIndex::operator=(VectorIndex&& other) noexcept {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  dim_ = other.dim_;
  rows_ = std::move(other.rows_);
  by_id_ = std::move(other.by_id_);
  docs_ = std::move(other.docs_);
  return *this;
}

void VectorIndex::check_batch(std::span<const PageChunk> chunks, std::size_t& dim) const {
  for (const auto& c : chunks) {
    if (!c.embedding) throw UsageError("chunk " + c.chunk_id + " has no embedding");
    if (c.chunk_id.empty()) throw UsageError("chunk without chunk_id");
    if (c.text.empty()) throw UsageError("chunk " + c.chunk_id + " has empty text");
    std::size_t d = c.embedding->dim();
    if (dim == 0) dim = d;
    if (d != dim) {
      throw UsageError("dimension mismatch: chunk " + c.chunk_id + " has dim " +
                       std::to_string(d) + ", index dim is " + std::to_string(dim));
    }
    if (norm_of(c.embedding->values) == 0) {
      throw UsageError("chunk " + c.chunk_id + " has a zero embedding");
    }
  }
}

std::size_t VectorIndex::insert_locked(std::span<const PageChunk> chunks) {
  for (const auto& c : chunks) {
    auto stored = std::make_shared<PageChunk>(c);
    stored->embedding.reset();
    Row row{std::move(stored), c.embedding->values, norm_of(c.embedding->values)};
    if (auto it = by_id_.find(c.chunk_id); it != by_id_.end()) {
      rows_[it->second] = std::move(row);
    } else {
      by_id_.emplace(c.chunk_id, rows_.size());
      rows_.push_back(std::move(row));
    }
    if (!docs_.contains(c.doc_id)) {
      docs_.emplace(c.doc_id,
                    std::make_shared<DocumentInfo>(DocumentInfo{c.doc_id, c.doc_id, "", c.fiscal_year}));
    }
  }
  return chunks.size();
}

void VectorIndex::erase_doc_locked(const std::string& doc_id) {
  std::vector<Row> kept;
  kept.reserve(rows_.size());
  for (auto& r : rows_) {
    if (r.chunk->doc_id != doc_id) kept.push_back(std::move(r));
  }
  rows_ = std::move(kept);
  by_id_.clear();
  for (std::size_t i = 0; i < rows_.size(); ++i) by_id_.emplace(rows_[i].chunk->chunk_id, i);
}

std::size_t VectorIndex::add(std::span<const PageChunk> chunks) {
  std::unique_lock lock(mutex_);
  std::size_t dim = dim_;
  check_batch(chunks, dim);
  dim_ = dim;
  return insert_locked(chunks);
}

std::size_t VectorIndex::replace_document(const DocumentInfo& doc,
                                          std::span<const PageChunk> chunks) {
  for (const auto& c : chunks) {
    if (c.doc_id != doc.doc_id) {
      throw UsageError("chunk " + c.chunk_id + " does not belong to document " + doc.doc_id);
    }
  }
  std::unique_lock lock(mutex_);
  std::size_t dim = dim_;
  check_batch(chunks, dim);
  dim_ = dim;
  erase_doc_locked(doc.doc_id);
  docs_[doc.doc_id] = std::make_shared<DocumentInfo>(doc);
  return insert_locked(chunks);
}

void VectorIndex::put_document(const DocumentInfo& doc) {
  std::unique_lock lock(mutex_);
  docs_[doc.doc_id] = std::make_shared<DocumentInfo>(doc);
}

std::shared_ptr<const DocumentInfo> VectorIndex::doc_locked(const std::string& doc_id) const {
  auto it = docs_.find(doc_id);
  return it == docs_.end() ? nullptr : it->second;
}

std::vector<SearchHit> VectorIndex::search(const EmbeddingVector& query, std::size_t k,
                                           const YearFilter& filter) const {
  if (k == 0) throw UsageError("search: k must be at least 1");
  std::shared_lock lock(mutex_);
  if (dim_ != 0 && query.dim() != dim_) {
    throw UsageError("search: query dim " + std::to_string(query.dim()) +
                     " does not match index dim " + std::to_string(dim_));
  }
  if (rows_.empty()) return {};
  const double qnorm = norm_of(query.values);
  if (qnorm == 0) throw UsageError("search: zero query vector");

  std::vector<SearchHit> hits;
  for (const auto& row : rows_) {
    if (!filter.admits(row.chunk->fiscal_year)) continue;
    double dot = 0;
    for (std::size_t i = 0; i < dim_; ++i) dot += double(row.vector[i]) * double(query.values[i]);
    double score = std::clamp(dot / (row.norm * qnorm), -1.0, 1.0);
    hits.push_back({row.chunk, nullptr, score});
  }
  const auto n = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(),
                    hit_precedes);
  hits.resize(n);
  for (auto& h : hits) h.document = doc_locked(h.chunk->doc_id);
  return hits;
}

std::size_t VectorIndex::size() const {
  std::shared_lock lock(mutex_);
  return rows_.size();
}

std::size_t VectorIndex::dimension() const {
  std::shared_lock lock(mutex_);
  return dim_;
}

std::vector<int> VectorIndex::available_years() const {
  std::shared_lock lock(mutex_);
  std::set<int> years;
  for (const auto& r : rows_) years.insert(r.chunk->fiscal_year);
  return {years.begin(), years.end()};
}

std::shared_ptr<const DocumentInfo> VectorIndex::document(const std::string& doc_id) const {
  std::shared_lock lock(mutex_);
  return doc_locked(doc_id);
}

std::vector<DocumentInfo> VectorIndex::documents() const {
  std::shared_lock lock(mutex_);
  std::vector<DocumentInfo> out;
  for (const auto& [id, d] : docs_) out.push_back(*d);
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.doc_id < b.doc_id; });
  return out;
}

std::shared_ptr<const PageChunk> VectorIndex::chunk(const std::string& chunk_id) const {
  std::shared_lock lock(mutex_);
  auto it = by_id_.find(chunk_id);
  return it == by_id_.end() ? nullptr : rows_[it->second].chunk;
}

// ---------------------------------------------------------------------------
// Persistence
//
// Vector file:  "GRASPIDX" | u32 version | u32 dim | u64 count |
//               count records of dim little-endian float32.
// Sidecar:      JSON {format_version, dim, count, documents[], chunks[]} with
//               chunks in record order.
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'G', 'R', 'A', 'S', 'P', 'I', 'D', 'X'};
constexpr std::size_t kHeaderSize = 8 + 4 + 4 + 8;

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const char* p) {
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return static_cast<T>(u);
}

void write_atomically(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open index file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::filesystem::path VectorIndex::sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".meta.json";
  return p;
}

void VectorIndex::save(const std::filesystem::path& path) const {
  std::shared_lock lock(mutex_);
  std::string bin;
  bin.reserve(kHeaderSize + rows_.size() * dim_ * 4);
  bin.append(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(bin, kIndexFormatVersion);
  put_le<std::uint32_t>(bin, static_cast<std::uint32_t>(dim_));
  put_le<std::uint64_t>(bin, rows_.size());
  auto chunks = nlohmann::json::array();
  for (const auto& r : rows_) {
    for (float f : r.vector) put_le<std::uint32_t>(bin, std::bit_cast<std::uint32_t>(f));
    chunks.push_back(*r.chunk);
  }
  std::vector<DocumentInfo> docs;
  for (const auto& [id, d] : docs_) docs.push_back(*d);
  std::sort(docs.begin(), docs.end(), [](const auto& a, const auto& b) { return a.doc_id < b.doc_id; });
  nlohmann::json meta{{"format_version", kIndexFormatVersion},
                      {"dim", dim_},
                      {"count", rows_.size()},
                      {"documents", docs},
                      {"chunks", std::move(chunks)}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_atomically(sidecar_path(path), meta.dump(1));
  write_atomically(path, bin);
}

VectorIndex VectorIndex::load(const std::filesystem::path& path) {
  const std::string bin = read_all(path);
  if (bin.size() < kHeaderSize) throw FormatError("index file " + path.string() + " is truncated");
  if (std::memcmp(bin.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(path.string() + " is not a grasp index file");
  }
  auto version = get_le<std::uint32_t>(bin.data() + 8);
  if (version != kIndexFormatVersion) {
    throw FormatError("index format version " + std::to_string(version) +
                      " is not supported (expected " + std::to_string(kIndexFormatVersion) + ")");
  }
  auto dim = get_le<std::uint32_t>(bin.data() + 12);
  auto count = get_le<std::uint64_t>(bin.data() + 16);
  if (bin.size() != kHeaderSize + count * dim * 4) {
    throw FormatError("index file " + path.string() + " is truncated or has trailing bytes");
  }

  nlohmann::json meta;
  try {
    std::ifstream in(sidecar_path(path));
    if (!in) throw FormatError("missing index metadata " + sidecar_path(path).string());
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("index metadata is not valid JSON: " + std::string(e.what()));
  }
  try {
    if (meta.at("format_version").get<std::uint32_t>() != version ||
        meta.at("dim").get<std::uint32_t>() != dim || meta.at("count").get<std::uint64_t>() != count ||
        meta.at("chunks").size() != count) {
      throw FormatError("index metadata does not match vector file " + path.string());
    }
    VectorIndex index(dim);
    for (const auto& d : meta.at("documents")) {
      auto doc = std::make_shared<DocumentInfo>(d.get<DocumentInfo>());
      index.docs_.emplace(doc->doc_id, std::move(doc));
    }
    const char* p = bin.data() + kHeaderSize;
    index.rows_.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      Row row;
      row.vector.resize(dim);
      for (std::uint32_t d = 0; d < dim; ++d, p += 4) {
        row.vector[d] = std::bit_cast<float>(get_le<std::uint32_t>(p));
      }
      row.norm = norm_of(row.vector);
      row.chunk = std::make_shared<PageChunk>(meta["chunks"][i].get<PageChunk>());
      if (index.by_id_.contains(row.chunk->chunk_id)) {
        throw FormatError("duplicate chunk id " + row.chunk->chunk_id + " in index metadata");
      }
      index.by_id_.emplace(row.chunk->chunk_id, index.rows_.size());
      if (!index.docs_.contains(row.chunk->doc_id)) {
        throw FormatError("chunk " + row.chunk->chunk_id + " references unknown document");
      }
      index.rows_.push_back(std::move(row));
    }
    return index;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("index metadata is malformed: " + std::string(e.what()));
  }
}

}  // namespace grasp
