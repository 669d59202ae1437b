#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "grasp/chunk.hpp"
#include "grasp/index.hpp"
#include "grasp/provider.hpp"

namespace grasp {

struct DocumentEntry {
  std::string doc_id;
  std::string title;
  int fiscal_year = 0;
  std::string source_url;
  std::filesystem::path pages_path;  // resolved against the manifest's directory

  DocumentInfo info() const { return {doc_id, title, source_url, fiscal_year}; }
};

struct DocumentManifest {
  std::vector<DocumentEntry> documents;

  /// Validates ids, years and required fields. Throws FormatError.
  static DocumentManifest parse(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static DocumentManifest load(const std::filesystem::path& manifest_path);
};

inline constexpr int kMinFiscalYear = 1900;
inline constexpr int kMaxFiscalYear = 2200;
inline constexpr std::size_t kDefaultMaxChunkChars = 4000;

struct ChunkingOptions {
  std::size_t max_chunk_chars = kDefaultMaxChunkChars;
  std::size_t embed_batch_size = 32;
};

struct IngestFailure {
  std::string doc_id;
  std::string reason;
};

struct IngestReport {
  std::size_t documents_ingested = 0;
  std::size_t chunks_created = 0;
  std::size_t chunks_split = 0;  // pages that needed more than one chunk
  long long elapsed_ms = 0;
  std::vector<IngestFailure> failures;

  bool ok() const { return failures.empty(); }
};

void to_json(nlohmann::json& j, const IngestReport& r);

/// Pages of a paginated text bundle: either a directory of page-NNNN.txt
/// files (page number taken from NNNN) or one file with form-feed separated
/// pages numbered from 1. Returned as (page number, text) pairs in page order.
std::vector<std::pair<int, std::string>> read_bundle(const std::filesystem::path& pages_path);

/// Greedy paragraph packing: paragraphs (blank-line separated) are joined
/// with "\n\n" while the chunk stays within max_chars. A paragraph longer than
/// max_chars is cut at whitespace, or hard-cut when it has none.
std::vector<std::string> split_page(std::string_view page_text, std::size_t max_chars);

struct LoadedBundle {
  std::vector<DocumentEntry> documents;  // successfully read, manifest order
  std::vector<PageChunk> chunks;         // (doc order, page order, sub_index)
  std::vector<IngestFailure> failures;
  std::size_t pages_split = 0;
};

/// Reads every document of a manifest into chunks without embeddings.
/// A missing or unreadable bundle is recorded as a failure; a malformed
/// manifest throws FormatError.
LoadedBundle load_bundle(const std::filesystem::path& manifest_path,
                         const ChunkingOptions& options = {});
LoadedBundle load_bundle(const DocumentManifest& manifest, const ChunkingOptions& options = {});

/// Loads, embeds and upserts every document. Re-ingesting a doc_id replaces
/// that document's chunks. Embedding failures fail only that document.
IngestReport ingest(const std::filesystem::path& manifest_path, VectorIndex& index,
                    const Provider& provider, const ChunkingOptions& options = {});
IngestReport ingest(const DocumentManifest& manifest, VectorIndex& index,
                    const Provider& provider, const ChunkingOptions& options = {});

}  // namespace grasp
