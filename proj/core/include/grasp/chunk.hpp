#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "grasp/provider.hpp"

namespace grasp {

/// Whole-document provenance shared by every page chunk of one document.
struct DocumentInfo {
  std::string doc_id;
  std::string title;
  std::string source_url;
  int fiscal_year = 0;

  bool operator==(const DocumentInfo&) const = default;
};

/// One page of a budget document, or a piece of a page that was too long.
/// `page` is always the true page number of origin.
struct PageChunk {
  std::string chunk_id;  // "{doc_id}:{page}:{sub_index}"
  std::string doc_id;
  int fiscal_year = 0;
  int page = 1;
  int sub_index = 0;
  std::string text;
  std::optional<EmbeddingVector> embedding;
};

std::string make_chunk_id(const std::string& doc_id, int page, int sub_index);

void to_json(nlohmann::json& j, const DocumentInfo& d);
void from_json(const nlohmann::json& j, DocumentInfo& d);

/// Embeddings are never serialized here; the index stores them separately.
void to_json(nlohmann::json& j, const PageChunk& c);
void from_json(const nlohmann::json& j, PageChunk& c);

}  // namespace grasp
