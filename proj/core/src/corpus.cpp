#include "grasp/corpus.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "grasp/error.hpp"
#include "grasp/text.hpp"

namespace grasp {

std::string make_chunk_id(const std::string& doc_id, int page, int sub_index) {
  return doc_id + ":" + std::to_string(page) + ":" + std::to_string(sub_index);
}

void to_json(nlohmann::json& j, const DocumentInfo& d) {
  j = nlohmann::json{{"doc_id", d.doc_id},
                     {"title", d.title},
                     {"source_url", d.source_url},
                     {"fiscal_year", d.fiscal_year}};
}

void from_json(const nlohmann::json& j, DocumentInfo& d) {
  d.doc_id = j.at("doc_id").get<std::string>();
  d.title = j.value("title", d.doc_id);
  d.source_url = j.value("source_url", "");
  d.fiscal_year = j.at("fiscal_year").get<int>();
}

void to_json(nlohmann::json& j, const PageChunk& c) {
  j = nlohmann::json{{"chunk_id", c.chunk_id},   {"doc_id", c.doc_id},
                     {"fiscal_year", c.fiscal_year}, {"page", c.page},
                     {"sub_index", c.sub_index}, {"text", c.text}};
}

void from_json(const nlohmann::json& j, PageChunk& c) {
  c.chunk_id = j.at("chunk_id").get<std::string>();
  c.doc_id = j.at("doc_id").get<std::string>();
  c.fiscal_year = j.at("fiscal_year").get<int>();
  c.page = j.at("page").get<int>();
  c.sub_index = j.at("sub_index").get<int>();
  c.text = j.at("text").get<std::string>();
  c.embedding.reset();
}

void to_json(nlohmann::json& j, const IngestReport& r) {
  auto failures = nlohmann::json::array();
  for (const auto& f : r.failures) failures.push_back({{"doc_id", f.doc_id}, {"reason", f.reason}});
  j = nlohmann::json{{"documents_ingested", r.documents_ingested},
                     {"chunks_created", r.chunks_created},
                     {"chunks_split", r.chunks_split},
                     {"elapsed_ms", r.elapsed_ms},
                     {"failures", std::move(failures)}};
}

// ---------------------------------------------------------------------------

DocumentManifest DocumentManifest::parse(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir) {
  if (!j.is_object() || !j.contains("documents") || !j["documents"].is_array()) {
    throw FormatError("manifest must be an object with a 'documents' array");
  }
  DocumentManifest manifest;
  std::set<std::string> seen;
  const auto& docs = j["documents"];
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& d = docs[i];
    auto where = "manifest document " + std::to_string(i);
    auto require_string = [&](const char* key) {
      if (!d.contains(key) || !d[key].is_string() || d[key].get<std::string>().empty()) {
        throw FormatError(where + ": missing or empty string field '" + key + "'");
      }
      return d[key].get<std::string>();
    };
    DocumentEntry e;
    e.doc_id = require_string("doc_id");
    e.title = require_string("title");
    e.source_url = require_string("source_url");
    auto pages = require_string("pages_path");
    if (!d.contains("fiscal_year") || !d["fiscal_year"].is_number_integer()) {
      throw FormatError(where + ": fiscal_year must be an integer");
    }
    e.fiscal_year = d["fiscal_year"].get<int>();
    if (e.fiscal_year < kMinFiscalYear || e.fiscal_year > kMaxFiscalYear) {
      throw FormatError(where + ": fiscal_year " + std::to_string(e.fiscal_year) +
                        " outside [1900, 2200]");
    }
    if (e.doc_id.find(':') != std::string::npos) {
      throw FormatError(where + ": doc_id must not contain ':'");
    }
    if (!seen.insert(e.doc_id).second) throw FormatError("duplicate doc_id '" + e.doc_id + "'");
    std::filesystem::path p(pages);
    e.pages_path = p.is_absolute() ? p : base_dir / p;
    manifest.documents.push_back(std::move(e));
  }
  return manifest;
}

DocumentManifest DocumentManifest::load(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw UsageError("cannot open manifest " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
  }
  return parse(j, manifest_path.parent_path());
}

// ---------------------------------------------------------------------------

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<std::pair<int, std::string>> read_bundle(const std::filesystem::path& pages_path) {
  namespace fs = std::filesystem;
  std::vector<std::pair<int, std::string>> pages;
  if (fs::is_directory(pages_path)) {
    static const std::regex kPageFile(R"(page-(\d+)\.txt)");
    for (const auto& entry : fs::directory_iterator(pages_path)) {
      std::smatch m;
      auto name = entry.path().filename().string();
      if (!entry.is_regular_file() || !std::regex_match(name, m, kPageFile)) continue;
      int page = std::stoi(m[1].str());
      if (page < 1) throw Error("page numbers start at 1: " + name);
      pages.emplace_back(page, slurp(entry.path()));
    }
    std::sort(pages.begin(), pages.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < pages.size(); ++i) {
      if (pages[i].first == pages[i - 1].first) {
        throw Error("duplicate page " + std::to_string(pages[i].first) + " in " + pages_path.string());
      }
    }
    return pages;
  }
  if (!fs::is_regular_file(pages_path)) throw Error("bundle not found: " + pages_path.string());
  const std::string all = slurp(pages_path);
  std::size_t start = 0;
  int page = 1;
  while (start <= all.size()) {
    auto ff = all.find('\f', start);
    if (ff == std::string::npos) {
      std::string tail = all.substr(start);
      if (!text::is_blank(tail) || pages.empty()) pages.emplace_back(page, std::move(tail));
      break;
    }
    pages.emplace_back(page++, all.substr(start, ff - start));
    start = ff + 1;
  }
  return pages;
}

namespace {

std::vector<std::string> paragraphs_of(std::string_view page_text) {
  std::vector<std::string> paras;
  std::string current;
  for (const auto& line : text::split_lines(page_text)) {
    if (text::is_blank(line)) {
      if (!current.empty()) paras.push_back(std::move(current));
      current.clear();
      continue;
    }
    if (!current.empty()) current.push_back('\n');
    current += line;
  }
  if (!current.empty()) paras.push_back(std::move(current));
  return paras;
}

bool is_utf8_continuation(char c) { return (static_cast<unsigned char>(c) & 0xC0) == 0x80; }

std::vector<std::string> cut_long(std::string_view para, std::size_t max_chars) {
  std::vector<std::string> pieces;
  while (para.size() > max_chars) {
    std::size_t cut = max_chars;
    auto ws = para.find_last_of(" \t\n", max_chars);
    if (ws != std::string_view::npos && ws > 0) {
      cut = ws;
    } else {
      while (cut > 0 && is_utf8_continuation(para[cut])) --cut;
      if (cut == 0) cut = max_chars;
    }
    auto piece = text::trim(para.substr(0, cut));
    if (!piece.empty()) pieces.push_back(std::move(piece));
    para.remove_prefix(cut);
    while (!para.empty() && std::isspace(static_cast<unsigned char>(para.front()))) para.remove_prefix(1);
  }
  if (!para.empty()) pieces.emplace_back(para);
  return pieces;
}

}  // namespace

std::vector<std::string> split_page(std::string_view page_text, std::size_t max_chars) {
  if (max_chars == 0) throw UsageError("max_chunk_chars must be positive");
  auto whole = text::trim(page_text);
  if (whole.empty()) return {};
  if (whole.size() <= max_chars) return {whole};

  std::vector<std::string> units;
  for (auto& p : paragraphs_of(whole)) {
    if (p.size() <= max_chars) {
      units.push_back(std::move(p));
    } else {
      for (auto& piece : cut_long(p, max_chars)) units.push_back(std::move(piece));
    }
  }
  std::vector<std::string> chunks;
  std::string current;
  for (auto& u : units) {
    if (current.empty()) {
      current = std::move(u);
    } else if (current.size() + 2 + u.size() <= max_chars) {
      current += "\n\n";
      current += u;
    } else {
      chunks.push_back(std::move(current));
      current = std::move(u);
    }
  }
  if (!current.empty()) chunks.push_back(std::move(current));
  return chunks;
}

LoadedBundle load_bundle(const DocumentManifest& manifest, const ChunkingOptions& options) {
  LoadedBundle out;
  for (const auto& doc : manifest.documents) {
    std::vector<std::pair<int, std::string>> pages;
    try {
      pages = read_bundle(doc.pages_path);
    } catch (const std::exception& e) {
      out.failures.push_back({doc.doc_id, e.what()});
      continue;
    }
    for (const auto& [page, body] : pages) {
      auto pieces = split_page(body, options.max_chunk_chars);
      if (pieces.size() > 1) ++out.pages_split;
      for (std::size_t i = 0; i < pieces.size(); ++i) {
        PageChunk c;
        c.doc_id = doc.doc_id;
        c.fiscal_year = doc.fiscal_year;
        c.page = page;
        c.sub_index = static_cast<int>(i);
        c.chunk_id = make_chunk_id(doc.doc_id, page, c.sub_index);
        c.text = std::move(pieces[i]);
        out.chunks.push_back(std::move(c));
      }
    }
    out.documents.push_back(doc);
  }
  return out;
}

LoadedBundle load_bundle(const std::filesystem::path& manifest_path,
                         const ChunkingOptions& options) {
  return load_bundle(DocumentManifest::load(manifest_path), options);
}

IngestReport ingest(const DocumentManifest& manifest, VectorIndex& index,
                    const Provider& provider, const ChunkingOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  auto bundle = load_bundle(manifest, options);
  IngestReport report;
  report.failures = std::move(bundle.failures);

  const std::size_t batch = std::max<std::size_t>(1, options.embed_batch_size);
  auto next = bundle.chunks.begin();
  for (const auto& doc : bundle.documents) {
    auto end = std::find_if(next, bundle.chunks.end(),
                            [&](const PageChunk& c) { return c.doc_id != doc.doc_id; });
    std::span<PageChunk> chunks(next, end);
    next = end;
    try {
      for (std::size_t i = 0; i < chunks.size(); i += batch) {
        auto part = chunks.subspan(i, std::min(batch, chunks.size() - i));
        std::vector<std::string> texts;
        texts.reserve(part.size());
        for (const auto& c : part) texts.push_back(c.text);
        auto vectors = provider.embed(texts);
        for (std::size_t k = 0; k < part.size(); ++k) part[k].embedding = std::move(vectors[k]);
      }
      index.replace_document(doc.info(), chunks);
    } catch (const std::exception& e) {
      report.failures.push_back({doc.doc_id, e.what()});
      continue;
    }
    ++report.documents_ingested;
    report.chunks_created += chunks.size();
    report.chunks_split += static_cast<std::size_t>(std::count_if(
        chunks.begin(), chunks.end(), [](const PageChunk& c) { return c.sub_index == 1; }));
  }
  report.elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - started)
                          .count();
  return report;
}

IngestReport ingest(const std::filesystem::path& manifest_path, VectorIndex& index,
                    const Provider& provider, const ChunkingOptions& options) {
  return ingest(DocumentManifest::load(manifest_path), index, provider, options);
}

}  // namespace grasp
