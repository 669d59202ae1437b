#include "support/fixture.hpp"

#include <random>

#include "grasp/corpus.hpp"
#include "grasp/error.hpp"
#include "grasp/text.hpp"

namespace grasp::testing {

std::filesystem::path source_dir() { return GRASP_SOURCE_DIR; }
std::filesystem::path fixture_dir() { return source_dir() / "data" / "deskton"; }
std::filesystem::path fixture_manifest() { return fixture_dir() / "manifest.json"; }
std::filesystem::path prompts_dir() { return source_dir() / "prompts"; }

std::shared_ptr<const MockProvider> fixture_provider() {
  static auto provider = std::make_shared<const MockProvider>();
  return provider;
}

const VectorIndex& fixture_index() {
  static const VectorIndex index = [] {
    VectorIndex idx;
    auto report = ingest(fixture_manifest(), idx, *fixture_provider());
    if (!report.ok()) throw Error("fixture ingest failed: " + report.failures.front().reason);
    return idx;
  }();
  return index;
}

TempDir::TempDir() {
  std::random_device rd;
  path_ = std::filesystem::temp_directory_path() /
          ("grasp-test-" + text::hex64((static_cast<std::uint64_t>(rd()) << 32) | rd()));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

EngineConfig fixture_config(const std::filesystem::path& dir) {
  EngineConfig c;
  c.provider.kind = "mock";
  c.index_path = dir / "grasp.idx";
  c.prompts_dir = prompts_dir();
  return c;
}

MockScriptEntry script_entry(std::vector<ChatMessage> messages, std::string reply) {
  return {MockProvider::digest(messages), std::move(reply)};
}

std::vector<ChatMessage> rephrase_call(const PromptTemplates& t, const std::string& current,
                                       const std::optional<std::string>& last) {
  return {ChatMessage::user(text::render_template(
      t.rephrase, {{"currentQuery", current}, {"lastQuery", last.value_or("")}}))};
}

std::vector<ChatMessage> extract_years_call(const PromptTemplates& t, const std::string& rephrased) {
  return {ChatMessage::user(text::render_template(t.extract_years, {{"query", rephrased}}))};
}

void GatedProvider::close() {
  std::lock_guard lock(mutex_);
  closed_ = true;
}

void GatedProvider::open() {
  {
    std::lock_guard lock(mutex_);
    closed_ = false;
  }
  cv_.notify_all();
}

void GatedProvider::wait_until_blocked() const {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return waiting_ > 0; });
}

std::string GatedProvider::do_complete(std::span<const ChatMessage> messages,
                                       const CompletionParams& params) const {
  return inner_.complete(messages, params);
}

std::vector<EmbeddingVector> GatedProvider::do_embed(std::span<const std::string> texts) const {
  {
    std::unique_lock lock(mutex_);
    ++waiting_;
    cv_.notify_all();
    cv_.wait(lock, [&] { return !closed_; });
    --waiting_;
  }
  return inner_.embed(texts);
}

}  // namespace grasp::testing
