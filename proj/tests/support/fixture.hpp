#pragma once

#include <filesystem>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "grasp/config.hpp"
#include "grasp/index.hpp"
#include "grasp/provider.hpp"
#include "grasp/queryprep.hpp"

namespace grasp::testing {

std::filesystem::path source_dir();
std::filesystem::path fixture_dir();  // data/deskton
std::filesystem::path fixture_manifest();
std::filesystem::path prompts_dir();

std::shared_ptr<const MockProvider> fixture_provider();

/// The Deskton corpus ingested with the default mock embedding; built once.
const VectorIndex& fixture_index();

/// Deskton facts the generator seeded into the documents.
inline constexpr double kSchoolFy2023Projected = 105'300'000;
inline constexpr double kSchoolFy2023Actual = 106'848'000;

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Mock-provider config with its index under `dir` and the shipped prompts.
EngineConfig fixture_config(const std::filesystem::path& dir);

/// Script entry answering `reply` to exactly `messages`.
MockScriptEntry script_entry(std::vector<ChatMessage> messages, std::string reply);

/// The single-message prompt the planner sends for rephrasing.
std::vector<ChatMessage> rephrase_call(const PromptTemplates& t, const std::string& current,
                                       const std::optional<std::string>& last);
std::vector<ChatMessage> extract_years_call(const PromptTemplates& t, const std::string& rephrased);

/// Mock provider whose embed() blocks while the gate is closed, so a test
/// can hold an ingest in flight.
class GatedProvider final : public Provider {
 public:
  std::string_view kind() const override { return "mock"; }
  void close();
  void open();
  /// Blocks until some embed() call is waiting on the closed gate.
  void wait_until_blocked() const;

 protected:
  std::string do_complete(std::span<const ChatMessage> messages, const CompletionParams& params) const override;
  std::vector<EmbeddingVector> do_embed(std::span<const std::string> texts) const override;

 private:
  MockProvider inner_;
  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  bool closed_ = false;
  mutable int waiting_ = 0;
};

}  // namespace grasp::testing
