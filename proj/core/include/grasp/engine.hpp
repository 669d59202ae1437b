#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>

#include "grasp/agent.hpp"
#include "grasp/config.hpp"
#include "grasp/corpus.hpp"
#include "grasp/index.hpp"
#include "grasp/queryprep.hpp"

namespace grasp {

/// The whole question-answering pipeline behind one object: query planning,
/// the agent loop, and corpus ingest into the persisted index.
class Engine {
 public:
  /// Loads prompts and, when it exists, the index at config.index_path.
  /// `provider` overrides the one described by the config.
  explicit Engine(EngineConfig config, std::shared_ptr<const Provider> provider = nullptr);

  /// Plans with `last_query` as the rephrasing context, then runs the agent.
  /// Throws UsageError when the index is empty.
  Answer ask(std::span<const ChatMessage> history, const std::optional<std::string>& last_query,
             const std::string& question, const StepObserver& on_step = {}) const;

  QueryPlan plan(const std::string& question, const std::optional<std::string>& last_query) const;

  /// Single writer: throws ConflictError when another ingest is running.
  /// Saves the index to config.index_path afterwards.
  IngestReport ingest(const std::filesystem::path& manifest_path);
  IngestReport ingest(const DocumentManifest& manifest);

  const EngineConfig& config() const { return config_; }
  const VectorIndex& index() const { return index_; }
  const Provider& provider() const { return *provider_; }
  const PromptTemplates& prompts() const { return prompts_; }

 private:
  IngestReport ingest_locked(const DocumentManifest& manifest);

  EngineConfig config_;
  std::shared_ptr<const Provider> provider_;
  PromptTemplates prompts_;
  VectorIndex index_;
  std::mutex ingest_mutex_;
};

}  // namespace grasp
