#include "grasp/engine.hpp"

#include "grasp/error.hpp"

namespace grasp {

namespace {

CompletionParams params_from(const ProviderSettings& s) {
  CompletionParams p;
  p.max_tokens = s.max_tokens;
  p.temperature = s.temperature;
  p.seed = s.seed;
  return p;
}

}  // namespace

Engine::Engine(EngineConfig config, std::shared_ptr<const Provider> provider)
    : config_(std::move(config)),
      provider_(provider ? std::move(provider) : make_provider(config_.provider)),
      prompts_(PromptTemplates::load(config_.prompts_dir)) {
  if (std::filesystem::exists(config_.index_path)) index_ = VectorIndex::load(config_.index_path);
}

QueryPlan Engine::plan(const std::string& question,
                       const std::optional<std::string>& last_query) const {
  QueryPrepOptions options;
  options.max_expansion_years = config_.max_expansion_years;
  options.params = params_from(config_.provider);
  QueryPlanner planner(*provider_, prompts_, options);
  auto years = index_.available_years();
  return planner.plan(question, last_query, years);
}

Answer Engine::ask(std::span<const ChatMessage> history,
                   const std::optional<std::string>& last_query, const std::string& question,
                   const StepObserver& on_step) const {
  if (index_.size() == 0) {
    throw UsageError("the index at " + config_.index_path.string() +
                     " is empty or missing; run `grasp ingest` first");
  }
  auto p = plan(question, last_query);
  AgentOptions options;
  options.max_steps = config_.max_steps;
  options.k = config_.k;
  options.system_prompt = prompts_.system;
  options.params = params_from(config_.provider);
  Agent agent(*provider_, index_, ToolRegistry::standard(), options);
  return agent.run(history, question, p, on_step);
}

IngestReport Engine::ingest(const std::filesystem::path& manifest_path) {
  return ingest(DocumentManifest::load(manifest_path));
}

IngestReport Engine::ingest(const DocumentManifest& manifest) {
  std::unique_lock lock(ingest_mutex_, std::try_to_lock);
  if (!lock.owns_lock()) throw ConflictError("an ingest is already running");
  return ingest_locked(manifest);
}

IngestReport Engine::ingest_locked(const DocumentManifest& manifest) {
  ChunkingOptions options;
  options.max_chunk_chars = config_.max_chunk_chars;
  auto report = grasp::ingest(manifest, index_, *provider_, options);
  index_.save(config_.index_path);
  return report;
}

}  // namespace grasp
