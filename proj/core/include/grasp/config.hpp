#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "grasp/provider.hpp"

namespace grasp {

struct ProviderSettings {
  std::string kind = "mock";  // mock | http
  std::string endpoint;
  std::string chat_model;
  std::string embedding_model;
  std::string api_key_env = "GRASP_API_KEY";
  std::size_t embedding_dim = kDefaultMockDim;
  std::filesystem::path mock_script;  // optional for kind = mock
  int max_tokens = 1024;
  double temperature = 0.0;
  std::optional<std::int64_t> seed;
  RetryPolicy retry;
  std::chrono::seconds timeout{60};
};

struct EngineConfig {
  ProviderSettings provider;
  std::filesystem::path index_path = "grasp.idx";
  std::filesystem::path prompts_dir = "prompts";
  std::size_t k = 6;
  std::size_t max_steps = 8;
  std::size_t max_chunk_chars = 4000;
  std::optional<int> max_expansion_years;
  std::string bind_address = "127.0.0.1";
  int port = 8080;
  std::chrono::seconds session_ttl{24 * 60 * 60};
  std::string cors_origin;
  std::filesystem::path sessions_dir;  // empty: sessions live in memory only
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads the process environment.
std::optional<std::string> process_env(const std::string& name);

/// Builds a config from JSON, then applies GRASP_* environment overrides.
/// Unknown keys and wrong types throw UsageError.
EngineConfig config_from_json(const nlohmann::json& j, const EnvLookup& env = process_env);
EngineConfig load_config(const std::filesystem::path& path, const EnvLookup& env = process_env);
nlohmann::json to_json(const EngineConfig& config);

std::shared_ptr<const Provider> make_provider(const ProviderSettings& settings,
                                              const EnvLookup& env = process_env);

}  // namespace grasp
