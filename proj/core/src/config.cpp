#include "grasp/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "grasp/error.hpp"

namespace grasp {

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

namespace {

enum class Kind { text, integer, real };

struct Override {
  const char* env;
  const char* pointer;
  Kind kind;
};

// Environment variables that patch the config before validation.
constexpr Override kOverrides[] = {
    {"GRASP_PROVIDER_KIND", "/provider/kind", Kind::text},
    {"GRASP_PROVIDER_ENDPOINT", "/provider/endpoint", Kind::text},
    {"GRASP_CHAT_MODEL", "/provider/chat_model", Kind::text},
    {"GRASP_EMBEDDING_MODEL", "/provider/embedding_model", Kind::text},
    {"GRASP_EMBEDDING_DIM", "/provider/embedding_dim", Kind::integer},
    {"GRASP_MOCK_SCRIPT", "/provider/mock_script", Kind::text},
    {"GRASP_TEMPERATURE", "/provider/temperature", Kind::real},
    {"GRASP_INDEX_PATH", "/index_path", Kind::text},
    {"GRASP_PROMPTS_DIR", "/prompts_dir", Kind::text},
    {"GRASP_K", "/k", Kind::integer},
    {"GRASP_MAX_STEPS", "/max_steps", Kind::integer},
    {"GRASP_MAX_CHUNK_CHARS", "/max_chunk_chars", Kind::integer},
    {"GRASP_BIND_ADDRESS", "/bind_address", Kind::text},
    {"GRASP_PORT", "/port", Kind::integer},
    {"GRASP_SESSION_TTL_SECONDS", "/session_ttl_seconds", Kind::integer},
    {"GRASP_CORS_ORIGIN", "/cors_origin", Kind::text},
    {"GRASP_SESSIONS_DIR", "/sessions_dir", Kind::text},
};

const std::set<std::string> kTopKeys = {
    "provider",  "index_path",          "prompts_dir",  "k",    "max_steps",
    "max_chunk_chars", "max_expansion_years", "bind_address", "port", "session_ttl_seconds",
    "cors_origin", "sessions_dir"};

const std::set<std::string> kProviderKeys = {
    "kind",        "endpoint",    "chat_model", "embedding_model", "api_key_env",
    "embedding_dim", "mock_script", "max_tokens", "temperature",     "seed",
    "retry_attempts", "initial_backoff_ms", "timeout_seconds"};

void check_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!obj.is_object()) throw UsageError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) throw UsageError("unknown config key '" + where + key + "'");
  }
}

template <typename T>
T get_or(const nlohmann::json& obj, const char* key, T fallback, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw UsageError("config key '" + where + key + "' has the wrong type");
  }
}

template <typename T>
T positive(T value, const char* key) {
  if (value <= 0) throw UsageError(std::string("config key '") + key + "' must be positive");
  return value;
}

}  // namespace

EngineConfig config_from_json(const nlohmann::json& input, const EnvLookup& env) {
  nlohmann::json j = input.is_null() ? nlohmann::json::object() : input;
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  for (const auto& o : kOverrides) {
    auto value = env ? env(o.env) : std::nullopt;
    if (!value) continue;
    nlohmann::json::json_pointer ptr(o.pointer);
    try {
      switch (o.kind) {
        case Kind::text: j[ptr] = *value; break;
        case Kind::integer: j[ptr] = std::stoll(*value); break;
        case Kind::real: j[ptr] = std::stod(*value); break;
      }
    } catch (const std::exception&) {
      throw UsageError(std::string("environment variable ") + o.env + " is not a valid number");
    }
  }

  check_keys(j, kTopKeys, "");
  EngineConfig c;
  const auto p = j.value("provider", nlohmann::json::object());
  check_keys(p, kProviderKeys, "provider.");
  auto& ps = c.provider;
  ps.kind = get_or<std::string>(p, "kind", ps.kind, "provider.");
  if (ps.kind != "mock" && ps.kind != "http") {
    throw UsageError("provider.kind must be 'mock' or 'http', got '" + ps.kind + "'");
  }
  ps.endpoint = get_or<std::string>(p, "endpoint", "", "provider.");
  ps.chat_model = get_or<std::string>(p, "chat_model", "", "provider.");
  ps.embedding_model = get_or<std::string>(p, "embedding_model", "", "provider.");
  ps.api_key_env = get_or<std::string>(p, "api_key_env", ps.api_key_env, "provider.");
  ps.embedding_dim = positive(get_or<std::size_t>(p, "embedding_dim", ps.embedding_dim, "provider."),
                              "provider.embedding_dim");
  ps.mock_script = get_or<std::string>(p, "mock_script", "", "provider.");
  ps.max_tokens = positive(get_or<int>(p, "max_tokens", ps.max_tokens, "provider."), "provider.max_tokens");
  ps.temperature = get_or<double>(p, "temperature", ps.temperature, "provider.");
  if (ps.temperature < 0) throw UsageError("provider.temperature must be non-negative");
  if (p.contains("seed") && !p["seed"].is_null()) ps.seed = get_or<std::int64_t>(p, "seed", 0, "provider.");
  ps.retry.attempts = positive(get_or<int>(p, "retry_attempts", ps.retry.attempts, "provider."),
                               "provider.retry_attempts");
  ps.retry.initial_backoff = std::chrono::milliseconds(
      get_or<long long>(p, "initial_backoff_ms", ps.retry.initial_backoff.count(), "provider."));
  ps.timeout = std::chrono::seconds(positive(
      get_or<long long>(p, "timeout_seconds", ps.timeout.count(), "provider."), "provider.timeout_seconds"));
  if (ps.kind == "http" && ps.endpoint.empty()) {
    throw UsageError("provider.endpoint is required for the http provider");
  }

  c.index_path = get_or<std::string>(j, "index_path", c.index_path.string(), "");
  c.prompts_dir = get_or<std::string>(j, "prompts_dir", c.prompts_dir.string(), "");
  c.k = positive(get_or<std::size_t>(j, "k", c.k, ""), "k");
  c.max_steps = positive(get_or<std::size_t>(j, "max_steps", c.max_steps, ""), "max_steps");
  c.max_chunk_chars = positive(get_or<std::size_t>(j, "max_chunk_chars", c.max_chunk_chars, ""),
                               "max_chunk_chars");
  if (j.contains("max_expansion_years") && !j["max_expansion_years"].is_null()) {
    int cap = get_or<int>(j, "max_expansion_years", 0, "");
    if (cap < 0) throw UsageError("max_expansion_years must be non-negative");
    c.max_expansion_years = cap;
  }
  c.bind_address = get_or<std::string>(j, "bind_address", c.bind_address, "");
  c.port = get_or<int>(j, "port", c.port, "");
  if (c.port < 0 || c.port > 65535) throw UsageError("port must be in [0, 65535]");
  c.session_ttl = std::chrono::seconds(positive(
      get_or<long long>(j, "session_ttl_seconds", c.session_ttl.count(), ""), "session_ttl_seconds"));
  c.cors_origin = get_or<std::string>(j, "cors_origin", "", "");
  c.sessions_dir = get_or<std::string>(j, "sessions_dir", "", "");
  return c;
}

EngineConfig load_config(const std::filesystem::path& path, const EnvLookup& env) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j, env);
}

nlohmann::json to_json(const EngineConfig& c) {
  nlohmann::json p{{"kind", c.provider.kind},
                   {"endpoint", c.provider.endpoint},
                   {"chat_model", c.provider.chat_model},
                   {"embedding_model", c.provider.embedding_model},
                   {"api_key_env", c.provider.api_key_env},
                   {"embedding_dim", c.provider.embedding_dim},
                   {"mock_script", c.provider.mock_script.string()},
                   {"max_tokens", c.provider.max_tokens},
                   {"temperature", c.provider.temperature},
                   {"retry_attempts", c.provider.retry.attempts},
                   {"initial_backoff_ms", c.provider.retry.initial_backoff.count()},
                   {"timeout_seconds", c.provider.timeout.count()}};
  if (c.provider.seed) p["seed"] = *c.provider.seed;
  nlohmann::json j{{"provider", std::move(p)},
                   {"index_path", c.index_path.string()},
                   {"prompts_dir", c.prompts_dir.string()},
                   {"k", c.k},
                   {"max_steps", c.max_steps},
                   {"max_chunk_chars", c.max_chunk_chars},
                   {"bind_address", c.bind_address},
                   {"port", c.port},
                   {"session_ttl_seconds", c.session_ttl.count()},
                   {"cors_origin", c.cors_origin},
                   {"sessions_dir", c.sessions_dir.string()}};
  if (c.max_expansion_years) j["max_expansion_years"] = *c.max_expansion_years;
  return j;
}

std::shared_ptr<const Provider> make_provider(const ProviderSettings& s, const EnvLookup& env) {
  if (s.kind == "mock") {
    std::vector<MockScriptEntry> script;
    if (!s.mock_script.empty()) {
      if (!std::filesystem::exists(s.mock_script)) {
        throw UsageError("mock script not found: " + s.mock_script.string());
      }
      script = load_mock_script(s.mock_script);
    }
    return std::make_shared<MockProvider>(std::move(script), s.embedding_dim);
  }
  if (s.kind == "http") {
    HttpProviderOptions o;
    o.endpoint = s.endpoint;
    o.chat_model = s.chat_model;
    o.embedding_model = s.embedding_model;
    if (env && !s.api_key_env.empty()) o.api_key = env(s.api_key_env).value_or("");
    o.retry = s.retry;
    o.timeout = s.timeout;
    return std::make_shared<HttpProvider>(std::move(o));
  }
  throw UsageError("unknown provider kind '" + s.kind + "'");
}

}  // namespace grasp
