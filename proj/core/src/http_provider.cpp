#include <algorithm>
#include <thread>

#include <httplib.h>

#include "grasp/error.hpp"
#include "grasp/provider.hpp"

namespace grasp {

HttpProvider::HttpProvider(HttpProviderOptions options) : options_(std::move(options)) {
  const auto& ep = options_.endpoint;
  auto scheme_end = ep.find("://");
  if (scheme_end == std::string::npos) {
    throw UsageError("provider endpoint must start with http:// or https://: '" + ep + "'");
  }
  auto path_start = ep.find('/', scheme_end + 3);
  scheme_host_port_ = ep.substr(0, path_start);
  base_path_ = path_start == std::string::npos ? "" : ep.substr(path_start);
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
  if (options_.retry.attempts < 1) options_.retry.attempts = 1;
}

HttpProvider::~HttpProvider() = default;

nlohmann::json HttpProvider::post_json(const std::string& path, const nlohmann::json& body) const {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  client.set_write_timeout(options_.timeout);
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

  const std::string payload = body.dump();
  auto backoff = options_.retry.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= options_.retry.attempts; ++attempt) {
    auto res = client.Post(base_path_ + path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status >= 500) {
      last_error = "server error " + std::to_string(res->status);
    } else if (res->status >= 400) {
      throw ProviderError("provider rejected request with status " + std::to_string(res->status) +
                              ": " + res->body.substr(0, 200),
                          attempt, false);
    } else {
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        throw ProviderError(std::string("provider returned invalid JSON: ") + e.what(), attempt,
                            false);
      }
    }
    if (attempt < options_.retry.attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw ProviderError(last_error + " after " + std::to_string(options_.retry.attempts) +
                          " attempts",
                      options_.retry.attempts, true);
}

std::string HttpProvider::do_complete(std::span<const ChatMessage> messages,
                                      const CompletionParams& params) const {
  nlohmann::json body{{"model", options_.chat_model},
                      {"max_tokens", params.max_tokens},
                      {"temperature", params.temperature}};
  if (params.seed) body["seed"] = *params.seed;
  auto& msgs = body["messages"] = nlohmann::json::array();
  for (const auto& m : messages) {
    nlohmann::json jm{{"role", to_string(m.role)}, {"content", m.content}};
    // Tool observations travel as user turns: the text directive protocol
    // does not use native tool-call ids.
    if (m.role == Role::tool) {
      jm["role"] = "user";
      jm["content"] = "Observation from " + *m.tool_name + ":\n" + m.content;
    }
    msgs.push_back(std::move(jm));
  }
  auto reply = post_json("/chat/completions", body);
  try {
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("unexpected completion payload: ") + e.what(), 1, false);
  }
}

std::vector<EmbeddingVector> HttpProvider::do_embed(std::span<const std::string> texts) const {
  nlohmann::json body{{"model", options_.embedding_model},
                      {"input", std::vector<std::string>(texts.begin(), texts.end())}};
  auto reply = post_json("/embeddings", body);
  try {
    const auto& data = reply.at("data");
    std::vector<std::pair<std::size_t, EmbeddingVector>> indexed;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& item = data[i];
      std::size_t idx = item.contains("index") ? item["index"].get<std::size_t>() : i;
      indexed.emplace_back(idx, EmbeddingVector{item.at("embedding").get<std::vector<float>>()});
    }
    std::sort(indexed.begin(), indexed.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<EmbeddingVector> out;
    out.reserve(indexed.size());
    for (auto& [idx, v] : indexed) {
      if (!out.empty() && v.dim() != out.front().dim()) {
        throw ProviderError("embedding backend returned mixed dimensions", 1, false);
      }
      out.push_back(std::move(v));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("unexpected embedding payload: ") + e.what(), 1, false);
  }
}

}  // namespace grasp
