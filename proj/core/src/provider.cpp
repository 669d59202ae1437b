#include "grasp/provider.hpp"

#include <cmath>
#include <fstream>

#include "grasp/error.hpp"
#include "grasp/text.hpp"

namespace grasp {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    case Role::tool: return "tool";
  }
  return "user";
}

Role role_from_string(std::string_view name) {
  if (name == "system") return Role::system;
  if (name == "user") return Role::user;
  if (name == "assistant") return Role::assistant;
  if (name == "tool") return Role::tool;
  throw FormatError("unknown message role '" + std::string(name) + "'");
}

ChatMessage ChatMessage::system(std::string content) {
  return {Role::system, std::move(content), std::nullopt};
}
ChatMessage ChatMessage::user(std::string content) {
  return {Role::user, std::move(content), std::nullopt};
}
ChatMessage ChatMessage::assistant(std::string content) {
  return {Role::assistant, std::move(content), std::nullopt};
}
ChatMessage ChatMessage::tool(std::string name, std::string content) {
  return {Role::tool, std::move(content), std::move(name)};
}

void validate(const ChatMessage& message) {
  if (message.role == Role::tool) {
    if (!message.tool_name || message.tool_name->empty()) {
      throw UsageError("tool message without tool_name");
    }
  } else if (message.tool_name) {
    throw UsageError("tool_name set on a " + std::string(to_string(message.role)) + " message");
  }
  if (message.role != Role::assistant && text::is_blank(message.content)) {
    throw UsageError("empty " + std::string(to_string(message.role)) + " message");
  }
}

void to_json(nlohmann::json& j, const ChatMessage& m) {
  j = nlohmann::json{{"role", to_string(m.role)}, {"content", m.content}};
  if (m.tool_name) j["tool_name"] = *m.tool_name;
}

void from_json(const nlohmann::json& j, ChatMessage& m) {
  m.role = role_from_string(j.at("role").get<std::string>());
  m.content = j.at("content").get<std::string>();
  if (auto it = j.find("tool_name"); it != j.end() && !it->is_null()) {
    m.tool_name = it->get<std::string>();
  } else {
    m.tool_name.reset();
  }
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) throw UsageError("cosine of vectors with different dimensions");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += double(a.values[i]) * double(b.values[i]);
    na += double(a.values[i]) * double(a.values[i]);
    nb += double(b.values[i]) * double(b.values[i]);
  }
  if (na == 0 || nb == 0) return 0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// ---------------------------------------------------------------------------

std::string Provider::complete(std::span<const ChatMessage> messages,
                               const CompletionParams& params) const {
  if (messages.empty()) throw UsageError("complete: empty message list");
  if (messages.front().role != Role::system && messages.front().role != Role::user) {
    throw UsageError("complete: first message must have role system or user");
  }
  for (const auto& m : messages) validate(m);
  if (params.max_tokens <= 0) throw UsageError("complete: max_tokens must be positive");
  if (params.temperature < 0) throw UsageError("complete: temperature must be non-negative");
  return do_complete(messages, params);
}

std::vector<EmbeddingVector> Provider::embed(std::span<const std::string> texts) const {
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (text::is_blank(texts[i])) {
      throw UsageError("embed: text at position " + std::to_string(i) + " is empty");
    }
  }
  if (texts.empty()) return {};
  auto out = do_embed(texts);
  if (out.size() != texts.size()) {
    throw ProviderError("embed: backend returned " + std::to_string(out.size()) +
                            " vectors for " + std::to_string(texts.size()) + " texts",
                        1, false);
  }
  return out;
}

EmbeddingVector Provider::embed_one(const std::string& text) const {
  return embed(std::span<const std::string>(&text, 1)).front();
}

// ---------------------------------------------------------------------------

std::vector<MockScriptEntry> parse_mock_script(const nlohmann::json& j) {
  if (!j.is_array()) throw FormatError("mock script must be a JSON array");
  std::vector<MockScriptEntry> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    if (!e.is_object() || !e.contains("match_digest") || !e.contains("response") ||
        !e["match_digest"].is_string() || !e["response"].is_string()) {
      throw FormatError("mock script entry " + std::to_string(i) +
                        " needs string fields match_digest and response");
    }
    out.push_back({e["match_digest"].get<std::string>(), e["response"].get<std::string>()});
  }
  return out;
}

std::vector<MockScriptEntry> load_mock_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open mock script " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("mock script " + path.string() + ": " + e.what());
  }
  return parse_mock_script(j);
}

nlohmann::json to_json(std::span<const MockScriptEntry> script) {
  auto arr = nlohmann::json::array();
  for (const auto& e : script) {
    arr.push_back({{"match_digest", e.match_digest}, {"response", e.response}});
  }
  return arr;
}

EmbeddingVector hashed_bag_of_tokens(std::string_view input, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw UsageError("embedding dimension must be positive");
  std::vector<double> counts(dim, 0.0);
  auto tokens = text::tokenize(input);
  if (tokens.empty()) tokens.push_back(text::trim(input));
  for (const auto& tok : tokens) {
    auto h = text::mix64(text::fnv1a64(tok, seed));
    counts[h % dim] += 1.0;
  }
  double norm = 0;
  for (double c : counts) norm += c * c;
  norm = std::sqrt(norm);
  EmbeddingVector v;
  v.values.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) v.values[i] = static_cast<float>(counts[i] / norm);
  return v;
}

MockProvider::MockProvider(std::vector<MockScriptEntry> script, std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw UsageError("mock provider dimension must be positive");
  for (auto& e : script) script_.insert_or_assign(std::move(e.match_digest), std::move(e.response));
}

std::string MockProvider::digest(std::span<const ChatMessage> messages) {
  std::string canonical;
  for (const auto& m : messages) {
    canonical += to_string(m.role);
    if (m.tool_name) {
      canonical += ':';
      canonical += *m.tool_name;
    }
    canonical += '\n';
    canonical += text::collapse_whitespace(m.content);
    canonical += '\x1e';
  }
  return text::hex64(text::fnv1a64(canonical));
}

namespace {

std::string first_passage(std::string_view observation) {
  auto cut = observation.find("\n\n[", 1);
  return text::trim(cut == std::string_view::npos ? observation : observation.substr(0, cut));
}

bool advertises_budget_tool(std::span<const ChatMessage> messages) {
  for (const auto& m : messages) {
    if (m.role == Role::system && m.content.find("ACTION <tool_name>") != std::string::npos &&
        m.content.find("budget_tool") != std::string::npos) {
      return true;
    }
  }
  return false;
}

}  // namespace

std::string MockProvider::fallback_reply(std::span<const ChatMessage> messages,
                                         const CompletionParams& params) {
  if (params.echo) return *params.echo;
  const auto& last = messages.back();
  if (last.role == Role::tool) return "FINAL " + first_passage(last.content);
  if (last.role == Role::user && advertises_budget_tool(messages)) {
    return "I should look this up in the budget documents.\nACTION budget_tool {}";
  }
  return last.content;
}

std::string MockProvider::do_complete(std::span<const ChatMessage> messages,
                                      const CompletionParams& params) const {
  if (auto it = script_.find(digest(messages)); it != script_.end()) return it->second;
  return fallback_reply(messages, params);
}

std::vector<EmbeddingVector> MockProvider::do_embed(std::span<const std::string> texts) const {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(hashed_bag_of_tokens(t, dim_));
  return out;
}

// ---------------------------------------------------------------------------

FunctionProvider::FunctionProvider(CompleteFn fn, std::size_t dim)
    : fn_(std::move(fn)), embedder_({}, dim) {}

std::string FunctionProvider::do_complete(std::span<const ChatMessage> messages,
                                          const CompletionParams& params) const {
  return fn_(messages, params);
}

std::vector<EmbeddingVector> FunctionProvider::do_embed(std::span<const std::string> texts) const {
  return embedder_.embed(texts);
}

RecordingProvider::RecordingProvider(std::shared_ptr<const Provider> inner)
    : inner_(std::move(inner)) {
  if (!inner_) throw UsageError("RecordingProvider needs an inner provider");
}

std::string RecordingProvider::do_complete(std::span<const ChatMessage> messages,
                                           const CompletionParams& params) const {
  RecordedCall call{{messages.begin(), messages.end()}, MockProvider::digest(messages), {}, {}};
  try {
    call.response = inner_->complete(messages, params);
  } catch (const std::exception& e) {
    call.error = e.what();
    std::lock_guard lock(mutex_);
    calls_.push_back(std::move(call));
    throw;
  }
  std::string response = *call.response;
  std::lock_guard lock(mutex_);
  calls_.push_back(std::move(call));
  return response;
}

std::vector<EmbeddingVector> RecordingProvider::do_embed(std::span<const std::string> texts) const {
  return inner_->embed(texts);
}

std::vector<RecordedCall> RecordingProvider::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::vector<MockScriptEntry> RecordingProvider::to_script() const {
  std::lock_guard lock(mutex_);
  std::vector<MockScriptEntry> out;
  for (const auto& c : calls_) {
    if (c.response) out.push_back({c.digest, *c.response});
  }
  return out;
}

void RecordingProvider::clear() {
  std::lock_guard lock(mutex_);
  calls_.clear();
}

}  // namespace grasp
