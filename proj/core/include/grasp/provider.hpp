#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace grasp {

enum class Role { system, user, assistant, tool };

std::string_view to_string(Role role);
Role role_from_string(std::string_view name);

struct ChatMessage {
  Role role = Role::user;
  std::string content;
  std::optional<std::string> tool_name;  // set iff role == tool

  static ChatMessage system(std::string content);
  static ChatMessage user(std::string content);
  static ChatMessage assistant(std::string content);
  static ChatMessage tool(std::string name, std::string content);

  bool operator==(const ChatMessage&) const = default;
};

/// Throws UsageError when the message breaks the role/tool_name/content rules.
void validate(const ChatMessage& message);

void to_json(nlohmann::json& j, const ChatMessage& m);
void from_json(const nlohmann::json& j, ChatMessage& m);

struct EmbeddingVector {
  std::vector<float> values;

  std::size_t dim() const noexcept { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

struct CompletionParams {
  int max_tokens = 1024;
  double temperature = 0.0;
  std::optional<std::int64_t> seed;
  // Stand-in reply for offline providers when nothing else applies. Live
  // backends ignore it.
  std::optional<std::string> echo;
};

/// Text-completion and embedding backend. Implementations are immutable after
/// construction and safe for concurrent calls.
class Provider {
 public:
  virtual ~Provider() = default;

  /// Precondition checks happen here; backends implement do_complete.
  std::string complete(std::span<const ChatMessage> messages,
                       const CompletionParams& params = {}) const;

  /// Output is in input order, one vector per text. Rejects blank texts.
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const;

  EmbeddingVector embed_one(const std::string& text) const;

  virtual std::string_view kind() const = 0;

 protected:
  virtual std::string do_complete(std::span<const ChatMessage> messages,
                                  const CompletionParams& params) const = 0;
  virtual std::vector<EmbeddingVector> do_embed(std::span<const std::string> texts) const = 0;
};

// ---------------------------------------------------------------------------
// Deterministic mock
// ---------------------------------------------------------------------------

struct MockScriptEntry {
  std::string match_digest;
  std::string response;
};

/// Reads a JSON array of {match_digest, response}. Throws FormatError.
std::vector<MockScriptEntry> load_mock_script(const std::filesystem::path& path);
std::vector<MockScriptEntry> parse_mock_script(const nlohmann::json& j);
nlohmann::json to_json(std::span<const MockScriptEntry> script);

inline constexpr std::size_t kDefaultMockDim = 256;
inline constexpr std::uint64_t kMockHashSeed = 0x6a09e667f3bcc908ULL;

/// Hashed bag-of-tokens embedding: each lowercase alphanumeric token is
/// hashed into one of `dim` buckets, counts are accumulated, then the vector
/// is L2-normalized. Text without any token hashes as a single token.
EmbeddingVector hashed_bag_of_tokens(std::string_view text, std::size_t dim,
                                     std::uint64_t seed = kMockHashSeed);

/// Scripted completion backend.
///
/// A reply is looked up by `digest(messages)`. When the digest is not in the
/// script, the fallback echo applies, in this order:
///   1. `params.echo` when set;
///   2. last message is a tool observation: `FINAL ` plus the observation's
///      first passage;
///   3. the system message advertises the `ACTION <tool_name>` protocol with a
///      budget_tool: `ACTION budget_tool {}`;
///   4. otherwise the last message's content, verbatim.
class MockProvider final : public Provider {
 public:
  explicit MockProvider(std::vector<MockScriptEntry> script = {},
                        std::size_t dim = kDefaultMockDim);

  /// Normalized digest of a message list: role, tool name and
  /// whitespace-collapsed content of every message, FNV-1a 64 in hex.
  static std::string digest(std::span<const ChatMessage> messages);

  std::string_view kind() const override { return "mock"; }
  std::size_t dimension() const noexcept { return dim_; }
  std::size_t script_size() const noexcept { return script_.size(); }

  static std::string fallback_reply(std::span<const ChatMessage> messages,
                                    const CompletionParams& params);

 protected:
  std::string do_complete(std::span<const ChatMessage> messages,
                          const CompletionParams& params) const override;
  std::vector<EmbeddingVector> do_embed(std::span<const std::string> texts) const override;

 private:
  std::unordered_map<std::string, std::string> script_;
  std::size_t dim_;
};

// ---------------------------------------------------------------------------
// Chat-completions-compatible HTTP backend
// ---------------------------------------------------------------------------

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
};

struct HttpProviderOptions {
  std::string endpoint;  // e.g. https://api.example.com/v1
  std::string chat_model;
  std::string embedding_model;
  std::string api_key;
  RetryPolicy retry;
  std::chrono::seconds timeout{60};
};

/// POSTs `{endpoint}/chat/completions` and `{endpoint}/embeddings`.
/// Retries transport failures and 5xx responses with exponential backoff.
class HttpProvider final : public Provider {
 public:
  explicit HttpProvider(HttpProviderOptions options);
  ~HttpProvider() override;

  std::string_view kind() const override { return "http"; }

 protected:
  std::string do_complete(std::span<const ChatMessage> messages,
                          const CompletionParams& params) const override;
  std::vector<EmbeddingVector> do_embed(std::span<const std::string> texts) const override;

 private:
  nlohmann::json post_json(const std::string& path, const nlohmann::json& body) const;

  HttpProviderOptions options_;
  std::string scheme_host_port_;
  std::string base_path_;
};

// ---------------------------------------------------------------------------
// Decorators and adapters
// ---------------------------------------------------------------------------

/// Completion driven by a callable; embeddings delegate to the mock scheme.
/// Used for scripted policies in tests and for recording mock scripts.
class FunctionProvider final : public Provider {
 public:
  using CompleteFn =
      std::function<std::string(std::span<const ChatMessage>, const CompletionParams&)>;

  explicit FunctionProvider(CompleteFn fn, std::size_t dim = kDefaultMockDim);

  std::string_view kind() const override { return "function"; }

 protected:
  std::string do_complete(std::span<const ChatMessage> messages,
                          const CompletionParams& params) const override;
  std::vector<EmbeddingVector> do_embed(std::span<const std::string> texts) const override;

 private:
  CompleteFn fn_;
  MockProvider embedder_;
};

struct RecordedCall {
  std::vector<ChatMessage> messages;
  std::string digest;
  std::optional<std::string> response;  // empty when the call threw
  std::string error;
};

/// Wraps another provider and keeps every completion call. The recorded
/// calls convert directly into a mock script that replays the session.
class RecordingProvider final : public Provider {
 public:
  explicit RecordingProvider(std::shared_ptr<const Provider> inner);

  std::string_view kind() const override { return inner_->kind(); }

  std::vector<RecordedCall> calls() const;
  std::vector<MockScriptEntry> to_script() const;
  void clear();

 protected:
  std::string do_complete(std::span<const ChatMessage> messages,
                          const CompletionParams& params) const override;
  std::vector<EmbeddingVector> do_embed(std::span<const std::string> texts) const override;

 private:
  std::shared_ptr<const Provider> inner_;
  mutable std::mutex mutex_;
  mutable std::vector<RecordedCall> calls_;
};

}  // namespace grasp
