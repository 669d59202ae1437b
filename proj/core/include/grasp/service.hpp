#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grasp/engine.hpp"

namespace grasp {

inline constexpr int kApiSchemaVersion = 1;
inline constexpr const char* kSchemaHeader = "X-Grasp-Schema-Version";

using SystemClock = std::function<std::chrono::system_clock::time_point()>;

struct ChatSession {
  std::string session_id;
  std::chrono::system_clock::time_point created_at;
  std::chrono::system_clock::time_point last_active;
  std::vector<ChatMessage> messages;  // user/assistant pairs
  std::optional<std::string> last_user_query;
};

nlohmann::json to_json(const ChatSession& s);

/// The JSON body returned for one answered message.
nlohmann::json answer_json(const Answer& answer, const std::string& trace_id);

struct ServiceOptions {
  std::chrono::seconds session_ttl{24 * 60 * 60};
  std::filesystem::path sessions_dir;  // empty: no persistence
  SystemClock clock = [] { return std::chrono::system_clock::now(); };
  std::size_t max_traces = 1000;
};

struct TraceEvents {
  bool found = false;
  bool done = false;
  std::vector<nlohmann::json> steps;  // steps[from..]
  std::optional<nlohmann::json> summary;  // set once done
};

/// Chat API semantics independent of the HTTP transport. Errors are thrown as
/// UsageError (400), NotFoundError (404) or ConflictError (409); anything else
/// is an engine failure (500).
class ChatService {
 public:
  ChatService(Engine& engine, ServiceOptions options = {});

  nlohmann::json create_session();

  /// Messages to one session are serialized; distinct sessions run in
  /// parallel. `trace_id` lets a client subscribe to the event stream before
  /// posting.
  nlohmann::json post_message(const std::string& session_id, const std::string& text,
                              const std::optional<std::string>& trace_id = std::nullopt);

  nlohmann::json get_session(const std::string& session_id);
  nlohmann::json get_trace(const std::string& trace_id) const;
  nlohmann::json healthz() const;

  /// Body is a manifest; relative pages_path values resolve against the
  /// server's working directory.
  nlohmann::json ingest(const nlohmann::json& manifest);

  /// Steps recorded from index `from` onward, waiting up to `wait` for new
  /// ones. Unknown ids report found = false after the wait.
  TraceEvents trace_events(const std::string& trace_id, std::size_t from,
                           std::chrono::milliseconds wait) const;

  std::size_t session_count() const;

 private:
  struct SessionSlot {
    std::mutex run_mutex;  // serializes post_message per session
    ChatSession data;
  };

  struct TraceRecord {
    std::string session_id;
    std::vector<nlohmann::json> steps;
    bool done = false;
    std::optional<nlohmann::json> trace;
    std::optional<nlohmann::json> summary;
  };

  std::shared_ptr<SessionSlot> find_session(const std::string& id);
  void open_trace(const std::string& trace_id, const std::string& session_id);
  void persist(const ChatSession& s, std::span<const ChatMessage> appended) const;
  void load_persisted();

  Engine& engine_;
  ServiceOptions options_;

  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<SessionSlot>> sessions_;

  mutable std::mutex traces_mutex_;
  mutable std::condition_variable traces_cv_;
  std::map<std::string, TraceRecord> traces_;
  std::deque<std::string> trace_order_;
};

/// HTTP front end for ChatService:
///   POST /api/sessions, POST /api/sessions/{id}/messages,
///   GET /api/sessions/{id}, GET /api/traces/{id}, GET /api/traces/{id}/events,
///   POST /api/ingest, GET /healthz
class HttpServer {
 public:
  HttpServer(ChatService& service, std::string cors_origin = {});
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// port 0 picks a free port. Returns the bound port; throws Error on failure.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace grasp
