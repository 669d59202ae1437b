#include "grasp/service.hpp"

#include <ctime>
#include <fstream>
#include <regex>

#include "grasp/error.hpp"
#include "grasp/text.hpp"

namespace grasp {

namespace {

std::string iso8601(std::chrono::system_clock::time_point t) {
  std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

long long epoch_seconds(std::chrono::system_clock::time_point t) {
  return std::chrono::duration_cast<std::chrono::seconds>(t.time_since_epoch()).count();
}

bool valid_client_trace_id(const std::string& id) {
  static const std::regex kId("[A-Za-z0-9_-]{8,64}");
  return std::regex_match(id, kId);
}

}  // namespace

nlohmann::json to_json(const ChatSession& s) {
  nlohmann::json j{{"session_id", s.session_id},
                   {"created_at", iso8601(s.created_at)},
                   {"messages", s.messages}};
  j["last_user_query"] = s.last_user_query ? nlohmann::json(*s.last_user_query) : nlohmann::json();
  return j;
}

nlohmann::json answer_json(const Answer& answer, const std::string& trace_id) {
  nlohmann::json j{{"answer_text", answer.text}, {"citations", answer.citations}, {"trace_id", trace_id}};
  if (answer.chart) j["chart"] = *answer.chart;
  return j;
}

ChatService::ChatService(Engine& engine, ServiceOptions options)
    : engine_(engine), options_(std::move(options)) {
  if (!options_.sessions_dir.empty()) {
    std::filesystem::create_directories(options_.sessions_dir);
    load_persisted();
  }
}

nlohmann::json ChatService::create_session() {
  auto slot = std::make_shared<SessionSlot>();
  auto now = options_.clock();
  slot->data.session_id = text::random_uuid();
  slot->data.created_at = now;
  slot->data.last_active = now;
  persist(slot->data, {});
  std::lock_guard lock(sessions_mutex_);
  sessions_.emplace(slot->data.session_id, slot);
  return {{"session_id", slot->data.session_id}};
}

std::shared_ptr<ChatService::SessionSlot> ChatService::find_session(const std::string& id) {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown session " + id);
  if (options_.clock() - it->second->data.last_active > options_.session_ttl) {
    sessions_.erase(it);
    throw NotFoundError("session " + id + " has expired");
  }
  return it->second;
}

std::size_t ChatService::session_count() const {
  std::lock_guard lock(sessions_mutex_);
  return sessions_.size();
}

void ChatService::open_trace(const std::string& trace_id, const std::string& session_id) {
  std::lock_guard lock(traces_mutex_);
  if (traces_.contains(trace_id)) throw ConflictError("trace id " + trace_id + " is already in use");
  traces_[trace_id].session_id = session_id;
  trace_order_.push_back(trace_id);
  while (trace_order_.size() > options_.max_traces) {
    auto oldest = trace_order_.front();
    if (!traces_[oldest].done) break;
    traces_.erase(oldest);
    trace_order_.pop_front();
  }
  traces_cv_.notify_all();
}

nlohmann::json ChatService::post_message(const std::string& session_id, const std::string& text,
                                         const std::optional<std::string>& trace_id) {
  if (text::is_blank(text)) throw UsageError("message text is empty");
  if (trace_id && !valid_client_trace_id(*trace_id)) {
    throw UsageError("trace_id must be 8-64 characters of [A-Za-z0-9_-]");
  }
  auto slot = find_session(session_id);
  const std::string tid = trace_id.value_or(text::random_uuid());
  open_trace(tid, session_id);

  std::lock_guard run(slot->run_mutex);
  auto on_step = [&](const AgentStep& step) {
    std::lock_guard lock(traces_mutex_);
    traces_[tid].steps.push_back(step);
    traces_cv_.notify_all();
  };
  Answer answer;
  try {
    answer = engine_.ask(slot->data.messages, slot->data.last_user_query, text, on_step);
  } catch (const std::exception& e) {
    {
      std::lock_guard lock(traces_mutex_);
      auto& rec = traces_[tid];
      rec.done = true;
      rec.summary = nlohmann::json{{"terminated_by", "error"}};
      traces_cv_.notify_all();
    }
    throw Error(std::string("engine failure: ") + e.what());
  }

  std::vector<ChatMessage> appended{ChatMessage::user(text), ChatMessage::assistant(answer.text)};
  slot->data.messages.insert(slot->data.messages.end(), appended.begin(), appended.end());
  slot->data.last_user_query = text;
  slot->data.last_active = options_.clock();
  persist(slot->data, appended);

  {
    std::lock_guard lock(traces_mutex_);
    auto& rec = traces_[tid];
    rec.trace = nlohmann::json(answer.trace);
    (*rec.trace)["trace_id"] = tid;
    (*rec.trace)["session_id"] = session_id;
    rec.summary = nlohmann::json{{"terminated_by", to_string(answer.trace.terminated_by)},
                                 {"iterations", answer.trace.iterations}};
    rec.done = true;
    traces_cv_.notify_all();
  }
  return answer_json(answer, tid);
}

nlohmann::json ChatService::get_session(const std::string& session_id) {
  auto slot = find_session(session_id);
  std::lock_guard run(slot->run_mutex);
  return to_json(slot->data);
}

nlohmann::json ChatService::get_trace(const std::string& trace_id) const {
  std::lock_guard lock(traces_mutex_);
  auto it = traces_.find(trace_id);
  if (it == traces_.end()) throw NotFoundError("unknown trace " + trace_id);
  if (it->second.trace) return *it->second.trace;
  return {{"trace_id", trace_id},
          {"session_id", it->second.session_id},
          {"steps", it->second.steps},
          {"in_progress", !it->second.done}};
}

TraceEvents ChatService::trace_events(const std::string& trace_id, std::size_t from,
                                      std::chrono::milliseconds wait) const {
  std::unique_lock lock(traces_mutex_);
  auto ready = [&] {
    auto it = traces_.find(trace_id);
    return it != traces_.end() && (it->second.steps.size() > from || it->second.done);
  };
  traces_cv_.wait_for(lock, wait, ready);
  TraceEvents out;
  auto it = traces_.find(trace_id);
  if (it == traces_.end()) return out;
  out.found = true;
  const auto& steps = it->second.steps;
  for (std::size_t i = from; i < steps.size(); ++i) out.steps.push_back(steps[i]);
  out.done = it->second.done;
  if (out.done) out.summary = it->second.summary;
  return out;
}

nlohmann::json ChatService::healthz() const {
  return {{"status", "ok"},
          {"index_chunks", engine_.index().size()},
          {"provider_kind", std::string(engine_.provider().kind())}};
}

nlohmann::json ChatService::ingest(const nlohmann::json& manifest) {
  DocumentManifest parsed;
  try {
    parsed = DocumentManifest::parse(manifest, std::filesystem::current_path());
  } catch (const FormatError& e) {
    throw UsageError(e.what());
  }
  return engine_.ingest(parsed);
}

// ---------------------------------------------------------------------------
// JSONL persistence: one file per session; the first line describes the
// session, every later line is one message.
// ---------------------------------------------------------------------------

void ChatService::persist(const ChatSession& s, std::span<const ChatMessage> appended) const {
  if (options_.sessions_dir.empty()) return;
  auto path = options_.sessions_dir / (s.session_id + ".jsonl");
  std::ofstream out(path, std::ios::app);
  if (!out) return;
  if (appended.empty()) {
    out << nlohmann::json{{"type", "session"},
                          {"session_id", s.session_id},
                          {"created_at", epoch_seconds(s.created_at)}}
               .dump()
        << '\n';
    return;
  }
  for (const auto& m : appended) {
    nlohmann::json line = m;
    line["type"] = "message";
    line["at"] = epoch_seconds(s.last_active);
    out << line.dump() << '\n';
  }
}

void ChatService::load_persisted() {
  for (const auto& entry : std::filesystem::directory_iterator(options_.sessions_dir)) {
    if (entry.path().extension() != ".jsonl") continue;
    std::ifstream in(entry.path());
    auto slot = std::make_shared<SessionSlot>();
    std::string line;
    bool ok = false;
    while (std::getline(in, line)) {
      if (text::is_blank(line)) continue;
      try {
        auto j = nlohmann::json::parse(line);
        auto type = j.value("type", "");
        if (type == "session") {
          slot->data.session_id = j.at("session_id").get<std::string>();
          slot->data.created_at = std::chrono::system_clock::time_point(
              std::chrono::seconds(j.at("created_at").get<long long>()));
          slot->data.last_active = slot->data.created_at;
          ok = true;
        } else if (type == "message" && ok) {
          auto m = j.get<ChatMessage>();
          if (m.role == Role::user) slot->data.last_user_query = m.content;
          slot->data.last_active = std::chrono::system_clock::time_point(
              std::chrono::seconds(j.value("at", 0LL)));
          slot->data.messages.push_back(std::move(m));
        }
      } catch (const std::exception&) {
        // skip damaged lines
      }
    }
    if (ok && options_.clock() - slot->data.last_active <= options_.session_ttl) {
      sessions_.emplace(slot->data.session_id, slot);
    }
  }
}

}  // namespace grasp
