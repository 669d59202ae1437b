#include <atomic>
#include <iostream>

#include <httplib.h>

#include "grasp/error.hpp"
#include "grasp/service.hpp"
#include "grasp/text.hpp"

namespace grasp {

namespace {

constexpr auto kTraceAppearWait = std::chrono::seconds(5);
constexpr auto kStreamPoll = std::chrono::milliseconds(500);

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

// Maps service exceptions onto status codes. Internal failures are logged
// with an id and only the id goes back to the client.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const UsageError& e) {
    send_error(res, 400, e.what());
  } catch (const FormatError& e) {
    send_error(res, 400, e.what());
  } catch (const NotFoundError& e) {
    send_error(res, 404, e.what());
  } catch (const ConflictError& e) {
    send_error(res, 409, e.what());
  } catch (const std::exception& e) {
    auto id = text::random_uuid();
    std::cerr << "grasp serve: internal error " << id << ": " << e.what() << '\n';
    send_json(res, 500, {{"error", "internal error"}, {"error_id", id}});
  }
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception&) {
    throw UsageError("request body is not valid JSON");
  }
}

std::string sse_event(const char* name, const nlohmann::json& data,
                      std::optional<std::size_t> id = std::nullopt) {
  std::string out = "event: ";
  out += name;
  out += '\n';
  if (id) out += "id: " + std::to_string(*id) + '\n';
  out += "data: " + data.dump() + "\n\n";
  return out;
}

bool write_all(httplib::DataSink& sink, const std::string& s) {
  return sink.is_writable() && sink.write(s.data(), s.size());
}

}  // namespace

struct HttpServer::Impl {
  ChatService& service;
  std::string cors_origin;
  httplib::Server server;
  std::atomic<bool> stopping{false};

  Impl(ChatService& s, std::string origin) : service(s), cors_origin(std::move(origin)) {
    // httplib's defaults add SO_REUSEPORT, which lets a second server bind
    // the same port without error.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    routes();
  }

  void routes() {
    server.set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
      res.set_header(kSchemaHeader, std::to_string(kApiSchemaVersion));
      if (!cors_origin.empty()) {
        res.set_header("Access-Control-Allow-Origin", cors_origin);
        res.set_header("Access-Control-Expose-Headers", kSchemaHeader);
        if (cors_origin != "*") res.set_header("Vary", "Origin");
      }
    });

    server.Options(".*", [this](const httplib::Request&, httplib::Response& res) {
      if (cors_origin.empty()) {
        res.status = 405;
        return;
      }
      res.status = 204;
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type, Last-Event-ID");
      res.set_header("Access-Control-Max-Age", "600");
    });

    server.Post("/api/sessions", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 201, service.create_session()); });
    });

    server.Post(R"(/api/sessions/([^/]+)/messages)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  guarded(res, [&] {
                    auto body = parse_body(req);
                    if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
                      throw UsageError("body must be an object with a string 'text'");
                    }
                    std::optional<std::string> trace_id;
                    if (body.contains("trace_id") && !body["trace_id"].is_null()) {
                      if (!body["trace_id"].is_string()) throw UsageError("trace_id must be a string");
                      trace_id = body["trace_id"].get<std::string>();
                    }
                    send_json(res, 200,
                              service.post_message(req.matches[1], body["text"].get<std::string>(),
                                                   trace_id));
                  });
                });

    server.Get(R"(/api/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, service.get_session(req.matches[1])); });
    });

    server.Get(R"(/api/traces/([^/]+)/events)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] { stream_trace(req, res); });
               });

    server.Get(R"(/api/traces/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, service.get_trace(req.matches[1])); });
    });

    server.Post("/api/ingest", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, service.ingest(parse_body(req))); });
    });

    server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, service.healthz()); });
    });
  }

  // Server-sent events: one "step" event per agent step, then "done" with a
  // short summary. Reconnecting clients resume from Last-Event-ID + 1.
  void stream_trace(const httplib::Request& req, httplib::Response& res) {
    const std::string trace_id = req.matches[1];
    std::size_t from = 0;
    if (req.has_header("Last-Event-ID")) {
      try {
        from = std::stoul(req.get_header_value("Last-Event-ID")) + 1;
      } catch (const std::exception&) {
        throw UsageError("Last-Event-ID must be a step index");
      }
    }
    auto first = service.trace_events(trace_id, from,
                                      std::chrono::duration_cast<std::chrono::milliseconds>(kTraceAppearWait));
    if (!first.found) throw NotFoundError("unknown trace " + trace_id);

    res.set_header("Cache-Control", "no-cache");
    auto pending = std::make_shared<TraceEvents>(std::move(first));
    auto next = std::make_shared<std::size_t>(from);
    res.set_chunked_content_provider(
        "text/event-stream",
        [this, trace_id, pending, next](std::size_t, httplib::DataSink& sink) {
          for (;;) {
            TraceEvents batch;
            if (pending->found) {
              batch = std::move(*pending);
              pending->found = false;
            } else {
              if (stopping) return false;
              batch = service.trace_events(trace_id, *next, kStreamPoll);
              if (!batch.found) {
                write_all(sink, sse_event("done", {{"terminated_by", "error"},
                                                   {"error", "trace no longer available"}}));
                sink.done();
                return true;
              }
            }
            for (const auto& step : batch.steps) {
              if (!write_all(sink, sse_event("step", step, *next))) return false;
              ++*next;
            }
            if (batch.done) {
              write_all(sink, sse_event("done", batch.summary.value_or(nlohmann::json::object())));
              sink.done();
              return true;
            }
            if (!sink.is_writable()) return false;
          }
        });
  }
};

HttpServer::HttpServer(ChatService& service, std::string cors_origin)
    : impl_(std::make_unique<Impl>(service, std::move(cors_origin))) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host)
                        : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound <= 0) throw Error("cannot bind to " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() {
  impl_->stopping = false;
  impl_->server.listen_after_bind();
}

void HttpServer::stop() {
  impl_->stopping = true;
  impl_->server.stop();
}

bool HttpServer::running() const { return impl_->server.is_running(); }

}  // namespace grasp
