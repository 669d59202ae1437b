#include "grasp/commands.hpp"

#include <csignal>
#include <fstream>
#include <optional>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>

#include "grasp/config.hpp"
#include "grasp/engine.hpp"
#include "grasp/error.hpp"
#include "grasp/eval.hpp"
#include "grasp/service.hpp"
#include "grasp/text.hpp"

namespace grasp::cli {

namespace {

EngineConfig resolve_config(const std::string& path) {
  if (!path.empty()) return load_config(path);
  if (auto env = process_env("GRASP_CONFIG"); env && !env->empty()) return load_config(*env);
  return config_from_json(nullptr);
}

int cmd_ingest(const std::string& config_path, const std::string& manifest, std::ostream& out) {
  Engine engine(resolve_config(config_path));
  auto report = engine.ingest(std::filesystem::path(manifest));
  out << nlohmann::json(report).dump(2) << '\n';
  return report.ok() ? kExitOk : kExitFailure;
}

void print_answer(const Answer& answer, std::ostream& out) {
  out << answer.text << '\n';
  if (answer.chart) {
    out << "\nChart: " << nlohmann::json(*answer.chart).dump() << '\n';
  }
  if (!answer.citations.empty()) {
    out << "\nSources:\n";
    for (std::size_t i = 0; i < answer.citations.size(); ++i) {
      const auto& c = answer.citations[i];
      out << "  [" << i + 1 << "] " << c.title << ", page " << c.page << " (FY" << c.fiscal_year
          << "): " << c.url() << '\n';
    }
  }
}

int cmd_ask(const std::string& config_path, const std::string& question,
            const std::optional<std::string>& last, bool json, bool with_trace, std::ostream& out) {
  Engine engine(resolve_config(config_path));
  auto answer = engine.ask({}, last, question);
  if (json) {
    auto j = answer_json(answer, text::random_uuid());
    if (with_trace) j["trace"] = answer.trace;
    out << j.dump(2) << '\n';
  } else {
    print_answer(answer, out);
    if (with_trace) out << "\nTrace:\n" << nlohmann::json(answer.trace).dump(2) << '\n';
  }
  return answer.trace.terminated_by == Termination::error ? kExitFailure : kExitOk;
}

int cmd_serve(const std::string& config_path, std::ostream& out) {
  auto config = resolve_config(config_path);
  Engine engine(config);
  ServiceOptions options;
  options.session_ttl = config.session_ttl;
  options.sessions_dir = config.sessions_dir;
  ChatService service(engine, options);

  // Block termination signals in every thread; a dedicated waiter stops the
  // server when one arrives.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  HttpServer server(service, config.cors_origin);
  int port = server.bind(config.bind_address, config.port);
  out << "grasp serving on http://" << config.bind_address << ':' << port << " (" << engine.index().size()
      << " chunks indexed)" << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.listen();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
  return kExitOk;
}

int cmd_eval(const std::string& config_path, const std::string& questions, const std::string& out_path,
             std::ostream& out) {
  auto cases = load_cases(questions);
  Engine engine(resolve_config(config_path));
  EngineBackend backend(engine, "grasp/" + std::string(engine.provider().kind()));
  auto report = run_eval(cases, backend);
  std::ofstream file(out_path);
  if (!file) throw UsageError("cannot write report to " + out_path);
  file << nlohmann::json(report).dump(2) << '\n';
  if (!file) throw Error("failed writing report to " + out_path);
  out << report.summary();
  out << "Report written to " << out_path << '\n';
  return kExitOk;
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Budget document question answering with page-exact citations"};
  app.name("grasp");
  app.require_subcommand(1, 1);

  std::string config_path;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Config file (JSON); defaults to $GRASP_CONFIG");
  };

  auto* ingest = app.add_subcommand("ingest", "Chunk, embed and index the documents in a manifest");
  std::string manifest;
  ingest->add_option("--manifest", manifest, "Manifest JSON listing the documents")->required();
  add_config(ingest);

  auto* ask = app.add_subcommand("ask", "Answer one question");
  std::string question;
  std::optional<std::string> last;
  bool json = false;
  bool with_trace = false;
  ask->add_option("--question", question, "The question")->required();
  ask->add_option("--last", last, "Previous question in the conversation");
  ask->add_flag("--json", json, "Print the answer as JSON");
  ask->add_flag("--trace", with_trace, "Include the agent trace");
  add_config(ask);

  auto* serve = app.add_subcommand("serve", "Run the HTTP chat service until interrupted");
  add_config(serve);

  auto* eval = app.add_subcommand("eval", "Score a question set and write a report");
  std::string questions;
  std::string out_path;
  eval->add_option("--questions", questions, "Question set (JSONL)")->required();
  eval->add_option("--out", out_path, "Report path (JSON)")->required();
  add_config(eval);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*ingest) return cmd_ingest(config_path, manifest, out);
    if (*ask) {
      if (text::is_blank(question)) throw UsageError("--question must not be empty");
      return cmd_ask(config_path, question, last, json, with_trace, out);
    }
    if (*serve) return cmd_serve(config_path, out);
    if (*eval) return cmd_eval(config_path, questions, out_path, out);
  } catch (const UsageError& e) {
    err << "grasp: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "grasp: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "grasp: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> storage;
  storage.reserve(args.size() + 1);
  storage.emplace_back("grasp");
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  argv.push_back(nullptr);
  return run(static_cast<int>(storage.size()), argv.data(), out, err);
}

}  // namespace grasp::cli
