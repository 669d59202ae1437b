#include "grasp/agent.hpp"

#include <sstream>

#include "grasp/error.hpp"
#include "grasp/text.hpp"

namespace grasp {

std::string_view to_string(StepKind kind) {
  switch (kind) {
    case StepKind::thought: return "thought";
    case StepKind::action: return "action";
    case StepKind::observation: return "observation";
  }
  return "thought";
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::final_answer: return "final_answer";
    case Termination::max_steps: return "max_steps";
    case Termination::error: return "error";
  }
  return "error";
}

namespace {

StepKind step_kind_from(std::string_view s) {
  if (s == "thought") return StepKind::thought;
  if (s == "action") return StepKind::action;
  if (s == "observation") return StepKind::observation;
  throw FormatError("unknown step kind '" + std::string(s) + "'");
}

Termination termination_from(std::string_view s) {
  if (s == "final_answer") return Termination::final_answer;
  if (s == "max_steps") return Termination::max_steps;
  if (s == "error") return Termination::error;
  throw FormatError("unknown termination '" + std::string(s) + "'");
}

}  // namespace

void to_json(nlohmann::json& j, const HitRef& h) {
  j = nlohmann::json{{"chunk_id", h.chunk_id}, {"doc_id", h.doc_id},       {"fiscal_year", h.fiscal_year},
                     {"page", h.page},         {"sub_index", h.sub_index}, {"score", h.score}};
}

void from_json(const nlohmann::json& j, HitRef& h) {
  h.chunk_id = j.at("chunk_id").get<std::string>();
  h.doc_id = j.at("doc_id").get<std::string>();
  h.fiscal_year = j.at("fiscal_year").get<int>();
  h.page = j.at("page").get<int>();
  h.sub_index = j.at("sub_index").get<int>();
  h.score = j.at("score").get<double>();
}

void to_json(nlohmann::json& j, const AgentStep& s) {
  j = nlohmann::json{{"kind", to_string(s.kind)}, {"content", s.content}};
  if (s.tool_name) j["tool_name"] = *s.tool_name;
  if (s.tool_args) j["tool_args"] = *s.tool_args;
  if (!s.hits.empty()) j["hits"] = s.hits;
  if (s.final_answer) j["final_answer"] = true;
}

void from_json(const nlohmann::json& j, AgentStep& s) {
  s.kind = step_kind_from(j.at("kind").get<std::string>());
  s.content = j.at("content").get<std::string>();
  s.tool_name = j.contains("tool_name") ? std::optional(j["tool_name"].get<std::string>()) : std::nullopt;
  s.tool_args = j.contains("tool_args") ? std::optional(j["tool_args"]) : std::nullopt;
  s.hits = j.value("hits", std::vector<HitRef>{});
  s.final_answer = j.value("final_answer", false);
}

void to_json(nlohmann::json& j, const AgentTrace& t) {
  j = nlohmann::json{{"steps", t.steps},
                     {"iterations", t.iterations},
                     {"terminated_by", to_string(t.terminated_by)},
                     {"plan", t.plan}};
}

void from_json(const nlohmann::json& j, AgentTrace& t) {
  t.steps = j.at("steps").get<std::vector<AgentStep>>();
  t.iterations = j.at("iterations").get<std::size_t>();
  t.terminated_by = termination_from(j.at("terminated_by").get<std::string>());
  t.plan = j.at("plan").get<QueryPlan>();
}

void to_json(nlohmann::json& j, const Citation& c) {
  j = nlohmann::json{{"doc_id", c.doc_id}, {"title", c.title},           {"source_url", c.source_url},
                     {"page", c.page},     {"fiscal_year", c.fiscal_year}, {"url", c.url()}};
}

void from_json(const nlohmann::json& j, Citation& c) {
  c.doc_id = j.at("doc_id").get<std::string>();
  c.title = j.at("title").get<std::string>();
  c.source_url = j.at("source_url").get<std::string>();
  c.page = j.at("page").get<int>();
  c.fiscal_year = j.at("fiscal_year").get<int>();
}

// ---------------------------------------------------------------------------

Directive parse_directive(std::string_view reply) {
  Directive d;
  auto lines = text::split_lines(reply);
  auto clean = [](const std::string& line) {
    auto s = text::trim(line);
    while (!s.empty() && s.front() == '`') s.erase(s.begin());
    while (!s.empty() && s.back() == '`') s.pop_back();
    return text::trim(s);
  };
  std::string thought;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto line = clean(lines[i]);
    if (text::starts_with_icase(line, "ACTION ")) {
      auto rest = text::trim(std::string_view(line).substr(7));
      auto space = rest.find_first_of(" \t");
      d.kind = Directive::Kind::action;
      d.tool_name = rest.substr(0, space);
      d.raw_args = space == std::string::npos ? "" : text::trim(rest.substr(space));
      d.thought = text::trim(thought);
      return d;
    }
    bool final_with_colon = text::starts_with_icase(line, "FINAL:");
    if (text::starts_with_icase(line, "FINAL ") || final_with_colon ||
        (line.size() == 5 && text::starts_with_icase(line, "FINAL"))) {
      std::string body = line.size() > 6 ? line.substr(6) : "";
      for (std::size_t k = i + 1; k < lines.size(); ++k) {
        if (text::trim(lines[k]) == "```") continue;
        body += '\n';
        body += lines[k];
      }
      d.kind = Directive::Kind::final_answer;
      d.final_text = text::trim(body);
      d.thought = text::trim(thought);
      return d;
    }
    if (line.empty() && !text::is_blank(lines[i])) continue;  // a bare code fence
    if (!thought.empty()) thought += '\n';
    thought += lines[i];
  }
  d.thought = text::trim(reply);
  return d;
}

// ---------------------------------------------------------------------------

Agent::Agent(const Provider& provider, const VectorIndex& index, ToolRegistry tools,
             AgentOptions options)
    : provider_(provider), index_(index), tools_(std::move(tools)), options_(std::move(options)) {
  if (!tools_.find("budget_tool")) throw UsageError("agent needs a budget_tool");
  if (options_.max_steps == 0) throw UsageError("max_steps must be positive");
  if (options_.k == 0) throw UsageError("k must be positive");
}

std::string Agent::system_message() const {
  std::ostringstream s;
  if (!text::is_blank(options_.system_prompt)) s << text::trim(options_.system_prompt) << "\n\n";
  s << "Tools:\n";
  for (const auto& t : tools_.tools()) {
    const auto& spec = t->spec();
    s << "- " << spec.name << ": " << spec.description << " Arguments: " << spec.argument_schema.dump()
      << "\n";
  }
  s << "\nWork step by step. In each reply, reason briefly, then end with exactly one directive on "
       "its own line:\n"
       "ACTION <tool_name> <json-args>\n"
       "FINAL <answer for the user>\n"
       "Quote figures with their [doc p.N FYyyyy] tags. A figure for a year taken from a later "
       "year's document is an actual; one from that year's own document is a projection.";
  return s.str();
}

namespace {

std::string user_turn(const std::string& user_query, const QueryPlan& plan) {
  std::ostringstream s;
  s << user_query << "\n\nSearch query: " << plan.rephrased << "\nFiscal years in scope: ";
  if (plan.filter.match_all()) {
    s << "all";
  } else {
    bool first = true;
    for (int y : plan.filter.years) {
      s << (first ? "" : ", ") << y;
      first = false;
    }
  }
  return s.str();
}

std::string evidence_summary(const std::vector<Citation>& citations) {
  if (citations.empty()) return " No supporting pages were found.";
  std::string out = " Pages consulted so far:";
  for (const auto& c : citations) {
    out += "\n- " + c.title + ", page " + std::to_string(c.page) + " (FY" +
           std::to_string(c.fiscal_year) + "): " + c.url();
  }
  return out;
}

HitRef to_ref(const SearchHit& h) {
  const auto& c = *h.chunk;
  return {c.chunk_id, c.doc_id, c.fiscal_year, c.page, c.sub_index, h.score};
}

}  // namespace

Answer Agent::run(std::span<const ChatMessage> history, const std::string& user_query,
                  const QueryPlan& plan, const StepObserver& on_step) const {
  if (text::is_blank(user_query)) throw UsageError("agent: empty user query");
  Answer answer;
  auto& trace = answer.trace;
  trace.plan = plan;

  auto emit = [&](AgentStep step) {
    trace.steps.push_back(std::move(step));
    if (on_step) on_step(trace.steps.back());
  };

  std::vector<ChatMessage> messages;
  messages.push_back(ChatMessage::system(system_message()));
  for (const auto& m : history) {
    if (m.role == Role::user || m.role == Role::assistant) messages.push_back(m);
  }
  messages.push_back(ChatMessage::user(user_turn(user_query, plan)));

  const ToolContext ctx{index_, provider_, plan, options_.k};
  std::vector<SearchHit> evidence;
  bool finished = false;
  std::string error_text;

  for (std::size_t iter = 1; iter <= options_.max_steps && !finished; ++iter) {
    std::string reply;
    try {
      reply = provider_.complete(messages, options_.params);
    } catch (const std::exception& e) {
      error_text = e.what();
      break;
    }
    trace.iterations = iter;
    messages.push_back(ChatMessage::assistant(reply));
    auto directive = parse_directive(reply);

    if (directive.kind == Directive::Kind::final_answer) {
      AgentStep step;
      step.kind = StepKind::thought;
      step.content = directive.final_text;
      step.final_answer = true;
      emit(std::move(step));
      answer.text = directive.final_text;
      trace.terminated_by = Termination::final_answer;
      finished = true;
      break;
    }

    emit({StepKind::thought, directive.thought, std::nullopt, std::nullopt, {}, false});
    if (directive.kind == Directive::Kind::none) {
      messages.push_back(ChatMessage::user("Reply with exactly one ACTION or FINAL directive."));
      continue;
    }

    AgentStep action{StepKind::action, directive.tool_name + " " + directive.raw_args,
                     directive.tool_name, std::nullopt, {}, false};
    AgentStep observation{StepKind::observation, "", directive.tool_name, std::nullopt, {}, false};
    try {
      nlohmann::json args = nlohmann::json::object();
      if (!directive.raw_args.empty()) {
        try {
          args = nlohmann::json::parse(directive.raw_args);
        } catch (const nlohmann::json::exception& e) {
          throw UsageError(std::string("arguments are not valid JSON: ") + e.what());
        }
      }
      if (!args.is_object()) throw UsageError("arguments must be a JSON object");
      const Tool* tool = tools_.find(directive.tool_name);
      if (!tool) throw UsageError("unknown tool '" + directive.tool_name + "'");
      if (directive.tool_name == "budget_tool") {
        // Record the query and scope the search will actually use.
        if (!args.contains("query") || !args["query"].is_string() ||
            text::is_blank(args["query"].get<std::string>())) {
          args["query"] = plan.rephrased;
        }
        if (!args.contains("years")) args["years_in_scope"] = plan.filter;
      }
      action.tool_args = args;
      auto outcome = tool->run(args, ctx);
      observation.content = outcome.observation;
      for (const auto& h : outcome.hits) observation.hits.push_back(to_ref(h));
      evidence.insert(evidence.end(), outcome.hits.begin(), outcome.hits.end());
      if (outcome.chart) answer.chart = std::move(outcome.chart);
    } catch (const std::exception& e) {
      observation.content = std::string("ERROR: ") + e.what();
    }
    if (text::is_blank(observation.content)) observation.content = "(no output)";
    const std::string tool_name = directive.tool_name.empty() ? "unknown" : directive.tool_name;
    messages.push_back(ChatMessage::tool(tool_name, observation.content));
    emit(std::move(action));
    emit(std::move(observation));
  }

  // A final answer that names its pages is cited by those pages only;
  // otherwise every retrieved page is cited.
  auto cited = finished ? referenced_hits(evidence, answer.text) : std::vector<SearchHit>{};
  answer.citations = build_citations(cited.empty() ? evidence : cited);
  if (!finished) {
    const bool failed = !error_text.empty();
    trace.terminated_by = failed ? Termination::error : Termination::max_steps;
    std::string marker = failed ? "error: " + error_text
                                : "max_steps reached after " + std::to_string(trace.iterations) +
                                      " iterations";
    emit({StepKind::thought, marker, std::nullopt, std::nullopt, {}, false});
    answer.text = failed ? "I'm sorry, the language model could not be reached, so I cannot "
                           "answer this question right now."
                         : "I'm sorry, I could not reach a final answer within " +
                               std::to_string(options_.max_steps) + " steps.";
    answer.text += evidence_summary(answer.citations);
  }
  return answer;
}

}  // namespace grasp
