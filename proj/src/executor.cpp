#include "topogen/executor.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <iostream>
#include <sstream>

#include "topogen/errors.hpp"

namespace topogen {

std::string render_template(const std::string& tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tmpl.size());
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      if (close != std::string::npos) {
        auto it = vars.find(tmpl.substr(i + 1, close - i - 1));
        if (it != vars.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

std::string to_string(Aggregation a) { return a == Aggregation::Majority ? "majority" : "decision-maker"; }

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "decision-maker") return Aggregation::DecisionMaker;
  if (s == "majority") return Aggregation::Majority;
  throw ConfigError("unknown aggregation strategy '" + s + "'");
}

TokenStats& TokenStats::operator+=(const TokenStats& o) {
  prompt_tokens += o.prompt_tokens;
  completion_tokens += o.completion_tokens;
  total_tokens += o.total_tokens;
  call_count += o.call_count;
  return *this;
}

void BackendRegistry::add(const std::string& name, std::shared_ptr<AgentBackend> backend) {
  backends_[name] = std::move(backend);
}

AgentBackend& BackendRegistry::get(const std::string& name) const {
  auto it = backends_.find(name);
  if (it == backends_.end()) throw ConfigError("no backend named '" + name + "'");
  return *it->second;
}

std::size_t expected_calls(const ExecutionPlan& plan) {
  std::size_t calls = 0;
  for (const auto& s : plan.steps) {
    if (std::holds_alternative<ActivateStep>(s)) {
      calls += 1;
    } else if (std::holds_alternative<FeedbackExchange>(s)) {
      calls += 2;
    } else {
      calls += 2 * static_cast<std::size_t>(std::get<DebateExchange>(s).rounds);
    }
  }
  return calls;
}

std::string normalize_answer(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  std::string out(s.substr(b, e - b + 1));
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  while (!out.empty() && std::ispunct(static_cast<unsigned char>(out.back()))) out.pop_back();
  while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) out.pop_back();
  return out;
}

namespace {
std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}
}  // namespace

bool answers_match(std::string_view answer, std::string_view gold) {
  const auto a = normalize_answer(answer);
  const auto g = normalize_answer(gold);
  const auto na = parse_number(a);
  const auto ng = parse_number(g);
  if (na && ng) return std::fabs(*na - *ng) <= 1e-6;
  return a == g;
}

std::string aggregate(const std::map<NodeId, std::string>& solutions, Aggregation strategy,
                      const std::string& decision_maker_output) {
  if (solutions.empty()) throw InputError("aggregate needs at least one solution");
  if (strategy == Aggregation::DecisionMaker) return decision_maker_output;
  std::map<std::string, std::pair<std::size_t, NodeId>> tally;  // normalized -> (count, first id)
  for (const auto& [id, s] : solutions) {
    auto [it, inserted] = tally.try_emplace(normalize_answer(s), 0, id);
    ++it->second.first;
  }
  NodeId best_id = solutions.begin()->first;
  std::size_t best_count = 0;
  for (const auto& [_, cv] : tally) {
    if (cv.first > best_count || (cv.first == best_count && cv.second < best_id)) {
      best_count = cv.first;
      best_id = cv.second;
    }
  }
  return solutions.at(best_id);
}

namespace {

class Run {
 public:
  Run(const Roster& roster, const QueryRecord& q, const ExecutorConfig& cfg, const BackendRegistry& backends)
      : roster_(roster), query_(q), cfg_(cfg), backends_(backends) {}

  // One backend call; failures are recorded and yield an empty response.
  std::optional<std::string> call(std::size_t step, NodeId speaker, const std::string& kind, std::string prompt) {
    const auto& agent = roster_.at(speaker);
    TranscriptEntry e;
    e.step = step;
    e.speaker = speaker;
    e.kind = kind;
    if (cfg_.inject_failure && *cfg_.inject_failure == speaker) {
      prompt += "\n" + cfg_.injection_prompt;
      e.adversarial = true;
    }
    e.prompt = prompt;
    std::vector<ChatMessage> msgs;
    if (!agent.system_prompt.empty()) msgs.push_back({"system", agent.system_prompt});
    msgs.push_back({"user", prompt});
    std::optional<std::string> out;
    try {
      auto c = backends_.get(agent.backend).complete(agent, msgs);
      e.response = c.content;
      e.prompt_tokens = c.prompt_tokens;
      e.completion_tokens = c.completion_tokens;
      out = std::move(c.content);
    } catch (const BackendError& ex) {
      e.error = ex.what();
      ++failed_;
      std::cerr << "warning: agent " << speaker << " failed at step " << step << ": " << ex.what() << '\n';
    }
    entries_.push_back(std::move(e));
    return out;
  }

  std::map<std::string, std::string> vars(NodeId node) const {
    return {{"query", query_.text}, {"role", roster_.at(node).role}};
  }

  std::string upstream_block(const std::vector<NodeId>& inputs) const {
    std::string block;
    for (NodeId u : inputs) {
      auto it = outputs_.find(u);
      block += "Agent " + std::to_string(u) + " (" + roster_.at(u).role + "): " +
               (it == outputs_.end() ? std::string() : it->second) + "\n";
    }
    return block;
  }

  void activate(std::size_t idx, const ActivateStep& a) {
    auto v = vars(a.node);
    const std::string* tmpl = &cfg_.templates.activate;
    if (!a.conditioned_inputs.empty()) {
      v["upstream"] = upstream_block(a.conditioned_inputs);
      tmpl = &cfg_.templates.conditioned;
    }
    if (!a.debate_partners.empty()) {
      v.try_emplace("upstream", "");
      v["debate_transcript"] = debates_[a.node];
      tmpl = &cfg_.templates.debate_final;
    }
    outputs_[a.node] = call(idx, a.node, "activate", render_template(*tmpl, v)).value_or("");
  }

  void feedback(std::size_t idx, const FeedbackExchange& f) {
    auto cv = vars(f.critic);
    cv["output"] = outputs_[f.author];
    const auto critique = call(idx, f.critic, "critique", render_template(cfg_.templates.feedback_critique, cv));
    auto av = vars(f.author);
    av["output"] = outputs_[f.author];
    av["critique"] = critique.value_or("");
    if (auto revised = call(idx, f.author, "rehandle", render_template(cfg_.templates.feedback_rehandle, av))) {
      outputs_[f.author] = *revised;
    }
  }

  void debate(std::size_t idx, const DebateExchange& d) {
    std::string& log = debates_[d.challenger];
    for (int round = 0; round < d.rounds; ++round) {
      auto cv = vars(d.challenger);
      cv["output"] = outputs_[d.proposer];
      cv["debate_transcript"] = log;
      const auto challenge =
          call(idx, d.challenger, "challenge", render_template(cfg_.templates.debate_challenge, cv));
      log += "Agent " + std::to_string(d.challenger) + " (challenge): " + challenge.value_or("") + "\n";
      auto pv = vars(d.proposer);
      pv["output"] = outputs_[d.proposer];
      pv["debate_transcript"] = log;
      const auto rebuttal = call(idx, d.proposer, "rebuttal", render_template(cfg_.templates.debate_rebuttal, pv));
      log += "Agent " + std::to_string(d.proposer) + " (rebuttal): " + rebuttal.value_or("") + "\n";
    }
  }

  ExecutionResult finish(NodeId decision_maker) {
    ExecutionResult r;
    r.failed_calls = failed_;
    std::map<NodeId, std::string> solutions;
    for (const auto& [id, s] : outputs_) {
      if (!s.empty()) solutions.emplace(id, s);
    }
    if (solutions.empty()) {
      r.total_failure = true;
    } else {
      auto dm = solutions.find(decision_maker);
      if (cfg_.aggregation == Aggregation::DecisionMaker && dm == solutions.end()) {
        // Degraded: the decision maker produced nothing.
        r.answer = aggregate(solutions, Aggregation::Majority, {});
      } else {
        r.answer = aggregate(solutions, cfg_.aggregation, dm == solutions.end() ? std::string() : dm->second);
      }
    }
    for (const auto& e : entries_) {
      r.stats.prompt_tokens += e.prompt_tokens;
      r.stats.completion_tokens += e.completion_tokens;
      ++r.stats.call_count;
    }
    r.stats.total_tokens = r.stats.prompt_tokens + r.stats.completion_tokens;
    r.transcript.entries = std::move(entries_);
    r.transcript.final_answer = r.answer;
    return r;
  }

 private:
  const Roster& roster_;
  const QueryRecord& query_;
  const ExecutorConfig& cfg_;
  const BackendRegistry& backends_;
  std::map<NodeId, std::string> outputs_;
  std::map<NodeId, std::string> debates_;  // by challenger
  std::vector<TranscriptEntry> entries_;
  std::size_t failed_ = 0;
};

void check_roster(const ExecutionPlan& plan, const Roster& roster, const BackendRegistry& backends) {
  auto need = [&](NodeId id) {
    const auto& a = roster.at(id);
    if (!backends.contains(a.backend)) {
      throw ConfigError("agent " + std::to_string(id) + " uses unknown backend '" + a.backend + "'");
    }
  };
  for (const auto& s : plan.steps) {
    std::visit(
        [&](const auto& st) {
          using T = std::decay_t<decltype(st)>;
          if constexpr (std::is_same_v<T, ActivateStep>) {
            need(st.node);
            for (NodeId u : st.conditioned_inputs) need(u);
          } else if constexpr (std::is_same_v<T, FeedbackExchange>) {
            need(st.author);
            need(st.critic);
          } else {
            need(st.proposer);
            need(st.challenger);
          }
        },
        s);
  }
}

}  // namespace

ExecutionResult run_topology(const ExecutionPlan& plan, const Roster& roster, const QueryRecord& query,
                             const ExecutorConfig& cfg, const BackendRegistry& backends) {
  check_roster(plan, roster, backends);
  Run run(roster, query, cfg, backends);
  for (std::size_t idx = 0; idx < plan.steps.size(); ++idx) {
    std::visit(
        [&](const auto& st) {
          using T = std::decay_t<decltype(st)>;
          if constexpr (std::is_same_v<T, ActivateStep>) {
            run.activate(idx, st);
          } else if constexpr (std::is_same_v<T, FeedbackExchange>) {
            run.feedback(idx, st);
          } else {
            run.debate(idx, st);
          }
        },
        plan.steps[idx]);
  }
  return run.finish(plan.decision_maker);
}

nlohmann::ordered_json to_json(const TranscriptEntry& e) {
  nlohmann::ordered_json j;
  j["step"] = e.step;
  j["speaker"] = e.speaker;
  j["kind"] = e.kind;
  j["prompt"] = e.prompt;
  j["response"] = e.response;
  j["prompt_tokens"] = e.prompt_tokens;
  j["completion_tokens"] = e.completion_tokens;
  if (e.adversarial) j["adversarial"] = true;
  if (e.error) j["error"] = *e.error;
  return j;
}

nlohmann::ordered_json to_json(const TokenStats& s) {
  nlohmann::ordered_json j;
  j["prompt_tokens"] = s.prompt_tokens;
  j["completion_tokens"] = s.completion_tokens;
  j["total_tokens"] = s.total_tokens;
  j["call_count"] = s.call_count;
  return j;
}

std::string transcript_jsonl(const Transcript& t) {
  std::string out;
  for (const auto& e : t.entries) out += to_json(e).dump() + "\n";
  return out;
}

}  // namespace topogen
