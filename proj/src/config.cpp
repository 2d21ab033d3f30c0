#include "topogen/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "topogen/errors.hpp"

namespace topogen {

namespace {

using json = nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [k, _] : j.items()) {
    if (!allowed.count(k)) throw ConfigError(where + ": unknown field '" + k + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

Hyperparameters parse_hp(const json& j) {
  const std::string w = "hyperparameters";
  reject_unknown(j, {"alpha", "lambda", "gamma", "lr", "tau_start", "tau_end", "baseline_decay", "M", "M_prime", "S",
                     "debate_rounds", "d", "L", "seed", "batch_size", "distill_epochs", "student_hidden",
                     "baseline_rounds"},
                 w);
  Hyperparameters hp;
  read(j, "alpha", hp.alpha, w);
  read(j, "lambda", hp.lambda, w);
  read(j, "gamma", hp.gamma, w);
  read(j, "lr", hp.lr, w);
  read(j, "tau_start", hp.tau_start, w);
  read(j, "tau_end", hp.tau_end, w);
  read(j, "baseline_decay", hp.baseline_decay, w);
  read(j, "M", hp.M, w);
  read(j, "M_prime", hp.M_prime, w);
  read(j, "S", hp.S, w);
  read(j, "debate_rounds", hp.debate_rounds, w);
  read(j, "d", hp.d, w);
  read(j, "L", hp.L, w);
  if (!j.contains("seed")) throw ConfigError("hyperparameters.seed: required");
  read(j, "seed", hp.seed, w);
  read(j, "batch_size", hp.batch_size, w);
  read(j, "distill_epochs", hp.distill_epochs, w);
  read(j, "student_hidden", hp.student_hidden, w);
  read(j, "baseline_rounds", hp.baseline_rounds, w);
  return hp;
}

nlohmann::ordered_json hp_json(const Hyperparameters& hp) {
  nlohmann::ordered_json j;
  j["alpha"] = hp.alpha;
  j["lambda"] = hp.lambda;
  j["gamma"] = hp.gamma;
  j["lr"] = hp.lr;
  j["tau_start"] = hp.tau_start;
  j["tau_end"] = hp.tau_end;
  j["baseline_decay"] = hp.baseline_decay;
  j["M"] = hp.M;
  j["M_prime"] = hp.M_prime;
  j["S"] = hp.S;
  j["debate_rounds"] = hp.debate_rounds;
  j["d"] = hp.d;
  j["L"] = hp.L;
  j["seed"] = hp.seed;
  j["batch_size"] = hp.batch_size;
  j["distill_epochs"] = hp.distill_epochs;
  j["student_hidden"] = hp.student_hidden;
  j["baseline_rounds"] = hp.baseline_rounds;
  return j;
}

Roster parse_roster(const json& j) {
  reject_unknown(j, {"agents", "decision_maker"}, "roster");
  Roster r;
  if (!j.contains("decision_maker")) throw ConfigError("roster.decision_maker: required");
  read(j, "decision_maker", r.decision_maker, "roster");
  if (!j.contains("agents") || !j["agents"].is_array()) throw ConfigError("roster.agents: required array");
  for (std::size_t i = 0; i < j["agents"].size(); ++i) {
    const auto& a = j["agents"][i];
    const std::string w = "roster.agents[" + std::to_string(i) + "]";
    reject_unknown(a, {"id", "role", "backend", "system_prompt", "tools"}, w);
    AgentProfile p;
    p.id = i;
    read(a, "id", p.id, w);
    read(a, "role", p.role, w);
    read(a, "backend", p.backend, w);
    read(a, "system_prompt", p.system_prompt, w);
    read(a, "tools", p.tools, w);
    if (p.backend.empty()) throw ConfigError(w + ".backend: required");
    r.agents.push_back(std::move(p));
  }
  return r;
}

nlohmann::ordered_json roster_json(const Roster& r) {
  nlohmann::ordered_json j;
  j["decision_maker"] = r.decision_maker;
  auto agents = nlohmann::ordered_json::array();
  for (const auto& a : r.agents) {
    nlohmann::ordered_json aj;
    aj["id"] = a.id;
    aj["role"] = a.role;
    aj["backend"] = a.backend;
    aj["system_prompt"] = a.system_prompt;
    aj["tools"] = a.tools;
    agents.push_back(std::move(aj));
  }
  j["agents"] = std::move(agents);
  return j;
}

PromptTemplates parse_templates(const json& j) {
  const std::string w = "templates";
  reject_unknown(j, {"activate", "conditioned", "feedback_critique", "feedback_rehandle", "debate_challenge",
                     "debate_rebuttal", "debate_final"},
                 w);
  PromptTemplates t;
  read(j, "activate", t.activate, w);
  read(j, "conditioned", t.conditioned, w);
  read(j, "feedback_critique", t.feedback_critique, w);
  read(j, "feedback_rehandle", t.feedback_rehandle, w);
  read(j, "debate_challenge", t.debate_challenge, w);
  read(j, "debate_rebuttal", t.debate_rebuttal, w);
  read(j, "debate_final", t.debate_final, w);
  return t;
}

nlohmann::ordered_json templates_json(const PromptTemplates& t) {
  nlohmann::ordered_json j;
  j["activate"] = t.activate;
  j["conditioned"] = t.conditioned;
  j["feedback_critique"] = t.feedback_critique;
  j["feedback_rehandle"] = t.feedback_rehandle;
  j["debate_challenge"] = t.debate_challenge;
  j["debate_rebuttal"] = t.debate_rebuttal;
  j["debate_final"] = t.debate_final;
  return j;
}

}  // namespace

std::string RunConfig::prior_graph_path() const {
  std::filesystem::path p(prior_graph);
  if (p.is_absolute() || base_dir.empty()) return p.string();
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

bool RunConfig::operator==(const RunConfig& o) const {
  return roster == o.roster && prior_graph == o.prior_graph && hp == o.hp && aggregation == o.aggregation &&
         templates == o.templates && backends == o.backends && embedder == o.embedder && evaluator == o.evaluator &&
         inject_failure == o.inject_failure && injection_prompt == o.injection_prompt;
}

RunConfig parse_config(const json& j, const std::string& base_dir) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  reject_unknown(j, {"version", "roster", "prior_graph", "hyperparameters", "aggregation", "templates", "backends",
                     "embedder", "evaluator", "failure_injection"},
                 "config");
  if (j.value("version", 0) != 1) throw ConfigError("config.version: must be 1");
  RunConfig c;
  c.base_dir = base_dir;
  if (!j.contains("roster")) throw ConfigError("config.roster: required");
  c.roster = parse_roster(j["roster"]);
  if (!j.contains("prior_graph")) throw ConfigError("config.prior_graph: required");
  read(j, "prior_graph", c.prior_graph, "config");
  if (!j.contains("hyperparameters")) throw ConfigError("config.hyperparameters: required (seed)");
  c.hp = parse_hp(j["hyperparameters"]);
  if (j.contains("aggregation")) c.aggregation = aggregation_from_string(j["aggregation"].get<std::string>());
  if (j.contains("templates")) c.templates = parse_templates(j["templates"]);

  if (!j.contains("backends") || !j["backends"].is_object()) throw ConfigError("config.backends: required object");
  for (const auto& [name, b] : j["backends"].items()) {
    BackendSpec s;
    s.kind = b.value("kind", "mock");
    try {
      if (s.kind == "mock") {
        reject_unknown(b, {"kind", "rules", "default", "adversarial", "failure_text", "unavailable", "latency_ms"},
                       "backends." + name);
        s.mock = mock_script_from_json(b);
      } else if (s.kind == "chat") {
        reject_unknown(b, {"kind", "base_url", "model", "api_key_env", "timeout_s", "retries", "temperature",
                           "requests_per_second", "backoff_ms"},
                       "backends." + name);
        s.chat = chat_config_from_json(b);
      } else {
        throw ConfigError("backends." + name + ".kind: expected mock or chat, got '" + s.kind + "'");
      }
    } catch (const json::exception& ex) {
      throw ConfigError("backends." + name + ": " + ex.what());
    }
    c.backends.emplace(name, std::move(s));
  }

  if (j.contains("embedder")) {
    const auto& e = j["embedder"];
    c.embedder.kind = e.value("kind", "hash");
    if (c.embedder.kind == "http") {
      reject_unknown(e, {"kind", "url", "model", "api_key_env", "timeout_s", "retries", "backoff_ms"}, "embedder");
      c.embedder.http = embedding_config_from_json(e);
    } else if (c.embedder.kind == "hash") {
      reject_unknown(e, {"kind"}, "embedder");
    } else {
      throw ConfigError("embedder.kind: expected hash or http, got '" + c.embedder.kind + "'");
    }
  }

  if (j.contains("evaluator")) {
    const auto& e = j["evaluator"];
    reject_unknown(e, {"kind", "edges", "value"}, "evaluator");
    c.evaluator.kind = e.value("kind", "exact_match");
    read(e, "value", c.evaluator.constant, "evaluator");
    for (const auto& ed : e.value("edges", json::array())) {
      try {
        c.evaluator.target.push_back({ed.at("src").get<NodeId>(), ed.at("dst").get<NodeId>(),
                                      relation_from_string(ed.at("type").get<std::string>()), 1.0});
      } catch (const json::exception& ex) {
        throw ConfigError(std::string("evaluator.edges: ") + ex.what());
      } catch (const InputError& ex) {
        throw ConfigError(std::string("evaluator.edges: ") + ex.what());
      }
    }
  }

  if (j.contains("failure_injection")) {
    const auto& f = j["failure_injection"];
    reject_unknown(f, {"agent", "prompt"}, "failure_injection");
    if (f.contains("agent")) c.inject_failure = f["agent"].get<NodeId>();
    read(f, "prompt", c.injection_prompt, "failure_injection");
  }
  validate(c);
  return c;
}

void validate(const RunConfig& c) {
  c.roster.validate();
  const auto& hp = c.hp;
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in01(hp.alpha)) throw ConfigError("hyperparameters.alpha: must lie in [0, 1]");
  if (!in01(hp.lambda)) throw ConfigError("hyperparameters.lambda: must lie in [0, 1]");
  if (hp.gamma < 0.0) throw ConfigError("hyperparameters.gamma: must be >= 0");
  if (!(hp.lr > 0.0)) throw ConfigError("hyperparameters.lr: must be > 0");
  if (!(hp.tau_start > 0.0 && hp.tau_end > 0.0)) throw ConfigError("hyperparameters.tau_*: must be > 0");
  if (!(hp.baseline_decay > 0.0 && hp.baseline_decay < 1.0)) {
    throw ConfigError("hyperparameters.baseline_decay: must lie in (0, 1)");
  }
  if (hp.S == 0) throw ConfigError("hyperparameters.S: must be >= 1");
  if (hp.debate_rounds < 0) throw ConfigError("hyperparameters.debate_rounds: must be >= 0");
  if (hp.d == 0 || hp.L == 0) throw ConfigError("hyperparameters.d/L: must be >= 1");
  if (hp.batch_size == 0) throw ConfigError("hyperparameters.batch_size: must be >= 1");
  if (hp.student_hidden == 0) throw ConfigError("hyperparameters.student_hidden: must be >= 1");
  for (const auto& a : c.roster.agents) {
    if (!c.backends.count(a.backend)) {
      throw ConfigError("roster.agents[" + std::to_string(a.id) + "].backend: unknown backend '" + a.backend + "'");
    }
  }
  if (c.evaluator.kind != "exact_match" && c.evaluator.kind != "target_topology" && c.evaluator.kind != "constant") {
    throw ConfigError("evaluator.kind: expected exact_match, target_topology or constant, got '" + c.evaluator.kind +
                      "'");
  }
  for (const auto& e : c.evaluator.target) {
    if (e.src >= e.dst || e.dst >= c.roster.size()) {
      throw ConfigError("evaluator.edges: target edges must satisfy src < dst < N");
    }
  }
  if (c.inject_failure && *c.inject_failure >= c.roster.size()) {
    throw ConfigError("failure_injection.agent: not an agent id");
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& ex) {
    throw ConfigError(path + ": " + ex.what());
  }
  return parse_config(j, std::filesystem::path(path).parent_path().string());
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["roster"] = roster_json(c.roster);
  j["prior_graph"] = c.prior_graph;
  j["hyperparameters"] = hp_json(c.hp);
  j["aggregation"] = to_string(c.aggregation);
  j["templates"] = templates_json(c.templates);
  nlohmann::ordered_json backends = nlohmann::ordered_json::object();
  for (const auto& [name, b] : c.backends) backends[name] = b.kind == "chat" ? to_json(b.chat) : to_json(b.mock);
  j["backends"] = std::move(backends);
  if (c.embedder.kind == "http") {
    j["embedder"] = to_json(c.embedder.http);
  } else {
    j["embedder"] = {{"kind", "hash"}};
  }
  nlohmann::ordered_json ev;
  ev["kind"] = c.evaluator.kind;
  if (c.evaluator.kind == "constant") ev["value"] = c.evaluator.constant;
  if (!c.evaluator.target.empty()) {
    auto edges = nlohmann::ordered_json::array();
    for (const auto& e : c.evaluator.target) {
      edges.push_back({{"src", e.src}, {"dst", e.dst}, {"type", std::string(to_string(e.relation))}});
    }
    ev["edges"] = std::move(edges);
  }
  j["evaluator"] = std::move(ev);
  nlohmann::ordered_json fi;
  if (c.inject_failure) fi["agent"] = *c.inject_failure;
  fi["prompt"] = c.injection_prompt;
  j["failure_injection"] = std::move(fi);
  return j;
}

}  // namespace topogen
