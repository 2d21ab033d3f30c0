#include "topogen/pipeline.hpp"

#include <algorithm>

#include "topogen/errors.hpp"

namespace topogen {

std::size_t Runtime::backend_calls() const {
  std::size_t n = 0;
  for (const auto& c : counters) n += c->calls();
  return n;
}

TrainerConfig Runtime::trainer_config() const {
  const auto& hp = config.hp;
  TrainerConfig t;
  t.reward = {hp.lambda, hp.gamma, hp.baseline_decay};
  t.lr = hp.lr;
  t.tau_start = hp.tau_start;
  t.tau_end = hp.tau_end;
  t.query_budget = hp.M;
  t.batch_size = hp.batch_size;
  t.alpha = hp.alpha;
  t.debate_rounds = hp.debate_rounds;
  t.seed = hp.seed;
  return t;
}

DistillConfig Runtime::distill_config() const {
  const auto& hp = config.hp;
  DistillConfig d;
  d.query_budget = hp.M_prime;
  d.samples = hp.S;
  d.lr = hp.lr;
  d.epochs = hp.distill_epochs;
  d.hidden = hp.student_hidden;
  d.teacher_tau = hp.tau_end;
  d.seed = hp.seed;
  return d;
}

std::unique_ptr<Runtime> make_runtime(const RunConfig& cfg, kernels::Exec exec) {
  validate(cfg);
  auto rt = std::make_unique<Runtime>();
  rt->config = cfg;
  try {
    rt->prior = load_prior_graph_file(cfg.prior_graph_path());
  } catch (const InputError& ex) {
    throw ConfigError(std::string("prior_graph: ") + ex.what());
  }
  const std::size_t n = cfg.roster.size();
  if (rt->prior.graph.num_nodes() != n) {
    throw ConfigError("prior_graph: has " + std::to_string(rt->prior.graph.num_nodes()) + " nodes, roster has " +
                      std::to_string(n));
  }
  rt->node_roles = cfg.roster.role_indices();

  if (cfg.embedder.kind == "http") {
    rt->embedder = std::make_unique<HttpEmbedder>(cfg.embedder.http);
  } else {
    rt->embedder = std::make_unique<HashEmbedder>();
  }

  PolicyShape shape;
  shape.num_roles = cfg.roster.role_labels().size();
  shape.latent_dim = cfg.hp.d;
  shape.num_layers = cfg.hp.L;
  shape.query_dim = rt->embedder->dimension();
  rt->policy = std::make_unique<CentralPolicy>(rt->prior, rt->node_roles, shape, exec);

  if (cfg.evaluator.kind == "target_topology") {
    HeteroGraph target(n);
    for (const auto& e : cfg.evaluator.target) target.add_edge(e.src, e.dst, e.relation);
    rt->evaluator = std::make_unique<TargetTopologyEvaluator>(std::move(target));
  } else if (cfg.evaluator.kind == "constant") {
    rt->evaluator = std::make_unique<ConstantEvaluator>(cfg.evaluator.constant);
  } else {
    rt->evaluator = std::make_unique<ExactMatchEvaluator>();
  }

  for (const auto& [name, spec] : cfg.backends) {
    std::shared_ptr<AgentBackend> inner;
    if (spec.kind == "chat") {
      inner = std::make_shared<ChatBackend>(spec.chat);
    } else {
      inner = std::make_shared<MockBackend>(spec.mock);
    }
    auto counter = std::make_shared<CountingBackend>(std::move(inner));
    rt->counters.push_back(counter);
    rt->backends.add(name, counter);
  }

  rt->exec.templates = cfg.templates;
  rt->exec.aggregation = cfg.aggregation;
  rt->exec.inject_failure = cfg.inject_failure;
  rt->exec.injection_prompt = cfg.injection_prompt;
  return rt;
}

ParamStore load_policy_checkpoint(const Runtime& rt, const std::string& path) {
  ParamStore loaded = load_param_store(path);
  const ParamStore expected = rt.policy->init_params(0);
  if (loaded.names() != expected.names()) {
    throw ConfigError(path + ": checkpoint arrays do not match the configured policy");
  }
  for (const auto& name : expected.names()) {
    if (loaded.at(name).shape != expected.at(name).shape) {
      throw ConfigError(path + ": array '" + name + "' has the wrong shape for the configured policy");
    }
  }
  return loaded;
}

namespace {

void finish(const Runtime& rt, const QueryRecord& q, GeneratedTopology& out) {
  out.sparse = sparsify(out.trace, rt.config.hp.alpha);
  HeteroGraph kept = out.sparse.kept_graph();
  out.plan = build_plan(kept, out.sparse.kept_nodes, rt.config.roster.decision_maker,
                        ScheduleOptions{rt.config.hp.debate_rounds});
  out.artifact.query_id = q.id;
  for (const auto& a : rt.config.roster.agents) out.artifact.roles.push_back(a.role);
  out.artifact.node_ids = out.sparse.kept_nodes;
  if (out.artifact.node_ids.empty()) out.artifact.node_ids.push_back(rt.config.roster.decision_maker);
  out.artifact.graph = std::move(kept);
}

}  // namespace

GeneratedTopology generate_centralized(const Runtime& rt, const ParamStore& params, const QueryRecord& q,
                                       double tau, UniformStream& rng) {
  GeneratedTopology out;
  out.query_embedding = rt.embedder->embed(q.text);
  out.trace = rt.policy->sample(params, out.query_embedding, tau, rng);
  finish(rt, q, out);
  return out;
}

GeneratedTopology generate_decentralized(const Runtime& rt, const LoadedStudents& students, const QueryRecord& q,
                                         UniformStream& rng) {
  if (students.students.size() != rt.config.roster.size()) {
    throw InputError("student count " + std::to_string(students.students.size()) + " does not match roster size " +
                     std::to_string(rt.config.roster.size()));
  }
  GeneratedTopology out;
  out.query_embedding = rt.embedder->embed(q.text);
  Matrix h0 = init_node_features(rt.node_roles, out.query_embedding, students.features);
  out.trace = decentralized_decode(students.students, h0, rng);
  finish(rt, q, out);
  return out;
}

ExecutionResult execute(const Runtime& rt, const GeneratedTopology& topo, const QueryRecord& q) {
  return run_topology(topo.plan, rt.config.roster, q, rt.exec, rt.backends);
}

EvalSummary evaluate(const Runtime& rt, const TopologyGenerator& gen, const std::vector<QueryRecord>& queries,
                     std::uint64_t seed) {
  EvalSummary s;
  s.queries = queries.size();
  s.num_agents = rt.config.roster.size();
  s.rounds = rt.config.hp.baseline_rounds;
  std::array<std::size_t, kNumRelations> type_counts{};
  std::size_t edges = 0;
  TokenStats total;
  for (std::size_t k = 0; k < queries.size(); ++k) {
    UniformStream rng(derive_seed(seed, k));
    GeneratedTopology topo = gen(queries[k], rng);
    ExecutionResult res = execute(rt, topo, queries[k]);
    if (queries[k].gold) {
      ++s.labeled;
      if (answers_match(res.answer, *queries[k].gold)) ++s.correct;
    }
    total += res.stats;
    s.max_calls = std::max(s.max_calls, res.stats.call_count);
    s.failed_calls += res.failed_calls;
    for (const auto& e : topo.sparse.kept_edges) {
      ++type_counts[edge_index(e.relation)];
      ++edges;
    }
  }
  if (s.queries > 0) {
    const double m = static_cast<double>(s.queries);
    s.mean_prompt_tokens = total.prompt_tokens / m;
    s.mean_completion_tokens = total.completion_tokens / m;
    s.mean_total_tokens = total.total_tokens / m;
    s.mean_calls = total.call_count / m;
  }
  if (s.labeled > 0) s.accuracy = static_cast<double>(s.correct) / s.labeled;
  if (edges > 0) {
    s.edge_mix.empty = false;
    for (std::size_t r = 0; r < kNumRelations; ++r) s.edge_mix.p[r] = static_cast<double>(type_counts[r]) / edges;
  }
  return s;
}

nlohmann::ordered_json to_json(const EvalSummary& s) {
  nlohmann::ordered_json j;
  j["queries"] = s.queries;
  j["labeled"] = s.labeled;
  j["correct"] = s.correct;
  j["accuracy"] = s.accuracy;
  j["mean_prompt_tokens"] = s.mean_prompt_tokens;
  j["mean_completion_tokens"] = s.mean_completion_tokens;
  j["mean_total_tokens"] = s.mean_total_tokens;
  j["mean_calls"] = s.mean_calls;
  j["max_calls"] = s.max_calls;
  j["failed_calls"] = s.failed_calls;
  nlohmann::ordered_json mix;
  for (Relation r : kEdgeRelations) mix[std::string(to_string(r))] = s.edge_mix.p[edge_index(r)];
  j["edge_type_mix"] = std::move(mix);
  auto cmp = nlohmann::ordered_json::array();
  for (std::size_t t : s.rounds) {
    nlohmann::ordered_json c;
    c["rounds"] = t;
    c["multi_round_calls"] = multi_round_calls(s.num_agents, t);
    c["one_shot_mean_calls"] = s.mean_calls;
    c["one_shot_fewer"] = s.mean_calls < static_cast<double>(multi_round_calls(s.num_agents, t));
    cmp.push_back(std::move(c));
  }
  j["cost_comparison"] = std::move(cmp);
  return j;
}

}  // namespace topogen
