#include "topogen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "topogen/errors.hpp"

namespace topogen {

double diversity_reward(const HeteroGraph& g) {
  const auto dist = edge_type_distribution(g);
  if (dist.empty) return 0.0;
  double h = 0.0;
  for (double p : dist.p) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double total_reward(int r_task, double r_div, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InputError("lambda must lie in [0, 1]");
  return lambda * static_cast<double>(r_task) + (1.0 - lambda) * r_div;
}

double policy_entropy(const DecodeTrace& trace) {
  double h = 0.0;
  for (const auto& pd : trace.pairs) h += entropy(pd.dist);
  return h;
}

double anneal_temperature(std::size_t step, std::size_t total_steps, double tau_start, double tau_end) {
  if (total_steps == 0) return tau_end;
  const double frac = static_cast<double>(std::min(step, total_steps)) / static_cast<double>(total_steps);
  return tau_start + (tau_end - tau_start) * frac;
}

int ExactMatchEvaluator::score(const QueryRecord& query, const Episode& episode) const {
  if (!query.gold) return 0;
  return answers_match(episode.execution.answer, *query.gold) ? 1 : 0;
}

int TargetTopologyEvaluator::score(const QueryRecord&, const Episode& episode) const {
  for (const auto& pd : episode.trace.pairs) {
    const auto want = target_.relation(pd.src, pd.dst).value_or(Relation::None);
    if (pd.chosen != want) return 0;
  }
  return 1;
}

double ReinforceObjective::value(const ParamStore& params) const {
  double total = 0.0;
  for (const auto& it : items_) {
    const auto s = policy_.score(params, it.query_embedding, *it.trace, it.tau);
    total += s.log_prob * it.advantage + gamma_ * s.entropy;
  }
  return -total / static_cast<double>(items_.size());
}

double ReinforceObjective::accumulate_gradient(ParamStore& params) const {
  const double scale = -1.0 / static_cast<double>(items_.size());
  double total = 0.0;
  for (const auto& it : items_) {
    const auto s = policy_.accumulate_gradient(params, it.query_embedding, *it.trace, it.tau,
                                               scale * it.advantage, scale * gamma_);
    total += s.log_prob * it.advantage + gamma_ * s.entropy;
  }
  return scale * total;
}

nlohmann::ordered_json to_json(const StepReport& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["reward"] = r.reward;
  j["r_task"] = r.r_task;
  j["r_div"] = r.r_div;
  j["entropy"] = r.entropy;
  j["tau"] = r.tau;
  j["baseline"] = r.baseline;
  return j;
}

nlohmann::ordered_json to_json(const TrainerState& s) {
  nlohmann::ordered_json j;
  j["baseline"] = s.baseline;
  j["step"] = s.step;
  j["total_steps"] = s.total_steps;
  j["queries_done"] = s.queries_done;
  return j;
}

TrainerState trainer_state_from_json(const nlohmann::json& j) {
  TrainerState s;
  s.baseline = j.at("baseline").get<double>();
  s.step = j.at("step").get<std::size_t>();
  s.total_steps = j.at("total_steps").get<std::size_t>();
  s.queries_done = j.at("queries_done").get<std::size_t>();
  return s;
}

Trainer::Trainer(const CentralPolicy& policy, ParamStore& params, const Roster& roster, const Embedder& embedder,
                 const TaskEvaluator& evaluator, const BackendRegistry& backends, ExecutorConfig exec_cfg,
                 TrainerConfig cfg)
    : policy_(policy),
      params_(params),
      roster_(roster),
      embedder_(embedder),
      evaluator_(evaluator),
      backends_(backends),
      exec_cfg_(std::move(exec_cfg)),
      cfg_(cfg) {
  if (cfg_.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(cfg_.reward.baseline_decay > 0.0 && cfg_.reward.baseline_decay < 1.0)) {
    throw ConfigError("baseline_decay must lie in (0, 1)");
  }
  if (cfg_.reward.gamma < 0.0) throw ConfigError("gamma must be >= 0");
  state_.total_steps = total_steps();
}

std::size_t Trainer::total_steps() const {
  return (cfg_.query_budget + cfg_.batch_size - 1) / cfg_.batch_size;
}

double Trainer::current_tau() const {
  return anneal_temperature(state_.step, state_.total_steps, cfg_.tau_start, cfg_.tau_end);
}

const std::vector<double>& Trainer::embedding_for(const QueryRecord& q) {
  auto it = embeddings_.find(q.id);
  if (it == embeddings_.end()) it = embeddings_.emplace(q.id, embedder_.embed(q.text)).first;
  return it->second;
}

Episode Trainer::run_episode(const QueryRecord& query, UniformStream& rng) {
  Episode ep;
  ep.query_id = query.id;
  ep.query_embedding = embedding_for(query);
  ep.tau = current_tau();
  ep.trace = policy_.sample(params_, ep.query_embedding, ep.tau, rng);
  ep.sparse = sparsify(ep.trace, cfg_.alpha);
  ep.plan = build_plan(ep.sparse.kept_graph(), ep.sparse.kept_nodes, roster_.decision_maker,
                       ScheduleOptions{cfg_.debate_rounds});
  ep.execution = run_topology(ep.plan, roster_, query, exec_cfg_, backends_);
  tokens_ += ep.execution.stats;
  if (ep.execution.total_failure) {
    throw TrainingHalted("every agent call failed on query '" + query.id + "'", state_);
  }
  ep.r_task = evaluator_.score(query, ep);
  ep.r_div = diversity_reward(ep.sparse.kept_graph());
  ep.reward = total_reward(ep.r_task, ep.r_div, cfg_.reward.lambda);
  return ep;
}

StepReport Trainer::reinforce_step(std::span<Episode> batch) {
  if (batch.empty()) throw InputError("reinforce_step needs a nonempty batch");
  StepReport rep;
  rep.step = state_.step;
  rep.tau = batch.front().tau;

  std::vector<ReinforceObjective::Item> items;
  double reward_sum = 0.0;
  for (const auto& ep : batch) {
    if (!std::isfinite(ep.reward)) {
      std::cerr << "warning: discarding episode for '" << ep.query_id << "' with non-finite reward\n";
      continue;
    }
    items.push_back({ep.query_embedding, &ep.trace, ep.tau, ep.reward - state_.baseline});
    reward_sum += ep.reward;
    rep.r_task += ep.r_task;
    rep.r_div += ep.r_div;
    rep.entropy += policy_entropy(ep.trace);
  }
  if (!items.empty()) {
    const double n = static_cast<double>(items.size());
    ReinforceObjective objective(policy_, std::move(items), cfg_.reward.gamma);
    backward(objective, params_);
    sgd_update(params_, cfg_.lr);
    rep.reward = reward_sum / n;
    rep.r_div /= n;
    rep.entropy /= n;
    state_.baseline = cfg_.reward.baseline_decay * state_.baseline + (1.0 - cfg_.reward.baseline_decay) * rep.reward;
  }
  rep.baseline = state_.baseline;
  ++state_.step;
  return rep;
}

std::vector<StepReport> Trainer::train(const std::vector<QueryRecord>& queries) {
  std::vector<StepReport> report;
  if (cfg_.query_budget == 0) return report;
  if (queries.empty()) throw InputError("training needs at least one query");
  while (state_.queries_done < cfg_.query_budget) {
    const std::size_t take = std::min(cfg_.batch_size, cfg_.query_budget - state_.queries_done);
    std::vector<Episode> batch;
    for (std::size_t k = 0; k < take; ++k) {
      const std::size_t visit = state_.queries_done + k;
      UniformStream rng(derive_seed(cfg_.seed, visit));
      batch.push_back(run_episode(queries[visit % queries.size()], rng));
    }
    report.push_back(reinforce_step(batch));
    state_.queries_done += take;
  }
  return report;
}

}  // namespace topogen
