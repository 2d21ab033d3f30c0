#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "topogen/agent.hpp"
#include "topogen/decoder.hpp"
#include "topogen/executor.hpp"
#include "topogen/features.hpp"
#include "topogen/numerics.hpp"
#include "topogen/policy.hpp"
#include "topogen/scheduler.hpp"

namespace topogen {

struct RewardConfig {
  double lambda = 0.5;
  double gamma = 0.01;          // entropy-regularization coefficient
  double baseline_decay = 0.9;
};

// Shannon entropy (natural log) of the edge-type mix; 0 for an empty graph.
double diversity_reward(const HeteroGraph& g);
double total_reward(int r_task, double r_div, double lambda);
// Sum over pairs of the entropy of each post-mask distribution.
double policy_entropy(const DecodeTrace& trace);
// Linear from tau_start at step 0 to tau_end at total_steps.
double anneal_temperature(std::size_t step, std::size_t total_steps, double tau_start = 2.0, double tau_end = 0.5);

struct Episode {
  std::string query_id;
  std::vector<double> query_embedding;
  double tau = 1.0;
  DecodeTrace trace;
  SparsifyResult sparse;
  ExecutionPlan plan;
  ExecutionResult execution;
  int r_task = 0;
  double r_div = 0.0;
  double reward = 0.0;
};

// Produces the binary task score of an executed episode.
class TaskEvaluator {
 public:
  virtual ~TaskEvaluator() = default;
  virtual int score(const QueryRecord& query, const Episode& episode) const = 0;
};

// 1 iff the final answer matches the query's gold answer.
class ExactMatchEvaluator final : public TaskEvaluator {
 public:
  int score(const QueryRecord& query, const Episode& episode) const override;
};

// 1 iff every decoded pair chose the target relation (None included).
class TargetTopologyEvaluator final : public TaskEvaluator {
 public:
  explicit TargetTopologyEvaluator(HeteroGraph target) : target_(std::move(target)) {}
  int score(const QueryRecord& query, const Episode& episode) const override;
  const HeteroGraph& target() const { return target_; }

 private:
  HeteroGraph target_;
};

class ConstantEvaluator final : public TaskEvaluator {
 public:
  explicit ConstantEvaluator(int value) : value_(value) {}
  int score(const QueryRecord&, const Episode&) const override { return value_; }

 private:
  int value_;
};

// Negated REINFORCE surrogate averaged over a batch:
//   -(1/B) sum_e [ log pi(G_e) * advantage_e + gamma * H(pi, G_e) ]
// Minimizing it ascends the policy objective.
class ReinforceObjective final : public Objective {
 public:
  struct Item {
    std::span<const double> query_embedding;
    const DecodeTrace* trace;
    double tau;
    double advantage;
  };
  ReinforceObjective(const CentralPolicy& policy, std::vector<Item> items, double gamma)
      : policy_(policy), items_(std::move(items)), gamma_(gamma) {}
  double value(const ParamStore& params) const override;
  double accumulate_gradient(ParamStore& params) const override;

 private:
  const CentralPolicy& policy_;
  std::vector<Item> items_;
  double gamma_;
};

struct TrainerConfig {
  RewardConfig reward;
  double lr = 0.01;
  double tau_start = 2.0;
  double tau_end = 0.5;
  std::size_t query_budget = 40;  // M: number of query visits
  std::size_t batch_size = 1;
  double alpha = 0.7;
  int debate_rounds = 2;
  std::uint64_t seed = 0;
};

struct TrainerState {
  double baseline = 0.0;
  std::size_t step = 0;
  std::size_t total_steps = 0;
  std::size_t queries_done = 0;
};

struct StepReport {
  std::size_t step = 0;
  double reward = 0.0;
  int r_task = 0;
  double r_div = 0.0;
  double entropy = 0.0;
  double tau = 0.0;
  double baseline = 0.0;
};

nlohmann::ordered_json to_json(const StepReport& r);
nlohmann::ordered_json to_json(const TrainerState& s);
TrainerState trainer_state_from_json(const nlohmann::json& j);

// Raised when every agent call of an episode failed; the state is resumable.
class TrainingHalted : public std::runtime_error {
 public:
  TrainingHalted(const std::string& what, TrainerState state) : std::runtime_error(what), state_(state) {}
  const TrainerState& state() const { return state_; }

 private:
  TrainerState state_;
};

// Centralized stage: embed -> encode -> decode -> sparsify -> schedule ->
// execute -> reward -> policy-gradient step, once per query visit.
class Trainer {
 public:
  Trainer(const CentralPolicy& policy, ParamStore& params, const Roster& roster, const Embedder& embedder,
          const TaskEvaluator& evaluator, const BackendRegistry& backends, ExecutorConfig exec_cfg,
          TrainerConfig cfg);

  Episode run_episode(const QueryRecord& query, UniformStream& rng);
  StepReport reinforce_step(std::span<Episode> batch);

  // Runs (or resumes) the query budget, cycling through `queries`.
  std::vector<StepReport> train(const std::vector<QueryRecord>& queries);

  const TrainerState& state() const { return state_; }
  void set_state(const TrainerState& s) { state_ = s; }
  double current_tau() const;
  std::size_t total_steps() const;
  TokenStats token_stats() const { return tokens_; }

 private:
  const std::vector<double>& embedding_for(const QueryRecord& q);

  const CentralPolicy& policy_;
  ParamStore& params_;
  const Roster& roster_;
  const Embedder& embedder_;
  const TaskEvaluator& evaluator_;
  const BackendRegistry& backends_;
  ExecutorConfig exec_cfg_;
  TrainerConfig cfg_;
  TrainerState state_;
  TokenStats tokens_;
  std::map<std::string, std::vector<double>> embeddings_;
};

}  // namespace topogen
