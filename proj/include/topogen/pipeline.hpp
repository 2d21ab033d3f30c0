#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include <json.hpp>

#include "topogen/config.hpp"
#include "topogen/distill.hpp"
#include "topogen/executor.hpp"
#include "topogen/policy.hpp"
#include "topogen/trainer.hpp"

namespace topogen {

// Forwards to another backend and counts calls.
class CountingBackend final : public AgentBackend {
 public:
  explicit CountingBackend(std::shared_ptr<AgentBackend> inner) : inner_(std::move(inner)) {}
  Completion complete(const AgentProfile& agent, const std::vector<ChatMessage>& messages) override {
    calls_.fetch_add(1);
    return inner_->complete(agent, messages);
  }
  std::size_t calls() const { return calls_.load(); }

 private:
  std::shared_ptr<AgentBackend> inner_;
  std::atomic<std::size_t> calls_{0};
};

// Everything a command needs, built from a RunConfig.
struct Runtime {
  RunConfig config;
  PriorGraph prior;
  std::vector<std::size_t> node_roles;
  std::unique_ptr<CentralPolicy> policy;
  std::unique_ptr<Embedder> embedder;
  std::unique_ptr<TaskEvaluator> evaluator;
  BackendRegistry backends;
  std::vector<std::shared_ptr<CountingBackend>> counters;
  ExecutorConfig exec;

  std::size_t backend_calls() const;
  TrainerConfig trainer_config() const;
  DistillConfig distill_config() const;
};

std::unique_ptr<Runtime> make_runtime(const RunConfig& cfg, kernels::Exec exec = kernels::Exec::Parallel);

// Loads a centralized checkpoint and checks it against the policy's arrays.
ParamStore load_policy_checkpoint(const Runtime& rt, const std::string& path);

struct GeneratedTopology {
  std::vector<double> query_embedding;
  DecodeTrace trace;
  SparsifyResult sparse;
  ExecutionPlan plan;
  TopologyArtifact artifact;
};

GeneratedTopology generate_centralized(const Runtime& rt, const ParamStore& params, const QueryRecord& q,
                                       double tau, UniformStream& rng);
GeneratedTopology generate_decentralized(const Runtime& rt, const LoadedStudents& students, const QueryRecord& q,
                                         UniformStream& rng);

ExecutionResult execute(const Runtime& rt, const GeneratedTopology& topo, const QueryRecord& q);

using TopologyGenerator = std::function<GeneratedTopology(const QueryRecord&, UniformStream&)>;

struct EvalSummary {
  std::size_t queries = 0;
  std::size_t labeled = 0;  // queries with a gold answer
  std::size_t correct = 0;
  double accuracy = 0.0;    // correct / labeled
  double mean_prompt_tokens = 0.0;
  double mean_completion_tokens = 0.0;
  double mean_total_tokens = 0.0;
  double mean_calls = 0.0;
  std::size_t max_calls = 0;
  std::size_t failed_calls = 0;
  EdgeTypeDistribution edge_mix;  // pooled over kept edges of every query
  std::size_t num_agents = 0;
  std::vector<std::size_t> rounds;  // T values compared against
};

// Query k draws from derive_seed(seed, k).
EvalSummary evaluate(const Runtime& rt, const TopologyGenerator& gen, const std::vector<QueryRecord>& queries,
                     std::uint64_t seed);

nlohmann::ordered_json to_json(const EvalSummary& s);

}  // namespace topogen
