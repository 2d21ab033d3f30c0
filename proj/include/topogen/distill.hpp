#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "topogen/decoder.hpp"
#include "topogen/features.hpp"
#include "topogen/numerics.hpp"
#include "topogen/policy.hpp"

namespace topogen {

inline constexpr double kStudentFloor = 1e-8;

// KL(teacher || student) with the student clamped below at 1e-8; terms with
// zero teacher mass contribute nothing.
double distill_loss(const Distribution& teacher, const Distribution& student);

// Per-agent two-layer network: [h_i || h_j] -> hidden (rectifier) -> 4 logits.
class LocalPolicy {
 public:
  static constexpr const char* kHiddenWeight = "local.hidden.weight";  // [hidden, 2d]
  static constexpr const char* kHiddenBias = "local.hidden.bias";      // [hidden]
  static constexpr const char* kOutputWeight = "local.output.weight";  // [4, hidden]
  static constexpr const char* kOutputBias = "local.output.bias";      // [4]

  LocalPolicy() = default;
  LocalPolicy(NodeId owner, std::size_t latent_dim, std::size_t hidden, std::uint64_t seed);
  LocalPolicy(NodeId owner, ParamStore params);

  NodeId owner() const { return owner_; }
  std::size_t latent_dim() const;
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  Distribution forward(std::span<const double> h_i, std::span<const double> h_j) const;
  Distribution forward(const ParamStore& params, std::span<const double> h_i, std::span<const double> h_j) const;

  // Adds weight * d KL(teacher || student(h_i, h_j)) into params' gradients
  // and returns the KL.
  double accumulate_kl_gradient(ParamStore& params, std::span<const double> h_i, std::span<const double> h_j,
                                const Distribution& teacher, double weight) const;

 private:
  NodeId owner_ = 0;
  ParamStore params_;
};

// Sum of KL over a set of pairs owned by one student.
class DistillObjective final : public Objective {
 public:
  struct Item {
    std::span<const double> h_i;
    std::span<const double> h_j;
    Distribution teacher;
  };
  DistillObjective(const LocalPolicy& student, std::vector<Item> items)
      : student_(student), items_(std::move(items)) {}
  double value(const ParamStore& params) const override;
  double accumulate_gradient(ParamStore& params) const override;

 private:
  const LocalPolicy& student_;
  std::vector<Item> items_;
};

// Averaged post-mask conditionals per decoded pair, in decode order.
struct PairMarginals {
  std::size_t num_nodes = 0;
  std::vector<std::pair<NodeId, NodeId>> pairs;
  std::vector<Distribution> dist;
};

PairMarginals teacher_marginals(const CentralPolicy& policy, const ParamStore& params,
                                std::span<const double> q_emb, double tau, std::size_t samples, std::uint64_t seed,
                                kernels::Exec exec = kernels::Exec::Parallel);

struct DistillConfig {
  std::size_t query_budget = 40;  // M'
  std::size_t samples = 8;        // S teacher passes per query
  double lr = 0.01;
  std::size_t epochs = 400;       // passes over the M' queries
  std::size_t hidden = 64;
  double teacher_tau = 0.5;
  std::uint64_t seed = 0;
};

struct DistillResult {
  std::vector<LocalPolicy> students;    // one per node, index = owner
  std::vector<double> epoch_mean_kl;    // mean per-pair KL before each epoch's updates
  double final_mean_kl = 0.0;           // after training, over the same queries
  std::size_t backend_calls = 0;        // always 0: distillation never invokes agents
};

// Pair (i, j) with i < j is owned by student j.
DistillResult distill_train(const CentralPolicy& policy, const ParamStore& teacher,
                            const std::vector<QueryRecord>& queries, const Embedder& embedder,
                            const DistillConfig& cfg);

double mean_pair_kl(const std::vector<LocalPolicy>& students, const Matrix& h0, const PairMarginals& teacher);

// Decodes with each pair decided by its owner's local policy on initial
// features; masking and sampling match the centralized decoder.
DecodeTrace decentralized_decode(const std::vector<LocalPolicy>& students, const Matrix& h0, UniformStream& rng);

// Student checkpoints: the network arrays plus a frozen copy of the feature
// arrays, so a student directory is self-contained.
void save_students(const std::vector<LocalPolicy>& students, const ParamStore& teacher, const std::string& dir);
struct LoadedStudents {
  std::vector<LocalPolicy> students;
  ParamStore features;  // role embeddings + query projection
};
LoadedStudents load_students(const std::string& dir, std::size_t num_nodes);

}  // namespace topogen
