#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "topogen/decoder.hpp"
#include "topogen/encoder.hpp"
#include "topogen/features.hpp"
#include "topogen/graph.hpp"
#include "topogen/numerics.hpp"

namespace topogen {

struct PolicyShape {
  std::size_t num_roles = 0;
  std::size_t latent_dim = 64;
  std::size_t query_dim = kQueryEmbeddingDim;
  std::size_t num_layers = 2;
};

// Centralized topology policy: initial features -> R-GCN over the prior graph
// -> autoregressive typed-edge decoder. Parameters live in a ParamStore owned
// by the caller; this class only holds structure.
class CentralPolicy {
 public:
  CentralPolicy(const PriorGraph& prior, std::vector<std::size_t> node_roles, PolicyShape shape,
                kernels::Exec exec = kernels::Exec::Parallel);

  // Allocates every array and initializes it uniformly in [-0.1, 0.1].
  ParamStore init_params(std::uint64_t seed) const;

  std::size_t num_nodes() const { return roles_.size(); }
  const PolicyShape& shape() const { return shape_; }
  std::span<const std::size_t> node_roles() const { return roles_; }

  Matrix initial_features(const ParamStore& params, std::span<const double> q_emb) const;
  Matrix encode(const ParamStore& params, std::span<const double> q_emb) const;
  DecodeTrace sample(const ParamStore& params, std::span<const double> q_emb, double tau, UniformStream& rng) const;

  struct TraceScore {
    double log_prob = 0.0;  // sum of log post-mask probabilities of the recorded choices
    double entropy = 0.0;   // sum of per-pair post-mask entropies
  };

  // Re-evaluates a recorded trace (choices and mask decisions held fixed)
  // under `params`.
  TraceScore score(const ParamStore& params, std::span<const double> q_emb, const DecodeTrace& trace,
                   double tau) const;

  // Adds the gradient of  log_prob_weight * log_prob + entropy_weight * entropy
  // into params' gradient accumulators.
  TraceScore accumulate_gradient(ParamStore& params, std::span<const double> q_emb, const DecodeTrace& trace,
                                 double tau, double log_prob_weight, double entropy_weight) const;

 private:
  RgcnEncoder encoder_;
  std::vector<std::size_t> roles_;
  PolicyShape shape_;
};

// Shannon entropy (natural log), ignoring zero entries.
double entropy(const Distribution& p);

}  // namespace topogen
