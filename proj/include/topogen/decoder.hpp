#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "topogen/graph.hpp"
#include "topogen/kernels.hpp"
#include "topogen/numerics.hpp"
#include "topogen/rng.hpp"

namespace topogen {

// Distribution over (None, Conditioned, Feedback, Debate), in that order.
using Distribution = std::array<double, kNumDecisions>;

inline std::size_t decision_index(Relation r) { return static_cast<std::size_t>(r); }

namespace decoder_params {
inline constexpr const char* kRelationVectors = "decoder.relation";  // [4, 2d]
}

void add_decoder_params(ParamStore& store, std::size_t d);

// w_r . [h_i || h_j] for every r (before temperature).
Distribution pair_logits(std::span<const double> h_i, std::span<const double> h_j, const Matrix& relation_vectors);

// Softmax of logits / tau with max subtraction. Entries with allowed[r] false
// get probability 0.
Distribution tempered_softmax(const Distribution& logits, double tau,
                              const std::array<bool, kNumDecisions>& allowed = {true, true, true, true});

Distribution pair_distribution(std::span<const double> h_i, std::span<const double> h_j,
                               const Matrix& relation_vectors, double tau);

// Adding i -> j as Conditioned or Debate would close a cycle in the
// restricted subgraph iff j already reaches i through it.
bool closes_restricted_cycle(const HeteroGraph& partial, NodeId i, NodeId j);

// Zeroes Conditioned/Debate and renormalizes over {None, Feedback} when the
// cycle condition holds; otherwise returns `dist` unchanged.
Distribution apply_mask(const Distribution& dist, const HeteroGraph& partial, NodeId i, NodeId j,
                        bool* masked = nullptr);

// Inverse-transform sampling in the fixed category order; categories with zero
// mass are never returned.
Relation sample_relation(const Distribution& dist, double u);

struct PairDecision {
  NodeId src = 0;
  NodeId dst = 0;
  Distribution dist{};  // post-mask
  Relation chosen = Relation::None;
  double prob = 0.0;    // dist[chosen]
  bool masked = false;
};

struct DecodeTrace {
  HeteroGraph sampled_graph;
  std::vector<PairDecision> pairs;  // j = 1..N-1, i = 0..j-1
  double joint_log_prob = 0.0;
  std::vector<std::pair<NodeId, NodeId>> masked_pairs;
};

// Pre-mask relation distribution for pair (i, j).
using PairScorer = std::function<Distribution(NodeId i, NodeId j)>;

// Autoregressive decoding in the fixed pair order with dynamic masking. Edge
// orientation is always i -> j for i < j.
DecodeTrace decode_pairs(std::size_t num_nodes, const PairScorer& scorer, UniformStream& rng);

DecodeTrace decode_graph(const Matrix& H, const Matrix& relation_vectors, double tau, UniformStream& rng);

// `count` independent decodes; sample k draws from derive_seed(seed, k).
// Reference and parallel variants return identical traces.
std::vector<DecodeTrace> decode_batch(kernels::Exec exec, const Matrix& H, const Matrix& relation_vectors,
                                      double tau, std::uint64_t seed, std::size_t count);

struct SparsifyResult {
  std::size_t num_nodes = 0;
  std::vector<Edge> kept_edges;     // sorted by (src, dst)
  std::vector<NodeId> kept_nodes;   // ascending
  std::vector<Edge> dropped_edges;
  std::vector<NodeId> dropped_nodes;
  bool empty = true;                // no edge was sampled

  HeteroGraph kept_graph() const;
};

std::size_t sparsify_budget(std::size_t sampled, double alpha);

// Keeps the top max(1, ceil((1 - alpha) * |sampled|)) edges by confidence,
// ties by ascending (src, dst); kept nodes are the endpoints of kept edges.
SparsifyResult sparsify(const DecodeTrace& trace, double alpha);
SparsifyResult sparsify(const HeteroGraph& sampled, double alpha);

}  // namespace topogen
