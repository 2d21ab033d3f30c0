#include "topogen/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "topogen/errors.hpp"

namespace topogen {

void add_decoder_params(ParamStore& store, std::size_t d) {
  store.add(decoder_params::kRelationVectors, {kNumDecisions, 2 * d});
}

Distribution pair_logits(std::span<const double> h_i, std::span<const double> h_j, const Matrix& w) {
  const std::size_t d = h_i.size();
  if (h_j.size() != d || w.cols() != 2 * d || w.rows() != kNumDecisions) {
    throw InputError("pair_logits: dimension mismatch");
  }
  Distribution z{};
  for (std::size_t r = 0; r < kNumDecisions; ++r) {
    const auto row = w.row(r);
    z[r] = dot(row.subspan(0, d), h_i) + dot(row.subspan(d, d), h_j);
  }
  return z;
}

Distribution tempered_softmax(const Distribution& logits, double tau, const std::array<bool, kNumDecisions>& allowed) {
  if (!(tau > 0.0)) throw InputError("temperature must be positive");
  double max_z = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < kNumDecisions; ++r) {
    if (std::isnan(logits[r])) throw NumericError("NaN logit");
    if (allowed[r]) max_z = std::max(max_z, logits[r] / tau);
  }
  if (!std::isfinite(max_z)) throw NumericError("non-finite logits");
  Distribution p{};
  double total = 0.0;
  for (std::size_t r = 0; r < kNumDecisions; ++r) {
    if (!allowed[r]) continue;
    p[r] = std::exp(logits[r] / tau - max_z);
    total += p[r];
  }
  for (auto& v : p) v /= total;
  return p;
}

Distribution pair_distribution(std::span<const double> h_i, std::span<const double> h_j, const Matrix& w,
                               double tau) {
  return tempered_softmax(pair_logits(h_i, h_j, w), tau);
}

bool closes_restricted_cycle(const HeteroGraph& partial, NodeId i, NodeId j) {
  return reachable(partial, j, i, RelationSet::restricted());
}

Distribution apply_mask(const Distribution& dist, const HeteroGraph& partial, NodeId i, NodeId j, bool* masked) {
  const bool hit = closes_restricted_cycle(partial, i, j);
  if (masked) *masked = hit;
  if (!hit) return dist;
  Distribution out{};
  const double keep = dist[decision_index(Relation::None)] + dist[decision_index(Relation::Feedback)];
  if (keep > 0.0) {
    out[decision_index(Relation::None)] = dist[decision_index(Relation::None)] / keep;
    out[decision_index(Relation::Feedback)] = dist[decision_index(Relation::Feedback)] / keep;
  } else {
    // Underflowed to zero; None is always admissible.
    out[decision_index(Relation::None)] = 1.0;
  }
  return out;
}

Relation sample_relation(const Distribution& dist, double u) {
  if (!(u >= 0.0 && u < 1.0)) throw InputError("sample_relation: u must lie in [0, 1)");
  double cdf = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t r = 0; r < kNumDecisions; ++r) {
    if (dist[r] <= 0.0) continue;
    cdf += dist[r];
    last_positive = r;
    if (cdf >= u) return static_cast<Relation>(r);
  }
  // Rounding left the CDF just below u.
  return static_cast<Relation>(last_positive);
}

DecodeTrace decode_pairs(std::size_t num_nodes, const PairScorer& scorer, UniformStream& rng) {
  if (num_nodes == 0) throw InputError("decode needs at least one node");
  DecodeTrace trace;
  trace.sampled_graph = HeteroGraph(num_nodes);
  trace.pairs.reserve(num_nodes * (num_nodes - 1) / 2);
  for (NodeId j = 1; j < num_nodes; ++j) {
    for (NodeId i = 0; i < j; ++i) {
      PairDecision pd;
      pd.src = i;
      pd.dst = j;
      pd.dist = apply_mask(scorer(i, j), trace.sampled_graph, i, j, &pd.masked);
      pd.chosen = sample_relation(pd.dist, rng.next());
      pd.prob = pd.dist[decision_index(pd.chosen)];
      trace.joint_log_prob += std::log(pd.prob);
      if (pd.masked) trace.masked_pairs.emplace_back(i, j);
      if (pd.chosen != Relation::None) trace.sampled_graph.add_edge(i, j, pd.chosen, pd.prob);
      trace.pairs.push_back(pd);
    }
  }
  return trace;
}

DecodeTrace decode_graph(const Matrix& H, const Matrix& w, double tau, UniformStream& rng) {
  return decode_pairs(
      H.rows(), [&](NodeId i, NodeId j) { return pair_distribution(H.row(i), H.row(j), w, tau); }, rng);
}

std::vector<DecodeTrace> decode_batch(kernels::Exec exec, const Matrix& H, const Matrix& w, double tau,
                                      std::uint64_t seed, std::size_t count) {
  // Pair distributions do not depend on earlier samples except through the
  // mask, so compute them once and share across samples.
  const std::size_t n = H.rows();
  std::vector<Distribution> table(n * n);
  for (NodeId j = 1; j < n; ++j) {
    for (NodeId i = 0; i < j; ++i) table[i * n + j] = pair_distribution(H.row(i), H.row(j), w, tau);
  }
  const PairScorer scorer = [&](NodeId i, NodeId j) { return table[i * n + j]; };

  std::vector<DecodeTrace> out(count);
  const long total = static_cast<long>(count);
  if (exec == kernels::Exec::Parallel) {
#pragma omp parallel for schedule(static)
    for (long k = 0; k < total; ++k) {
      UniformStream rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
      out[static_cast<std::size_t>(k)] = decode_pairs(n, scorer, rng);
    }
  } else {
    for (long k = 0; k < total; ++k) {
      UniformStream rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
      out[static_cast<std::size_t>(k)] = decode_pairs(n, scorer, rng);
    }
  }
  return out;
}

HeteroGraph SparsifyResult::kept_graph() const {
  HeteroGraph g(num_nodes);
  for (const auto& e : kept_edges) g.add_edge(e);
  return g;
}

std::size_t sparsify_budget(std::size_t sampled, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("alpha must lie in [0, 1]");
  if (sampled == 0) return 0;
  // The slack absorbs representation error such as (1 - 0.7) * 10 = 3.0000000000000004.
  const double raw = (1.0 - alpha) * static_cast<double>(sampled);
  const auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::clamp<std::size_t>(k, 1, sampled);
}

SparsifyResult sparsify(const HeteroGraph& sampled, double alpha) {
  const std::size_t budget = sparsify_budget(sampled.edges().size(), alpha);
  SparsifyResult res;
  res.num_nodes = sampled.num_nodes();
  res.empty = sampled.edges().empty();

  auto ranked = sampled.edges();
  std::sort(ranked.begin(), ranked.end(), [](const Edge& a, const Edge& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.src != b.src ? a.src < b.src : a.dst < b.dst;
  });
  res.kept_edges.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(budget));
  res.dropped_edges.assign(ranked.begin() + static_cast<std::ptrdiff_t>(budget), ranked.end());
  auto by_pair = [](const Edge& a, const Edge& b) { return a.src != b.src ? a.src < b.src : a.dst < b.dst; };
  std::sort(res.kept_edges.begin(), res.kept_edges.end(), by_pair);
  std::sort(res.dropped_edges.begin(), res.dropped_edges.end(), by_pair);

  std::vector<char> used(res.num_nodes, 0);
  for (const auto& e : res.kept_edges) used[e.src] = used[e.dst] = 1;
  for (NodeId v = 0; v < res.num_nodes; ++v) (used[v] ? res.kept_nodes : res.dropped_nodes).push_back(v);
  return res;
}

SparsifyResult sparsify(const DecodeTrace& trace, double alpha) { return sparsify(trace.sampled_graph, alpha); }

}  // namespace topogen
