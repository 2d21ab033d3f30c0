#include "topogen/policy.hpp"

#include <cmath>

#include "topogen/errors.hpp"

namespace topogen {

double entropy(const Distribution& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

CentralPolicy::CentralPolicy(const PriorGraph& prior, std::vector<std::size_t> node_roles, PolicyShape shape,
                             kernels::Exec exec)
    : encoder_(prior, shape.num_layers, exec), roles_(std::move(node_roles)), shape_(shape) {
  if (roles_.size() != prior.graph.num_nodes()) {
    throw InputError("roster size " + std::to_string(roles_.size()) + " does not match prior graph size " +
                     std::to_string(prior.graph.num_nodes()));
  }
  for (auto r : roles_) {
    if (r >= shape_.num_roles) throw InputError("node role index out of range");
  }
}

ParamStore CentralPolicy::init_params(std::uint64_t seed) const {
  ParamStore store;
  add_feature_params(store, shape_.num_roles, shape_.latent_dim, shape_.query_dim);
  RgcnEncoder::add_params(store, shape_.latent_dim, shape_.num_layers);
  add_decoder_params(store, shape_.latent_dim);
  UniformStream rng(seed);
  store.init_uniform(rng, -0.1, 0.1);
  return store;
}

Matrix CentralPolicy::initial_features(const ParamStore& params, std::span<const double> q_emb) const {
  return init_node_features(roles_, q_emb, params);
}

Matrix CentralPolicy::encode(const ParamStore& params, std::span<const double> q_emb) const {
  return encoder_.encode(initial_features(params, q_emb), params);
}

DecodeTrace CentralPolicy::sample(const ParamStore& params, std::span<const double> q_emb, double tau,
                                  UniformStream& rng) const {
  return decode_graph(encode(params, q_emb), params.value(decoder_params::kRelationVectors), tau, rng);
}

namespace {

std::array<bool, kNumDecisions> allowed_for(const PairDecision& pd) {
  if (!pd.masked) return {true, true, true, true};
  return {true, false, true, false};
}

void check_trace(const DecodeTrace& trace, std::size_t n) {
  if (trace.pairs.size() != n * (n - 1) / 2) throw InputError("trace does not match the roster size");
}

}  // namespace

CentralPolicy::TraceScore CentralPolicy::score(const ParamStore& params, std::span<const double> q_emb,
                                               const DecodeTrace& trace, double tau) const {
  check_trace(trace, num_nodes());
  const Matrix H = encode(params, q_emb);
  const Matrix& w = params.value(decoder_params::kRelationVectors);
  TraceScore s;
  for (const auto& pd : trace.pairs) {
    const auto q = tempered_softmax(pair_logits(H.row(pd.src), H.row(pd.dst), w), tau, allowed_for(pd));
    s.log_prob += std::log(q[decision_index(pd.chosen)]);
    s.entropy += entropy(q);
  }
  return s;
}

CentralPolicy::TraceScore CentralPolicy::accumulate_gradient(ParamStore& params, std::span<const double> q_emb,
                                                             const DecodeTrace& trace, double tau,
                                                             double log_prob_weight, double entropy_weight) const {
  check_trace(trace, num_nodes());
  const std::size_t d = shape_.latent_dim;
  const Matrix h0 = initial_features(params, q_emb);
  const auto tape = encoder_.forward(h0, params);
  const Matrix& H = tape.output;
  const Matrix& w = params.value(decoder_params::kRelationVectors);
  Matrix& g_w = params.grad(decoder_params::kRelationVectors);
  Matrix d_H(H.rows(), H.cols());

  TraceScore s;
  std::vector<double> pair_in(2 * d);
  for (const auto& pd : trace.pairs) {
    const auto allowed = allowed_for(pd);
    const auto q = tempered_softmax(pair_logits(H.row(pd.src), H.row(pd.dst), w), tau, allowed);
    const std::size_t c = decision_index(pd.chosen);
    const double h = entropy(q);
    s.log_prob += std::log(q[c]);
    s.entropy += h;

    // d/dz of the weighted objective, z being the untempered logits.
    Distribution g_z{};
    for (std::size_t k = 0; k < kNumDecisions; ++k) {
      if (!allowed[k]) continue;
      double g = log_prob_weight * ((k == c ? 1.0 : 0.0) - q[k]);
      if (q[k] > 0.0) g -= entropy_weight * q[k] * (std::log(q[k]) + h);
      g_z[k] = g / tau;
    }

    const auto hi = H.row(pd.src);
    const auto hj = H.row(pd.dst);
    std::copy(hi.begin(), hi.end(), pair_in.begin());
    std::copy(hj.begin(), hj.end(), pair_in.begin() + static_cast<std::ptrdiff_t>(d));
    auto dhi = d_H.row(pd.src);
    auto dhj = d_H.row(pd.dst);
    for (std::size_t k = 0; k < kNumDecisions; ++k) {
      if (g_z[k] == 0.0) continue;
      auto gw = g_w.row(k);
      const auto wk = w.row(k);
      for (std::size_t m = 0; m < 2 * d; ++m) gw[m] += g_z[k] * pair_in[m];
      for (std::size_t m = 0; m < d; ++m) {
        dhi[m] += g_z[k] * wk[m];
        dhj[m] += g_z[k] * wk[d + m];
      }
    }
  }

  const Matrix d_h0 = encoder_.backward(tape, d_H, params);
  init_node_features_backward(roles_, q_emb, d_h0, params);
  return s;
}

}  // namespace topogen
