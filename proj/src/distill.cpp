#include "topogen/distill.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include "topogen/errors.hpp"

namespace topogen {

double distill_loss(const Distribution& teacher, const Distribution& student) {
  double kl = 0.0;
  for (std::size_t r = 0; r < kNumDecisions; ++r) {
    if (teacher[r] <= 0.0) continue;
    kl += teacher[r] * std::log(teacher[r] / std::max(student[r], kStudentFloor));
  }
  return kl;
}

LocalPolicy::LocalPolicy(NodeId owner, std::size_t latent_dim, std::size_t hidden, std::uint64_t seed)
    : owner_(owner) {
  params_.add(kHiddenWeight, {hidden, 2 * latent_dim});
  params_.add(kHiddenBias, {hidden});
  params_.add(kOutputWeight, {kNumDecisions, hidden});
  params_.add(kOutputBias, {kNumDecisions});
  UniformStream rng(seed);
  params_.init_uniform(rng, -0.1, 0.1);
}

LocalPolicy::LocalPolicy(NodeId owner, ParamStore params) : owner_(owner), params_(std::move(params)) {
  for (const char* name : {kHiddenWeight, kHiddenBias, kOutputWeight, kOutputBias}) {
    if (!params_.contains(name)) throw InputError(std::string("local policy is missing array ") + name);
  }
}

std::size_t LocalPolicy::latent_dim() const { return params_.value(kHiddenWeight).cols() / 2; }

namespace {

struct Hidden {
  std::vector<double> input;
  std::vector<double> pre;
  std::vector<double> act;
  Distribution logits{};
};

Hidden mlp_forward(const ParamStore& p, std::span<const double> h_i, std::span<const double> h_j) {
  const Matrix& w1 = p.value(LocalPolicy::kHiddenWeight);
  const Matrix& b1 = p.value(LocalPolicy::kHiddenBias);
  const Matrix& w2 = p.value(LocalPolicy::kOutputWeight);
  const Matrix& b2 = p.value(LocalPolicy::kOutputBias);
  if (h_i.size() + h_j.size() != w1.cols()) throw InputError("local policy input width mismatch");
  Hidden h;
  h.input.assign(h_i.begin(), h_i.end());
  h.input.insert(h.input.end(), h_j.begin(), h_j.end());
  h.pre.assign(b1.flat().begin(), b1.flat().end());
  gemv_acc(w1, h.input, h.pre);
  h.act = h.pre;
  for (double& v : h.act) v = v > 0.0 ? v : 0.0;
  std::vector<double> out(b2.flat().begin(), b2.flat().end());
  gemv_acc(w2, h.act, out);
  std::copy(out.begin(), out.end(), h.logits.begin());
  return h;
}

}  // namespace

Distribution LocalPolicy::forward(const ParamStore& params, std::span<const double> h_i,
                                  std::span<const double> h_j) const {
  return tempered_softmax(mlp_forward(params, h_i, h_j).logits, 1.0);
}

Distribution LocalPolicy::forward(std::span<const double> h_i, std::span<const double> h_j) const {
  return forward(params_, h_i, h_j);
}

double LocalPolicy::accumulate_kl_gradient(ParamStore& params, std::span<const double> h_i,
                                           std::span<const double> h_j, const Distribution& teacher,
                                           double weight) const {
  const auto h = mlp_forward(params, h_i, h_j);
  const auto s = tempered_softmax(h.logits, 1.0);
  const double kl = distill_loss(teacher, s);

  // dKL/ds_r = -t_r / s_r where the clamp is inactive; softmax Jacobian to logits.
  Distribution d_s{};
  for (std::size_t r = 0; r < kNumDecisions; ++r) {
    if (teacher[r] > 0.0 && s[r] > kStudentFloor) d_s[r] = -teacher[r] / s[r];
  }
  double inner = 0.0;
  for (std::size_t r = 0; r < kNumDecisions; ++r) inner += d_s[r] * s[r];
  std::vector<double> d_z(kNumDecisions);
  for (std::size_t r = 0; r < kNumDecisions; ++r) d_z[r] = weight * s[r] * (d_s[r] - inner);

  Matrix& g_w2 = params.grad(kOutputWeight);
  Matrix& g_b2 = params.grad(kOutputBias);
  outer_acc(g_w2, d_z, h.act);
  for (std::size_t r = 0; r < kNumDecisions; ++r) g_b2.flat()[r] += d_z[r];

  std::vector<double> d_act(h.act.size(), 0.0);
  gemv_t_acc(params.value(kOutputWeight), d_z, d_act);
  for (std::size_t k = 0; k < d_act.size(); ++k) {
    if (!(h.pre[k] > 0.0)) d_act[k] = 0.0;
  }
  outer_acc(params.grad(kHiddenWeight), d_act, h.input);
  auto g_b1 = params.grad(kHiddenBias).flat();
  for (std::size_t k = 0; k < d_act.size(); ++k) g_b1[k] += d_act[k];
  return kl;
}

double DistillObjective::value(const ParamStore& params) const {
  double total = 0.0;
  for (const auto& it : items_) total += distill_loss(it.teacher, student_.forward(params, it.h_i, it.h_j));
  return total;
}

double DistillObjective::accumulate_gradient(ParamStore& params) const {
  double total = 0.0;
  for (const auto& it : items_) total += student_.accumulate_kl_gradient(params, it.h_i, it.h_j, it.teacher, 1.0);
  return total;
}

PairMarginals teacher_marginals(const CentralPolicy& policy, const ParamStore& params,
                                std::span<const double> q_emb, double tau, std::size_t samples, std::uint64_t seed,
                                kernels::Exec exec) {
  if (samples == 0) throw InputError("teacher_marginals needs S >= 1");
  const Matrix H = policy.encode(params, q_emb);
  const auto traces =
      decode_batch(exec, H, params.value(decoder_params::kRelationVectors), tau, seed, samples);
  PairMarginals m;
  m.num_nodes = H.rows();
  for (const auto& pd : traces.front().pairs) m.pairs.emplace_back(pd.src, pd.dst);
  m.dist.assign(m.pairs.size(), Distribution{});
  for (const auto& t : traces) {
    for (std::size_t k = 0; k < t.pairs.size(); ++k) {
      for (std::size_t r = 0; r < kNumDecisions; ++r) m.dist[k][r] += t.pairs[k].dist[r];
    }
  }
  for (auto& d : m.dist) {
    for (auto& v : d) v /= static_cast<double>(samples);
  }
  return m;
}

double mean_pair_kl(const std::vector<LocalPolicy>& students, const Matrix& h0, const PairMarginals& teacher) {
  if (teacher.pairs.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < teacher.pairs.size(); ++k) {
    const auto [i, j] = teacher.pairs[k];
    total += distill_loss(teacher.dist[k], students.at(j).forward(h0.row(i), h0.row(j)));
  }
  return total / static_cast<double>(teacher.pairs.size());
}

DistillResult distill_train(const CentralPolicy& policy, const ParamStore& teacher,
                            const std::vector<QueryRecord>& queries, const Embedder& embedder,
                            const DistillConfig& cfg) {
  const std::size_t n = policy.num_nodes();
  const std::size_t d = policy.shape().latent_dim;
  DistillResult res;
  for (NodeId v = 0; v < n; ++v) res.students.emplace_back(v, d, cfg.hidden, derive_seed(cfg.seed, v));
  if (cfg.query_budget == 0 || queries.empty()) return res;

  struct Prepared {
    Matrix h0;
    PairMarginals marginals;
  };
  std::vector<Prepared> data;
  for (std::size_t k = 0; k < cfg.query_budget; ++k) {
    const auto& q = queries[k % queries.size()];
    const auto emb = embedder.embed(q.text);
    data.push_back({policy.initial_features(teacher, emb),
                    teacher_marginals(policy, teacher, emb, cfg.teacher_tau, cfg.samples,
                                      derive_seed(cfg.seed ^ 0x5eedULL, k))});
  }

  auto mean_kl = [&] {
    double total = 0.0;
    for (const auto& p : data) total += mean_pair_kl(res.students, p.h0, p.marginals);
    return total / static_cast<double>(data.size());
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    res.epoch_mean_kl.push_back(mean_kl());
    for (const auto& p : data) {
      std::map<NodeId, std::vector<DistillObjective::Item>> by_owner;
      for (std::size_t k = 0; k < p.marginals.pairs.size(); ++k) {
        const auto [i, j] = p.marginals.pairs[k];
        by_owner[j].push_back({p.h0.row(i), p.h0.row(j), p.marginals.dist[k]});
      }
      for (auto& [owner, items] : by_owner) {
        auto& student = res.students[owner];
        DistillObjective objective(student, std::move(items));
        backward(objective, student.params());
        sgd_update(student.params(), cfg.lr);
      }
    }
  }
  res.final_mean_kl = mean_kl();
  return res;
}

DecodeTrace decentralized_decode(const std::vector<LocalPolicy>& students, const Matrix& h0, UniformStream& rng) {
  if (students.size() != h0.rows()) {
    throw ConfigError("decentralized decode needs one local policy per node (" + std::to_string(h0.rows()) +
                      "), got " + std::to_string(students.size()));
  }
  for (NodeId v = 0; v < students.size(); ++v) {
    if (students[v].owner() != v) throw ConfigError("local policy " + std::to_string(v) + " has the wrong owner");
  }
  return decode_pairs(
      h0.rows(), [&](NodeId i, NodeId j) { return students[j].forward(h0.row(i), h0.row(j)); }, rng);
}

namespace {
constexpr const char* kFrozenRoles = "frozen.role_embeddings";
constexpr const char* kFrozenProjection = "frozen.query_projection";
}  // namespace

void save_students(const std::vector<LocalPolicy>& students, const ParamStore& teacher, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& s : students) {
    ParamStore out = s.params();
    for (auto [src, dst] : {std::pair{feature_params::kRoleEmbeddings, kFrozenRoles},
                            std::pair{feature_params::kQueryProjection, kFrozenProjection}}) {
      const auto& p = teacher.at(src);
      out.add(dst, p.shape).value = p.value;
    }
    save_param_store(out, (std::filesystem::path(dir) / ("local_policy_" + std::to_string(s.owner()) + ".json")).string());
  }
}

LoadedStudents load_students(const std::string& dir, std::size_t num_nodes) {
  LoadedStudents out;
  for (NodeId v = 0; v < num_nodes; ++v) {
    const auto path = std::filesystem::path(dir) / ("local_policy_" + std::to_string(v) + ".json");
    if (!std::filesystem::exists(path)) throw ConfigError("missing local policy for node " + std::to_string(v));
    auto store = load_param_store(path.string());
    ParamStore net;
    for (const auto& [name, p] : store) {
      if (name == kFrozenRoles || name == kFrozenProjection) {
        if (v == 0) {
          const char* dst = name == kFrozenRoles ? feature_params::kRoleEmbeddings : feature_params::kQueryProjection;
          out.features.add(dst, p.shape).value = p.value;
        }
      } else {
        net.add(name, p.shape).value = p.value;
      }
    }
    net.set_step(store.step());
    out.students.emplace_back(v, std::move(net));
  }
  return out;
}

}  // namespace topogen
