#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>

#include "oracles.hpp"
#include "topogen/distill.hpp"
#include "topogen/errors.hpp"
#include "topogen/scheduler.hpp"

using namespace topogen;

namespace {

struct Teacher {
  explicit Teacher(std::size_t n, std::size_t d = 16)
      : prior(oracle::make_prior(n)),
        roster(oracle::make_roster(n)),
        policy(prior, roster.role_indices(), PolicyShape{n, d, 32, 2}),
        params(policy.init_params(3)) {
    // Sharpen the relation vectors so the marginals are far from uniform.
    for (double& v : params.value(decoder_params::kRelationVectors).flat()) v *= 30.0;
    for (int k = 0; k < 4; ++k) {
      queries.push_back({"q" + std::to_string(k), "distill query " + std::to_string(k), std::nullopt});
    }
  }
  PriorGraph prior;
  Roster roster;
  CentralPolicy policy;
  ParamStore params;
  HashEmbedder embedder{32};
  std::vector<QueryRecord> queries;
};

// Exact per-pair marginals of the post-mask conditionals, by enumerating every
// prefix of the autoregressive chain.
std::vector<Distribution> enumerate_marginals(const Matrix& H, const Matrix& rv, double tau) {
  const std::size_t n = H.rows();
  std::vector<std::pair<NodeId, NodeId>> order;
  for (NodeId j = 1; j < n; ++j) {
    for (NodeId i = 0; i < j; ++i) order.emplace_back(i, j);
  }
  std::vector<Distribution> out(order.size(), Distribution{});
  std::function<void(std::size_t, HeteroGraph&, double)> walk = [&](std::size_t k, HeteroGraph& g, double p) {
    if (k == order.size()) return;
    const auto [i, j] = order[k];
    const auto dist = apply_mask(pair_distribution(H.row(i), H.row(j), rv, tau), g, i, j);
    for (std::size_t r = 0; r < kNumDecisions; ++r) {
      out[k][r] += p * dist[r];
      if (dist[r] == 0.0) continue;
      HeteroGraph next = g;
      if (r != 0) next.add_edge(i, j, static_cast<Relation>(r));
      walk(k + 1, next, p * dist[r]);
    }
  };
  HeteroGraph g(n);
  walk(0, g, 1.0);
  return out;
}

}  // namespace

TEST_CASE("KL examples") {
  const Distribution u{0.25, 0.25, 0.25, 0.25};
  CHECK(distill_loss(u, u) == 0.0);
  const Distribution t{0.7, 0.1, 0.1, 0.1};
  const double oracle = 0.7 * std::log(0.7 / 0.25) + 3 * 0.1 * std::log(0.1 / 0.25);
  CHECK(std::fabs(distill_loss(t, u) - oracle) <= 1e-12);
  CHECK(std::fabs(distill_loss(t, u) - 0.4458) <= 1e-3);
  const double clamped = distill_loss({1, 0, 0, 0}, {0, 1, 0, 0});
  CHECK(std::isfinite(clamped));
  CHECK(std::fabs(clamped - std::log(1.0 / kStudentFloor)) <= 1e-9);
}

TEST_CASE("property: KL is non-negative and zero only on equal inputs") {
  UniformStream rng(8);
  auto random_dist = [&] {
    Distribution d{};
    double s = 0.0;
    for (auto& v : d) s += (v = rng.next() < 0.2 ? 0.0 : rng.next());
    if (s == 0.0) d[0] = s = 1.0;
    for (auto& v : d) v /= s;
    return d;
  };
  for (int trial = 0; trial < 2000; ++trial) {
    const auto a = random_dist();
    const auto b = random_dist();
    CHECK(distill_loss(a, b) >= -1e-15);
    CHECK(std::fabs(distill_loss(a, a)) <= 1e-15);
  }
}

TEST_CASE("teacher marginals") {
  Teacher t(3);
  const auto q = t.embedder.embed("marginal query");
  const Matrix H = t.policy.encode(t.params, q);
  const auto& rv = t.params.value(decoder_params::kRelationVectors);

  const auto one = teacher_marginals(t.policy, t.params, q, 0.5, 1, 17);
  UniformStream rng(derive_seed(17, 0));
  const auto trace = decode_graph(H, rv, 0.5, rng);
  REQUIRE(one.pairs.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(one.dist[k] == trace.pairs[k].dist);

  const auto many = teacher_marginals(t.policy, t.params, q, 0.5, 256, 17);
  const auto exact = enumerate_marginals(H, rv, 0.5);
  for (std::size_t k = 0; k < many.dist.size(); ++k) {
    double s = 0.0;
    for (double v : many.dist[k]) s += v;
    CHECK(std::fabs(s - 1.0) <= 1e-9);
    CHECK(oracle::total_variation(many.dist[k], exact[k]) <= 0.02);
  }

  const auto cold = teacher_marginals(t.policy, t.params, q, 1e-3, 16, 4);
  UniformStream greedy_rng(1);
  const auto greedy = decode_graph(H, rv, 1e-3, greedy_rng);
  for (std::size_t k = 0; k < cold.dist.size(); ++k) {
    CHECK(oracle::total_variation(cold.dist[k], greedy.pairs[k].dist) <= 1e-12);
  }

  CHECK_THROWS_AS(teacher_marginals(t.policy, t.params, q, 0.5, 0, 1), InputError);
  CHECK(teacher_marginals(t.policy, t.params, q, 0.5, 32, 9, kernels::Exec::Reference).dist ==
        teacher_marginals(t.policy, t.params, q, 0.5, 32, 9, kernels::Exec::Parallel).dist);
}

TEST_CASE("zero budget returns the initial students and never calls agents") {
  Teacher t(3);
  DistillConfig cfg;
  cfg.query_budget = 0;
  cfg.hidden = 8;
  cfg.seed = 5;
  const auto res = distill_train(t.policy, t.params, t.queries, t.embedder, cfg);
  REQUIRE(res.students.size() == 3);
  for (NodeId v = 0; v < 3; ++v) {
    CHECK(res.students[v].owner() == v);
    CHECK(res.students[v].params().same_values(LocalPolicy(v, 16, 8, derive_seed(5, v)).params()));
  }
  CHECK(res.epoch_mean_kl.empty());
  CHECK(res.backend_calls == 0);
}

TEST_CASE("distillation lowers KL with a non-increasing moving average") {
  Teacher t(4);
  DistillConfig cfg;
  cfg.query_budget = 8;
  cfg.epochs = 120;
  cfg.hidden = 16;
  cfg.lr = 0.05;
  cfg.seed = 2;
  const auto res = distill_train(t.policy, t.params, t.queries, t.embedder, cfg);
  REQUIRE(res.epoch_mean_kl.size() == 120);
  CHECK(res.final_mean_kl < 0.5 * res.epoch_mean_kl.front());
  double prev = INFINITY;
  for (std::size_t e = 0; e + 10 <= res.epoch_mean_kl.size(); ++e) {
    double avg = 0.0;
    for (std::size_t k = e; k < e + 10; ++k) avg += res.epoch_mean_kl[k];
    avg /= 10.0;
    CHECK(avg <= prev + 1e-12);
    prev = avg;
  }
  CHECK(res.backend_calls == 0);
}

TEST_CASE("decentralized decoding") {
  Teacher t(4);
  const auto q = t.embedder.embed("decentral");
  const Matrix h0 = t.policy.initial_features(t.params, q);
  std::vector<LocalPolicy> students;
  for (NodeId v = 0; v < 4; ++v) students.emplace_back(v, 16, 8, v + 1);

  UniformStream a(3), b(3);
  const auto ta = decentralized_decode(students, h0, a);
  const auto tb = decentralized_decode(students, h0, b);
  CHECK(ta.sampled_graph.sorted_edges() == tb.sampled_graph.sorted_edges());
  CHECK(ta.joint_log_prob == tb.joint_log_prob);
  for (const auto& pd : ta.pairs) CHECK(pd.dist == students[pd.dst].forward(h0.row(pd.src), h0.row(pd.dst)));

  UniformStream rng(12);
  for (int k = 0; k < 2000; ++k) CHECK(validate(decentralized_decode(students, h0, rng).sampled_graph).empty());

  auto silent = students;
  for (auto& s : silent) {
    for (auto& [_, p] : s.params()) std::fill(p.value.flat().begin(), p.value.flat().end(), 0.0);
    s.params().value(LocalPolicy::kOutputBias).flat()[0] = 100.0;
  }
  const auto none = decentralized_decode(silent, h0, rng);
  CHECK(none.sampled_graph.edges().empty());
  const auto sparse = sparsify(none, 0.7);
  CHECK(sparse.empty);
  CHECK(build_plan(sparse.kept_graph(), sparse.kept_nodes, 3).fallback);

  auto missing = students;
  missing.pop_back();
  CHECK_THROWS_AS(decentralized_decode(missing, h0, rng), ConfigError);
  std::swap(students[0], students[1]);
  CHECK_THROWS_AS(decentralized_decode(students, h0, rng), ConfigError);
}

TEST_CASE("student checkpoints round trip with frozen features") {
  Teacher t(3);
  std::vector<LocalPolicy> students;
  for (NodeId v = 0; v < 3; ++v) students.emplace_back(v, 16, 8, 40 + v);
  const auto dir = std::filesystem::temp_directory_path() / "topogen_students_test";
  std::filesystem::remove_all(dir);
  save_students(students, t.params, dir.string());
  const auto loaded = load_students(dir.string(), 3);
  REQUIRE(loaded.students.size() == 3);
  for (NodeId v = 0; v < 3; ++v) {
    CHECK(loaded.students[v].owner() == v);
    CHECK(loaded.students[v].params().same_values(students[v].params()));
  }
  const auto q = t.embedder.embed("frozen");
  CHECK(t.policy.initial_features(loaded.features, q) == t.policy.initial_features(t.params, q));
  CHECK_THROWS_AS(load_students(dir.string(), 4), ConfigError);
  std::filesystem::remove_all(dir);
}
