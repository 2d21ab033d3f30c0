#include <doctest.h>

#include <atomic>
#include <cmath>

#include "oracles.hpp"
#include "topogen/backends.hpp"
#include "topogen/errors.hpp"
#include "topogen/trainer.hpp"

using namespace topogen;

namespace {

double entropy_oracle(std::initializer_list<double> counts) {
  double total = 0.0;
  for (double c : counts) total += c;
  double h = 0.0;
  for (double c : counts) {
    if (c > 0) h -= (c / total) * std::log(c / total);
  }
  return h;
}

// Mock backend that can be switched off between calls.
class SwitchableBackend final : public AgentBackend {
 public:
  Completion complete(const AgentProfile& agent, const std::vector<ChatMessage>& messages) override {
    ++calls;
    if (calls > fail_after) throw BackendError("switched off", 1);
    return inner.complete(agent, messages);
  }
  MockBackend inner{MockScript{}};
  std::size_t calls = 0;
  std::size_t fail_after = static_cast<std::size_t>(-1);
};

struct World {
  explicit World(std::size_t n, std::size_t d = 16) : prior(oracle::make_prior(n)), roster(oracle::make_roster(n)) {
    policy = std::make_unique<CentralPolicy>(prior, roster.role_indices(), PolicyShape{n, d, 32, 2});
    backend = std::make_shared<SwitchableBackend>();
    reg.add("mock", backend);
    for (int k = 0; k < 5; ++k) {
      queries.push_back({"q" + std::to_string(k), "query text " + std::to_string(k), std::nullopt});
    }
  }
  PriorGraph prior;
  Roster roster;
  std::unique_ptr<CentralPolicy> policy;
  std::shared_ptr<SwitchableBackend> backend;
  BackendRegistry reg;
  HashEmbedder embedder{32};
  std::vector<QueryRecord> queries;
};

TrainerConfig small_cfg(std::size_t budget, std::uint64_t seed) {
  TrainerConfig c;
  c.query_budget = budget;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("diversity reward") {
  HeteroGraph one(3);
  one.add_edge(0, 1, Relation::Feedback);
  one.add_edge(1, 2, Relation::Feedback);
  CHECK(diversity_reward(one) == 0.0);
  CHECK(diversity_reward(HeteroGraph(3)) == 0.0);

  HeteroGraph three(4);
  three.add_edge(0, 1, Relation::Conditioned);
  three.add_edge(1, 2, Relation::Feedback);
  three.add_edge(2, 3, Relation::Debate);
  CHECK(std::fabs(diversity_reward(three) - std::log(3.0)) <= 1e-12);

  HeteroGraph mix(5);
  mix.add_edge(0, 1, Relation::Conditioned);
  mix.add_edge(1, 2, Relation::Conditioned);
  mix.add_edge(2, 3, Relation::Feedback);
  mix.add_edge(3, 4, Relation::Debate);
  CHECK(std::fabs(diversity_reward(mix) - entropy_oracle({2, 1, 1})) <= 1e-12);
  CHECK(std::fabs(diversity_reward(mix) - 1.0397) <= 1e-4);
}

TEST_CASE("total reward") {
  CHECK(total_reward(1, 0.7, 1.0) == 1.0);
  CHECK(total_reward(0, 0.7, 1.0) == 0.0);
  CHECK(total_reward(1, 0.7, 0.0) == 0.7);
  CHECK(std::fabs(total_reward(1, std::log(3.0), 0.5) - 1.0493) <= 1e-4);
  CHECK_THROWS_AS(total_reward(1, 0.0, 1.5), InputError);
}

TEST_CASE("property: reward stays within [0, lambda + (1 - lambda) ln 3]") {
  UniformStream rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const auto g = oracle::random_topology(2 + static_cast<std::size_t>(rng.next() * 7), rng);
    const double lambda = rng.next();
    const int r_task = rng.next() < 0.5 ? 0 : 1;
    const double r = total_reward(r_task, diversity_reward(g), lambda);
    CHECK(r >= 0.0);
    CHECK(r <= lambda + (1 - lambda) * std::log(3.0) + 1e-12);
  }
}

TEST_CASE("policy entropy sums per-pair entropies") {
  DecodeTrace t;
  PairDecision u;
  u.dist = {0.25, 0.25, 0.25, 0.25};
  t.pairs = {u, u, u};
  CHECK(std::fabs(policy_entropy(t) - 3 * std::log(4.0)) <= 1e-12);
  PairDecision det;
  det.dist = {0, 0, 1, 0};
  CHECK(policy_entropy(DecodeTrace{HeteroGraph(2), {det}, 0.0, {}}) == 0.0);
  PairDecision a, b;
  a.dist = {0.5, 0.5, 0, 0};
  b.dist = {0.1, 0.2, 0.3, 0.4};
  const double want = std::log(2.0) - (0.1 * std::log(0.1) + 0.2 * std::log(0.2) + 0.3 * std::log(0.3) +
                                       0.4 * std::log(0.4));
  CHECK(std::fabs(policy_entropy(DecodeTrace{HeteroGraph(3), {a, b}, 0.0, {}}) - want) <= 1e-12);
}

TEST_CASE("temperature annealing") {
  CHECK(anneal_temperature(0, 40) == 2.0);
  CHECK(anneal_temperature(40, 40) == 0.5);
  CHECK(anneal_temperature(20, 40) == 1.25);
  CHECK(anneal_temperature(99, 40) == 0.5);
  double prev = 3.0;
  for (std::size_t s = 0; s <= 123; ++s) {
    const double t = anneal_temperature(s, 123);
    CHECK(t <= prev);
    CHECK(t >= 0.5);
    CHECK(t <= 2.0);
    prev = t;
  }
}

TEST_CASE("zero budget leaves parameters untouched") {
  World w(3);
  auto params = w.policy->init_params(1);
  const auto before = params;
  ConstantEvaluator ev(1);
  Trainer tr(*w.policy, params, w.roster, w.embedder, ev, w.reg, {}, small_cfg(0, 1));
  CHECK(tr.train(w.queries).empty());
  CHECK(params.same_values(before));
  CHECK(w.backend->calls == 0);
}

TEST_CASE("zero advantage without entropy bonus is an exact no-op") {
  World w(4);
  auto params = w.policy->init_params(2);
  const auto before = params;
  ConstantEvaluator ev(1);
  auto cfg = small_cfg(1, 3);
  cfg.reward.lambda = 1.0;
  cfg.reward.gamma = 0.0;
  Trainer tr(*w.policy, params, w.roster, w.embedder, ev, w.reg, {}, cfg);
  tr.set_state({1.0, 0, tr.total_steps(), 0});
  auto rep = tr.train(w.queries);
  REQUIRE(rep.size() == 1);
  CHECK(rep[0].reward == 1.0);
  for (const auto& [name, p] : params) {
    CHECK(p.value == before.at(name).value);
  }
  CHECK(tr.state().baseline == 1.0);
}

TEST_CASE("baseline is an exponential moving average of batch rewards") {
  World w(3);
  auto params = w.policy->init_params(4);
  ExactMatchEvaluator ev;
  auto cfg = small_cfg(6, 4);
  cfg.batch_size = 2;
  Trainer tr(*w.policy, params, w.roster, w.embedder, ev, w.reg, {}, cfg);
  CHECK(tr.total_steps() == 3);
  const auto rep = tr.train(w.queries);
  REQUIRE(rep.size() == 3);
  double b = 0.0;
  for (const auto& r : rep) {
    CHECK(r.r_task == 0);
    CHECK(r.reward == doctest::Approx(0.5 * r.r_div).epsilon(1e-12));
    b = 0.9 * b + 0.1 * r.reward;
    CHECK(r.baseline == doctest::Approx(b).epsilon(1e-12));
  }
  CHECK(rep[0].tau == 2.0);
  CHECK(rep[1].tau == 1.5);
  CHECK(tr.state().queries_done == 6);
}

TEST_CASE("training is deterministic and resumable after a backend outage") {
  World reference(4);
  auto p_ref = reference.policy->init_params(9);
  ConstantEvaluator ev(1);
  const auto cfg = small_cfg(8, 11);
  Trainer full(*reference.policy, p_ref, reference.roster, reference.embedder, ev, reference.reg, {}, cfg);
  const auto rep_ref = full.train(reference.queries);

  World again(4);
  auto p_again = again.policy->init_params(9);
  Trainer twin(*again.policy, p_again, again.roster, again.embedder, ev, again.reg, {}, cfg);
  twin.train(again.queries);
  CHECK(p_again.same_values(p_ref));

  World flaky(4);
  auto p = flaky.policy->init_params(9);
  flaky.backend->fail_after = reference.backend->calls / 2;
  Trainer tr(*flaky.policy, p, flaky.roster, flaky.embedder, ev, flaky.reg, {}, cfg);
  TrainerState halted;
  bool threw = false;
  try {
    tr.train(flaky.queries);
  } catch (const TrainingHalted& h) {
    threw = true;
    halted = h.state();
  }
  REQUIRE(threw);
  REQUIRE(halted.queries_done > 0);
  REQUIRE(halted.queries_done < 8);
  CHECK(halted.step == halted.queries_done);

  const auto state_json = nlohmann::json::parse(to_json(halted).dump());
  const auto restored = trainer_state_from_json(state_json);
  flaky.backend->fail_after = static_cast<std::size_t>(-1);
  Trainer resumed(*flaky.policy, p, flaky.roster, flaky.embedder, ev, flaky.reg, {}, cfg);
  resumed.set_state(restored);
  const auto rest = resumed.train(flaky.queries);
  CHECK(rest.size() == 8 - halted.queries_done);
  CHECK(p.same_values(p_ref));
  CHECK(to_json(rest.back()).dump() == to_json(rep_ref.back()).dump());
}

TEST_CASE("step report JSON shape") {
  StepReport r{3, 0.5, 1, 0.25, 2.0, 1.5, 0.1};
  CHECK(to_json(r).dump() ==
        R"({"step":3,"reward":0.5,"r_task":1,"r_div":0.25,"entropy":2.0,"tau":1.5,"baseline":0.1})");
}

TEST_CASE("rewarding a single debate pair drives P(debate) up") {
  PriorGraph prior{HeteroGraph(2), {"solver", "decision maker"}};
  prior.graph.add_edge(0, 1, Relation::Conditioned);
  Roster roster;
  roster.agents = {{0, "solver", "mock", "", {}}, {1, "decision maker", "mock", "", {}}};
  roster.decision_maker = 1;
  BackendRegistry reg;
  reg.add("mock", std::make_shared<MockBackend>(MockScript{}));
  HeteroGraph target(2);
  target.add_edge(0, 1, Relation::Debate);
  TargetTopologyEvaluator ev(target);
  HashEmbedder emb;
  const QueryRecord q{"q", "single pair query", std::nullopt};
  const auto q_emb = emb.embed(q.text);

  CentralPolicy policy(prior, roster.role_indices(), PolicyShape{2, 512, kQueryEmbeddingDim, 2});
  auto params = policy.init_params(1);
  auto p_debate = [&] {
    const Matrix H = policy.encode(params, q_emb);
    return pair_distribution(H.row(0), H.row(1), params.value(decoder_params::kRelationVectors),
                             0.5)[decision_index(Relation::Debate)];
  };
  const double start = p_debate();
  auto cfg = small_cfg(300, 1);
  cfg.reward.lambda = 1.0;
  Trainer tr(policy, params, roster, emb, ev, reg, {}, cfg);
  tr.train({q});
  const double end = p_debate();
  CHECK(end > start);
  CHECK(end >= 0.9);
}

TEST_CASE("entropy bonus keeps the policy more uniform under constant reward") {
  World w(3);
  ConstantEvaluator ev(1);
  auto final_entropy = [&](double gamma, std::uint64_t seed) {
    auto params = w.policy->init_params(seed);
    auto cfg = small_cfg(200, seed);
    cfg.reward.gamma = gamma;
    cfg.lr = 0.05;
    Trainer tr(*w.policy, params, w.roster, w.embedder, ev, w.reg, {}, cfg);
    tr.train(w.queries);
    double h = 0.0;
    for (const auto& q : w.queries) {
      UniformStream rng(seed);
      h += policy_entropy(w.policy->sample(params, w.embedder.embed(q.text), 0.5, rng));
    }
    return h / static_cast<double>(w.queries.size());
  };
  double with = 0.0, without = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    with += final_entropy(0.05, seed);
    without += final_entropy(0.0, seed);
  }
  CHECK(with > without);
}

TEST_CASE("invalid trainer settings") {
  World w(3);
  auto params = w.policy->init_params(1);
  ConstantEvaluator ev(0);
  auto cfg = small_cfg(1, 1);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(Trainer(*w.policy, params, w.roster, w.embedder, ev, w.reg, {}, cfg), ConfigError);
  cfg = small_cfg(1, 1);
  cfg.reward.baseline_decay = 1.0;
  CHECK_THROWS_AS(Trainer(*w.policy, params, w.roster, w.embedder, ev, w.reg, {}, cfg), ConfigError);
  cfg = small_cfg(1, 1);
  Trainer tr(*w.policy, params, w.roster, w.embedder, ev, w.reg, {}, cfg);
  CHECK_THROWS_AS(tr.train({}), InputError);
  std::vector<Episode> none;
  CHECK_THROWS_AS(tr.reinforce_step(none), InputError);
}
