#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "topogen/distill.hpp"
#include "topogen/errors.hpp"
#include "topogen/numerics.hpp"
#include "topogen/policy.hpp"
#include "topogen/trainer.hpp"

using namespace topogen;

namespace {

struct HalfSquaredNorm final : Objective {
  double value(const ParamStore& p) const override {
    double s = 0.0;
    for (double v : p.value("w").flat()) s += 0.5 * v * v;
    return s;
  }
  double accumulate_gradient(ParamStore& p) const override {
    auto& prm = p.at("w");
    for (std::size_t k = 0; k < prm.value.size(); ++k) prm.grad.flat()[k] += prm.value.flat()[k];
    return value(p);
  }
};

struct NanObjective final : Objective {
  double value(const ParamStore&) const override { return 0.0; }
  double accumulate_gradient(ParamStore& p) const override {
    p.grad("b").flat()[0] = std::nan("");
    return 0.0;
  }
};

std::vector<double> random_vec(std::size_t n, UniformStream& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1, 1);
  return v;
}

}  // namespace

TEST_CASE("quadratic loss gradient equals the weights; untouched arrays get zero") {
  ParamStore p;
  p.add("w", {2, 3});
  p.add("z", {4});
  UniformStream rng(1);
  p.init_uniform(rng, -1, 1);
  backward(HalfSquaredNorm{}, p);
  CHECK(p.grad("w") == p.value("w"));
  for (double g : p.grad("z").flat()) CHECK(g == 0.0);
}

TEST_CASE("sgd step") {
  ParamStore p;
  p.add("a", {1}).value.flat()[0] = 1.0;
  p.grad("a").flat()[0] = 2.0;
  p.add("b", {1}).value.flat()[0] = 3.0;
  sgd_update(p, 0.01);
  CHECK(p.value("a").flat()[0] == doctest::Approx(0.98).epsilon(1e-15));
  CHECK(p.value("b").flat()[0] == 3.0);
  CHECK_THROWS_AS(sgd_update(p, 0.0), InputError);
}

TEST_CASE("non-finite gradients name the parameter") {
  ParamStore p;
  p.add("a", {2});
  p.add("b", {2});
  try {
    backward(NanObjective{}, p);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("'b'") != std::string::npos);
  }
}

TEST_CASE("checkpoint schema and round trip") {
  ParamStore p;
  p.add("x", {2, 2});
  p.add("v", {3});
  UniformStream rng(2);
  p.init_uniform(rng, -0.1, 0.1);
  p.set_step(12);
  const auto j = to_json(p);
  CHECK(j["version"] == 1);
  CHECK(j["step"] == 12);
  CHECK(j["arrays"]["x"]["shape"] == nlohmann::json::array({2, 2}));
  CHECK(j["arrays"]["v"]["data"].size() == 3);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  CHECK(keys == std::vector<std::string>{"version", "arrays", "step"});

  const auto path = (std::filesystem::temp_directory_path() / "topogen_ckpt_test.json").string();
  save_param_store(p, path);
  const ParamStore q = load_param_store(path);
  CHECK(q.same_values(p));
  CHECK(q.step() == 12);
  CHECK(to_json(q).dump() == j.dump());

  CHECK_THROWS_AS(param_store_from_json(nlohmann::json::parse(R"({"version":2,"arrays":{},"step":0})")), InputError);
  CHECK_THROWS_AS(param_store_from_json(
                      nlohmann::json::parse(R"({"version":1,"arrays":{"a":{"shape":[2],"data":[1]}},"step":0})")),
                  InputError);
  CHECK_THROWS_AS(load_param_store("/nonexistent/ckpt.json"), InputError);
}

TEST_CASE("initialization is seeded and within [-0.1, 0.1]") {
  const auto prior = oracle::make_prior(3);
  CentralPolicy pol(prior, {0, 1, 2}, PolicyShape{3, 4, 8, 2});
  const ParamStore a = pol.init_params(5), b = pol.init_params(5), c = pol.init_params(6);
  CHECK(a.same_values(b));
  CHECK_FALSE(a.same_values(c));
  for (const auto& [name, prm] : a)
    for (double v : prm.value.flat()) CHECK((v >= -0.1 && v <= 0.1));
}

TEST_CASE("REINFORCE surrogate gradient matches finite differences") {
  UniformStream rng(41);
  const auto prior = oracle::make_prior(4);
  CentralPolicy pol(prior, {0, 1, 2, 1}, PolicyShape{3, 4, 12, 2}, kernels::Exec::Reference);
  ParamStore params = pol.init_params(3);
  // Larger weights than the default init so the rectifier and softmax are exercised off their flat regions.
  for (auto& [name, prm] : params)
    for (double& v : prm.value.flat()) v *= 6.0;
  REQUIRE(params.num_scalars() <= 1000);

  std::vector<std::vector<double>> queries;
  std::vector<DecodeTrace> traces;
  for (int k = 0; k < 3; ++k) {
    queries.push_back(random_vec(12, rng));
    traces.push_back(pol.sample(params, queries.back(), 0.9, rng));
  }
  // A masked pair restricts the softmax to {None, Feedback}.
  for (auto& pd : traces[1].pairs) {
    if (pd.chosen == Relation::None || pd.chosen == Relation::Feedback) {
      pd.masked = true;
      break;
    }
  }
  std::vector<ReinforceObjective::Item> items;
  const std::array<double, 3> adv = {0.7, -0.4, 1.3};
  for (int k = 0; k < 3; ++k) items.push_back({queries[k], &traces[k], 0.9, adv[k]});
  ReinforceObjective obj(pol, items, 0.05);
  const auto rep = oracle::finite_difference_check(obj, params, 300, 8);
  CHECK(rep.checked == 300);
  CHECK_MESSAGE(rep.max_rel_error <= 1e-4, rep.worst << " " << rep.max_rel_error);
}

TEST_CASE("two-node surrogate gradient matches finite differences") {
  UniformStream rng(2);
  PriorGraph prior{HeteroGraph(2), {"a", "b"}};
  prior.graph.add_edge(0, 1, Relation::Conditioned);
  CentralPolicy pol(prior, {0, 1}, PolicyShape{2, 3, 5, 1}, kernels::Exec::Reference);
  ParamStore params = pol.init_params(1);
  for (auto& [name, prm] : params)
    for (double& v : prm.value.flat()) v *= 10.0;
  const auto q = random_vec(5, rng);
  const auto tr = pol.sample(params, q, 1.0, rng);
  ReinforceObjective obj(pol, {{q, &tr, 1.0, 1.0}}, 0.01);
  const auto rep = oracle::finite_difference_check(obj, params, 150, 3);
  CHECK_MESSAGE(rep.max_rel_error <= 1e-4, rep.worst);
}

TEST_CASE("distillation KL gradient matches finite differences") {
  UniformStream rng(13);
  LocalPolicy student(1, 4, 16, 9);
  auto& p = student.params();
  for (auto& [name, prm] : p)
    for (double& v : prm.value.flat()) v *= 8.0;
  REQUIRE(p.num_scalars() <= 1000);
  std::vector<std::vector<double>> feats;
  for (int k = 0; k < 10; ++k) feats.push_back(random_vec(4, rng));
  std::vector<DistillObjective::Item> items;
  for (int k = 0; k < 5; ++k) {
    Distribution t{};
    double s = 0.0;
    for (auto& v : t) s += (v = rng.next() + 0.05);
    for (auto& v : t) v /= s;
    if (k == 4) t = {0.5, 0.0, 0.5, 0.0};
    items.push_back({feats[2 * k], feats[2 * k + 1], t});
  }
  DistillObjective obj(student, items);
  const auto rep = oracle::finite_difference_check(obj, p, 200, 4);
  CHECK(rep.checked == 200);
  CHECK_MESSAGE(rep.max_rel_error <= 1e-4, rep.worst);
}

TEST_CASE("gradients are bitwise deterministic") {
  UniformStream rng(3);
  const auto prior = oracle::make_prior(3);
  CentralPolicy pol(prior, {0, 1, 2}, PolicyShape{3, 4, 6, 2});
  ParamStore a = pol.init_params(2), b = pol.init_params(2);
  const auto q = random_vec(6, rng);
  const auto tr = pol.sample(a, q, 1.0, rng);
  ReinforceObjective obj(pol, {{q, &tr, 1.0, 0.5}}, 0.01);
  backward(obj, a);
  backward(obj, b);
  for (const auto& name : a.names()) CHECK(a.at(name).grad == b.at(name).grad);
}
