#include <doctest.h>

#include "oracles.hpp"
#include "topogen/encoder.hpp"
#include "topogen/errors.hpp"
#include "topogen/kernels.hpp"

using namespace topogen;

namespace {

ParamStore encoder_params(std::size_t d, std::size_t layers, std::uint64_t seed) {
  ParamStore p;
  RgcnEncoder::add_params(p, d, layers);
  UniformStream rng(seed);
  p.init_uniform(rng, -0.5, 0.5);
  return p;
}

Matrix random_matrix(std::size_t r, std::size_t c, UniformStream& rng) {
  Matrix m(r, c);
  for (double& v : m.flat()) v = rng.uniform(-1, 1);
  return m;
}

PriorGraph random_prior(std::size_t n, UniformStream& rng) {
  PriorGraph p{oracle::random_topology(n, rng, 0.5), std::vector<std::string>(n, "r")};
  return p;
}

// Sum of c .* encode(h0): a linear probe of the encoder output.
struct ProbeObjective final : Objective {
  const RgcnEncoder& enc;
  Matrix h0, c;
  ProbeObjective(const RgcnEncoder& e, Matrix h, Matrix w) : enc(e), h0(std::move(h)), c(std::move(w)) {}
  double value(const ParamStore& p) const override {
    const Matrix out = enc.encode(h0, p);
    double s = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k) s += c.flat()[k] * out.flat()[k];
    return s;
  }
  double accumulate_gradient(ParamStore& p) const override {
    const auto tape = enc.forward(h0, p);
    enc.backward(tape, c, p);
    double s = 0.0;
    for (std::size_t k = 0; k < tape.output.size(); ++k) s += c.flat()[k] * tape.output.flat()[k];
    return s;
  }
};

}  // namespace

TEST_CASE("zero weights give zero output") {
  UniformStream rng(1);
  PriorGraph prior = oracle::make_prior(4);
  ParamStore p;
  RgcnEncoder::add_params(p, 3, 2);
  const Matrix out = RgcnEncoder(prior, 2).encode(random_matrix(4, 3, rng), p);
  for (double v : out.flat()) CHECK(v == 0.0);
}

TEST_CASE("single node, one layer: output is W0 h") {
  PriorGraph prior{HeteroGraph(1), {"solo"}};
  ParamStore p;
  RgcnEncoder::add_params(p, 2, 1);
  auto& w0 = p.value(RgcnEncoder::self_weight_name(0));
  w0(0, 0) = 2.0;
  w0(0, 1) = -1.0;
  w0(1, 0) = 0.5;
  Matrix h(1, 2);
  h(0, 0) = 3.0;
  h(0, 1) = 4.0;
  const Matrix out = RgcnEncoder(prior, 1).encode(h, p);
  CHECK(out(0, 0) == 2.0);
  CHECK(out(0, 1) == 1.5);
}

TEST_CASE("three nodes, one conditioned edge: hand-computed two-layer output") {
  PriorGraph prior{HeteroGraph(3), {"a", "b", "c"}};
  prior.graph.add_edge(0, 1, Relation::Conditioned);
  ParamStore p;
  RgcnEncoder::add_params(p, 2, 2);
  auto& s0 = p.value(RgcnEncoder::self_weight_name(0));
  s0(0, 0) = 1;
  s0(0, 1) = 2;
  s0(1, 1) = 1;
  auto& c0 = p.value(RgcnEncoder::relation_weight_name(0, Relation::Conditioned));
  c0(0, 1) = 1;
  c0(1, 0) = 1;
  auto& s1 = p.value(RgcnEncoder::self_weight_name(1));
  s1(0, 0) = 1;
  s1(1, 1) = -1;
  auto& c1 = p.value(RgcnEncoder::relation_weight_name(1, Relation::Conditioned));
  c1(0, 0) = -1;
  c1(1, 1) = -1;
  Matrix h(3, 2);
  h(0, 0) = 1;
  h(1, 1) = 1;
  h(2, 0) = 2;
  h(2, 1) = -2;
  // Layer 1 pre: n0 = (1, 0); n1 = C0 h0 + S0 h1 = (0, 1) + (2, 1); n2 = (2 - 4, -2) -> relu (0, 0).
  // Layer 2: n0 = (1, 0); n1 = -h0' + S1 h1' = (-1, 0) + (2, -2) = (1, -2); n2 = (0, 0).
  const Matrix out = RgcnEncoder(prior, 2).encode(h, p);
  CHECK(out(0, 0) == 1.0);
  CHECK(out(0, 1) == 0.0);
  CHECK(out(1, 0) == 1.0);
  CHECK(out(1, 1) == -2.0);
  CHECK(out(2, 0) == 0.0);
  CHECK(out(2, 1) == 0.0);
}

TEST_CASE("input shape errors") {
  PriorGraph prior = oracle::make_prior(3);
  ParamStore p;
  RgcnEncoder::add_params(p, 4, 2);
  CHECK_THROWS_AS(RgcnEncoder(prior, 2).encode(Matrix(2, 4), p), InputError);
  CHECK_THROWS_AS(RgcnEncoder(prior, 2).encode(Matrix(3, 5), p), InputError);
  CHECK_THROWS_AS(RgcnEncoder(prior, 0), InputError);
}

TEST_CASE("property: permutation equivariance") {
  UniformStream rng(11);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.next() * 6);
    PriorGraph prior = random_prior(n, rng);
    std::vector<NodeId> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.next() * i)]);
    PriorGraph permuted{HeteroGraph(n), prior.roles};
    for (const auto& e : prior.graph.sorted_edges()) permuted.graph.add_edge(perm[e.src], perm[e.dst], e.relation);
    const ParamStore p = encoder_params(5, 2, t);
    const Matrix h = random_matrix(n, 5, rng);
    Matrix hp(n, 5);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < 5; ++k) hp(perm[i], k) = h(i, k);
    const Matrix a = RgcnEncoder(prior, 2).encode(h, p);
    const Matrix b = RgcnEncoder(permuted, 2).encode(hp, p);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < 5; ++k) CHECK(b(perm[i], k) == doctest::Approx(a(i, k)).epsilon(1e-12));
  }
}

TEST_CASE("neighbor mean: two identical neighbors aggregate like one") {
  PriorGraph one{HeteroGraph(3), {"a", "b", "c"}};
  one.graph.add_edge(0, 2, Relation::Debate);
  PriorGraph two = one;
  two.graph.add_edge(1, 2, Relation::Debate);
  const ParamStore p = encoder_params(4, 1, 3);
  UniformStream rng(3);
  Matrix h = random_matrix(3, 4, rng);
  for (std::size_t k = 0; k < 4; ++k) h(1, k) = h(0, k);
  const Matrix a = RgcnEncoder(one, 1).encode(h, p);
  const Matrix b = RgcnEncoder(two, 1).encode(h, p);
  for (std::size_t k = 0; k < 4; ++k) CHECK(a(2, k) == b(2, k));
}

TEST_CASE("reference and parallel layers are bitwise identical") {
  UniformStream rng(17);
  for (std::size_t n : {3u, 40u, 96u}) {
    const std::size_t d = n > 10 ? 64 : 6;
    PriorGraph prior = random_prior(n, rng);
    const auto adj = kernels::RelationalAdjacency::from_graph(prior.graph);
    const ParamStore p = encoder_params(d, 1, n);
    kernels::RgcnLayerWeights w;
    w.self = &p.value(RgcnEncoder::self_weight_name(0));
    for (auto r : kEdgeRelations) w.relation[edge_index(r)] = &p.value(RgcnEncoder::relation_weight_name(0, r));
    const Matrix h = random_matrix(n, d, rng);
    std::array<Matrix, kNumRelations> agg_a, agg_b;
    for (auto& m : agg_a) m = Matrix(n, d);
    for (auto& m : agg_b) m = Matrix(n, d);
    Matrix pre_a(n, d), pre_b(n, d);
    kernels::rgcn_layer_reference(h, adj, w, agg_a, pre_a);
    kernels::rgcn_layer_parallel(h, adj, w, agg_b, pre_b);
    CHECK(pre_a == pre_b);
    for (std::size_t r = 0; r < kNumRelations; ++r) CHECK(agg_a[r] == agg_b[r]);

    const Matrix ea = RgcnEncoder(prior, 1, kernels::Exec::Reference).encode(h, p);
    const Matrix eb = RgcnEncoder(prior, 1, kernels::Exec::Parallel).encode(h, p);
    CHECK(ea == eb);
  }
}

TEST_CASE("encoder gradients match finite differences") {
  UniformStream rng(23);
  PriorGraph prior = oracle::make_prior(4);
  RgcnEncoder enc(prior, 2);
  ParamStore p = encoder_params(3, 2, 9);
  ProbeObjective obj(enc, random_matrix(4, 3, rng), random_matrix(4, 3, rng));
  const auto rep = oracle::finite_difference_check(obj, p, 200, 1);
  CHECK(rep.checked == 200);
  CHECK_MESSAGE(rep.max_rel_error <= 1e-4, rep.worst);

  // dL/dh0 against differences in the input.
  const auto tape = enc.forward(obj.h0, p);
  p.zero_grad();
  const Matrix d_h0 = enc.backward(tape, obj.c, p);
  for (std::size_t k = 0; k < obj.h0.size(); ++k) {
    ProbeObjective shifted = obj;
    auto f = [&](double x) {
      shifted.h0.flat()[k] = x;
      return shifted.value(p);
    };
    const double numeric = oracle::derivative(f, obj.h0.flat()[k]);
    CHECK(d_h0.flat()[k] == doctest::Approx(numeric).epsilon(1e-6));
  }
}
