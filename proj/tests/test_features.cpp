#include <doctest.h>

#include <cmath>

#include "topogen/errors.hpp"
#include "topogen/features.hpp"

using namespace topogen;

namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s / (norm(a) * norm(b));
}

// Bucket and sign of one hashed feature, computed independently.
std::pair<std::size_t, double> bucket(const std::string& key) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : key) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return {h % 384, (h >> 63) ? -1.0 : 1.0};
}

}  // namespace

TEST_CASE("fnv1a64 known vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("hash embedder is pure, unit norm and discriminates") {
  HashEmbedder e;
  const auto a1 = e.embed("a");
  const auto a2 = e.embed("a");
  CHECK(a1 == a2);
  CHECK(a1.size() == 384);
  CHECK(std::abs(norm(a1) - 1.0) < 1e-9);
  const auto b = e.embed("b");
  CHECK(cosine(a1, b) < 1.0);
  CHECK(std::abs(norm(e.embed("What is 17 + 25?")) - 1.0) < 1e-9);
  CHECK(std::abs(norm(e.embed("?!")) - 1.0) < 1e-9);
  CHECK_THROWS_AS(e.embed(""), InputError);
}

TEST_CASE("hash embedder of a single letter matches hand-built features") {
  // "a" yields the unigram "w:a" (weight 1) and one trigram "c:#a#" (0.25).
  std::vector<double> want(384, 0.0);
  auto [bw, sw] = bucket("w:a");
  auto [bc, sc] = bucket("c:#a#");
  want[bw] += sw * 1.0;
  want[bc] += sc * 0.25;
  const double n = norm(want);
  for (double& x : want) x /= n;
  const auto got = HashEmbedder().embed("a");
  for (std::size_t k = 0; k < 384; ++k) CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-15));
}

TEST_CASE("hash embedder: similar text is closer than unrelated text") {
  HashEmbedder e;
  const auto q = e.embed("sort a list of integers in python");
  const auto near = e.embed("sort a list of numbers in python");
  const auto far = e.embed("what is the capital of france");
  CHECK(cosine(q, near) > cosine(q, far));
  CHECK(e.embed("Hello World") == e.embed("hello, world"));
}

TEST_CASE("initial node features") {
  ParamStore p;
  add_feature_params(p, 1, 2, 2);
  p.value(feature_params::kRoleEmbeddings)(0, 0) = 1.0;
  auto& w = p.value(feature_params::kQueryProjection);
  w(0, 0) = 1.0;
  w(1, 1) = 1.0;
  const std::vector<std::size_t> roles = {0};
  const std::vector<double> q = {0.5, -0.5};
  Matrix h = init_node_features(roles, q, p);
  CHECK(h(0, 0) == 1.5);
  CHECK(h(0, 1) == -0.5);

  w.fill(0.0);
  h = init_node_features(roles, q, p);
  CHECK(h(0, 0) == 1.0);
  CHECK(h(0, 1) == 0.0);

  const std::vector<double> bad = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(init_node_features(roles, bad, p), InputError);
  const std::vector<std::size_t> bad_roles = {1};
  CHECK_THROWS_AS(init_node_features(bad_roles, q, p), InputError);
}

TEST_CASE("property: features are affine in the query and shared by equal roles") {
  UniformStream rng(5);
  ParamStore p;
  add_feature_params(p, 3, 8, 16);
  p.init_uniform(rng, -0.1, 0.1);
  const std::vector<std::size_t> roles = {0, 1, 2, 1};
  for (int t = 0; t < 50; ++t) {
    std::vector<double> u(16), v(16), mid(16), zero(16, 0.0);
    for (int k = 0; k < 16; ++k) {
      u[k] = rng.uniform(-1, 1);
      v[k] = rng.uniform(-1, 1);
      mid[k] = 0.5 * u[k] + 0.5 * v[k];
    }
    const Matrix fu = init_node_features(roles, u, p), fv = init_node_features(roles, v, p);
    const Matrix fm = init_node_features(roles, mid, p), f0 = init_node_features(roles, zero, p);
    for (std::size_t i = 0; i < roles.size(); ++i) {
      for (std::size_t k = 0; k < 8; ++k) {
        CHECK(fm(i, k) - f0(i, k) ==
              doctest::Approx(0.5 * (fu(i, k) - f0(i, k)) + 0.5 * (fv(i, k) - f0(i, k))).epsilon(1e-12));
      }
    }
    for (std::size_t k = 0; k < 8; ++k) CHECK(fu(1, k) == fu(3, k));
  }
}

TEST_CASE("query files") {
  auto qs = parse_queries("{\"id\":\"a\",\"query\":\"x\",\"gold\":\"1\"}\n\n{\"id\":\"b\",\"query\":\"y\",\"gold\":2}\n"
                          "{\"id\":\"c\",\"query\":\"z\"}\n");
  REQUIRE(qs.size() == 3);
  CHECK(qs[0].gold == "1");
  CHECK(qs[1].gold == "2");
  CHECK_FALSE(qs[2].gold.has_value());
  CHECK_THROWS_AS(parse_queries("{\"id\":\"a\",\"query\":\"x\"}\n{\"id\":\"a\",\"query\":\"y\"}\n"), InputError);
  CHECK_THROWS_AS(parse_queries("{\"id\":\"\",\"query\":\"x\"}\n"), InputError);
  CHECK_THROWS_AS(parse_queries("{\"query\":\"x\"}\n"), InputError);
  CHECK_THROWS_AS(parse_queries("not json\n"), InputError);
  CHECK_THROWS_AS(load_queries("/nonexistent/queries.jsonl"), InputError);
  CHECK(load_queries(TOPOGEN_DATA_DIR "/fixture/queries.jsonl").size() == 8);
}
