#include <benchmark/benchmark.h>

#include "topogen/decoder.hpp"
#include "topogen/kernels.hpp"

using namespace topogen;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, UniformStream& rng) {
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = rng.uniform(-0.5, 0.5);
  return m;
}

HeteroGraph random_prior(std::size_t n, UniformStream& rng) {
  HeteroGraph g(n);
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = i + 1; j < n; ++j) {
      if (rng.next() < 0.1) g.add_edge(i, j, static_cast<Relation>(1 + static_cast<int>(rng.next() * 3)));
    }
  }
  return g;
}

// args: nodes, latent width
void rgcn_layer_bench(benchmark::State& state, kernels::Exec exec) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  UniformStream rng(1);
  const auto adj = kernels::RelationalAdjacency::from_graph(random_prior(n, rng));
  const Matrix h = random_matrix(n, d, rng);
  const Matrix self = random_matrix(d, d, rng);
  std::array<Matrix, kNumRelations> rel;
  kernels::RgcnLayerWeights w{&self, {}};
  for (std::size_t r = 0; r < kNumRelations; ++r) {
    rel[r] = random_matrix(d, d, rng);
    w.relation[r] = &rel[r];
  }
  std::array<Matrix, kNumRelations> agg;
  for (auto& a : agg) a = Matrix(n, d);
  Matrix pre(n, d);
  for (auto _ : state) {
    kernels::rgcn_layer(exec, h, adj, w, agg, pre);
    benchmark::DoNotOptimize(pre.flat().data());
  }
  state.counters["threads"] = exec == kernels::Exec::Parallel ? kernels::max_threads() : 1;
}

// args: nodes, samples
void decode_batch_bench(benchmark::State& state, kernels::Exec exec) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto samples = static_cast<std::size_t>(state.range(1));
  UniformStream rng(2);
  const Matrix H = random_matrix(n, 64, rng);
  const Matrix rv = random_matrix(kNumDecisions, 128, rng);
  for (auto _ : state) {
    auto traces = decode_batch(exec, H, rv, 1.0, 7, samples);
    benchmark::DoNotOptimize(traces.data());
  }
  state.counters["threads"] = exec == kernels::Exec::Parallel ? kernels::max_threads() : 1;
}

}  // namespace

BENCHMARK_CAPTURE(rgcn_layer_bench, reference, kernels::Exec::Reference)
    ->Args({5, 64})->Args({64, 64})->Args({256, 128})->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(rgcn_layer_bench, parallel, kernels::Exec::Parallel)
    ->Args({5, 64})->Args({64, 64})->Args({256, 128})->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(decode_batch_bench, reference, kernels::Exec::Reference)
    ->Args({5, 64})->Args({10, 256})->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(decode_batch_bench, parallel, kernels::Exec::Parallel)
    ->Args({5, 64})->Args({10, 256})->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
