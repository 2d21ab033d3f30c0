#include "topogen/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace topogen::kernels {

RelationalAdjacency RelationalAdjacency::from_graph(const HeteroGraph& g) {
  RelationalAdjacency adj;
  adj.num_nodes = g.num_nodes();
  adj.in.resize(g.num_nodes());
  for (NodeId i = 0; i < g.num_nodes(); ++i) {
    for (const auto& e : g.in_edges(i)) adj.in[i][edge_index(e.relation)].push_back(e.src);
  }
  return adj;
}

namespace {

inline void rgcn_row(std::size_t i, const Matrix& h, const RelationalAdjacency& adj, const RgcnLayerWeights& w,
                     std::array<Matrix, kNumRelations>& agg, Matrix& pre) {
  const std::size_t d = h.cols();
  auto out = pre.row(i);
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t r = 0; r < kNumRelations; ++r) {
    const auto& nbrs = adj.in[i][r];
    auto a = agg[r].row(i);
    std::fill(a.begin(), a.end(), 0.0);
    if (nbrs.empty()) continue;
    for (NodeId j : nbrs) {
      const auto hj = h.row(j);
      for (std::size_t k = 0; k < d; ++k) a[k] += hj[k];
    }
    const double inv = 1.0 / static_cast<double>(nbrs.size());
    for (std::size_t k = 0; k < d; ++k) a[k] *= inv;
    gemv_acc(*w.relation[r], a, out);
  }
  gemv_acc(*w.self, h.row(i), out);
}

}  // namespace

void rgcn_layer_reference(const Matrix& h, const RelationalAdjacency& adj, const RgcnLayerWeights& w,
                          std::array<Matrix, kNumRelations>& agg, Matrix& pre) {
  for (std::size_t i = 0; i < h.rows(); ++i) rgcn_row(i, h, adj, w, agg, pre);
}

void rgcn_layer_parallel(const Matrix& h, const RelationalAdjacency& adj, const RgcnLayerWeights& w,
                         std::array<Matrix, kNumRelations>& agg, Matrix& pre) {
  const long n = static_cast<long>(h.rows());
  const std::size_t work = h.rows() * h.cols() * h.cols();
#pragma omp parallel for schedule(static) if (work > 65536)
  for (long i = 0; i < n; ++i) rgcn_row(static_cast<std::size_t>(i), h, adj, w, agg, pre);
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace topogen::kernels
