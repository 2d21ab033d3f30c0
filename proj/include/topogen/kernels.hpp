#pragma once

// Data-parallel kernels. Every kernel has a serial reference implementation
// and an OpenMP implementation; both compute each output row with the same
// operation order, so results are bitwise identical.

#include <array>
#include <cstddef>
#include <vector>

#include "topogen/graph.hpp"
#include "topogen/numerics.hpp"

namespace topogen::kernels {

enum class Exec { Reference, Parallel };

// In-neighbors of every node, grouped by prior relation, ascending ids.
struct RelationalAdjacency {
  std::size_t num_nodes = 0;
  std::vector<std::array<std::vector<NodeId>, kNumRelations>> in;

  static RelationalAdjacency from_graph(const HeteroGraph& g);
};

struct RgcnLayerWeights {
  const Matrix* self = nullptr;
  std::array<const Matrix*, kNumRelations> relation{};
};

// agg[r](i) = mean of h over in-neighbors of i under r (left zero when there
// are none); pre(i) = sum_r W_r agg[r](i) + W_0 h(i).
// `agg` and `pre` must be preallocated to N x d.
void rgcn_layer_reference(const Matrix& h, const RelationalAdjacency& adj, const RgcnLayerWeights& w,
                          std::array<Matrix, kNumRelations>& agg, Matrix& pre);
void rgcn_layer_parallel(const Matrix& h, const RelationalAdjacency& adj, const RgcnLayerWeights& w,
                         std::array<Matrix, kNumRelations>& agg, Matrix& pre);

inline void rgcn_layer(Exec exec, const Matrix& h, const RelationalAdjacency& adj, const RgcnLayerWeights& w,
                       std::array<Matrix, kNumRelations>& agg, Matrix& pre) {
  if (exec == Exec::Parallel) {
    rgcn_layer_parallel(h, adj, w, agg, pre);
  } else {
    rgcn_layer_reference(h, adj, w, agg, pre);
  }
}

int max_threads();

}  // namespace topogen::kernels
