#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "topogen/graph.hpp"
#include "topogen/kernels.hpp"
#include "topogen/numerics.hpp"

namespace topogen {

// Relational graph convolution over the prior graph. Hidden layers use a
// rectifier, the last layer is linear.
class RgcnEncoder {
 public:
  RgcnEncoder(const PriorGraph& prior, std::size_t num_layers,
              kernels::Exec exec = kernels::Exec::Parallel);

  static std::string self_weight_name(std::size_t layer);
  static std::string relation_weight_name(std::size_t layer, Relation r);
  static void add_params(ParamStore& store, std::size_t d, std::size_t num_layers);

  // Intermediates kept for the backward pass.
  struct Tape {
    std::vector<Matrix> inputs;                                  // h^(l), l = 0..L-1
    std::vector<std::array<Matrix, kNumRelations>> aggregates;   // neighbor means per layer
    std::vector<Matrix> pre;                                     // pre-activations per layer
    Matrix output;
  };

  Tape forward(const Matrix& h0, const ParamStore& params) const;
  Matrix encode(const Matrix& h0, const ParamStore& params) const { return forward(h0, params).output; }

  // Accumulates parameter gradients from dL/dH and returns dL/dh0.
  Matrix backward(const Tape& tape, const Matrix& d_out, ParamStore& params) const;

  std::size_t num_layers() const { return num_layers_; }
  std::size_t num_nodes() const { return adj_.num_nodes; }

 private:
  kernels::RgcnLayerWeights layer_weights(const ParamStore& params, std::size_t layer) const;

  kernels::RelationalAdjacency adj_;
  std::size_t num_layers_;
  kernels::Exec exec_;
};

}  // namespace topogen
