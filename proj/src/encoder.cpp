#include "topogen/encoder.hpp"

#include <cmath>

#include "topogen/errors.hpp"

namespace topogen {

RgcnEncoder::RgcnEncoder(const PriorGraph& prior, std::size_t num_layers, kernels::Exec exec)
    : adj_(kernels::RelationalAdjacency::from_graph(prior.graph)), num_layers_(num_layers), exec_(exec) {
  if (num_layers == 0) throw InputError("encoder needs at least one layer");
}

std::string RgcnEncoder::self_weight_name(std::size_t layer) {
  return "encoder.l" + std::to_string(layer) + ".self";
}

std::string RgcnEncoder::relation_weight_name(std::size_t layer, Relation r) {
  return "encoder.l" + std::to_string(layer) + "." + std::string(to_string(r));
}

void RgcnEncoder::add_params(ParamStore& store, std::size_t d, std::size_t num_layers) {
  for (std::size_t l = 0; l < num_layers; ++l) {
    store.add(self_weight_name(l), {d, d});
    for (auto r : kEdgeRelations) store.add(relation_weight_name(l, r), {d, d});
  }
}

kernels::RgcnLayerWeights RgcnEncoder::layer_weights(const ParamStore& params, std::size_t layer) const {
  kernels::RgcnLayerWeights w;
  w.self = &params.value(self_weight_name(layer));
  for (auto r : kEdgeRelations) w.relation[edge_index(r)] = &params.value(relation_weight_name(layer, r));
  return w;
}

RgcnEncoder::Tape RgcnEncoder::forward(const Matrix& h0, const ParamStore& params) const {
  if (h0.rows() != adj_.num_nodes) {
    throw InputError("encoder input has " + std::to_string(h0.rows()) + " rows, prior graph has " +
                     std::to_string(adj_.num_nodes) + " nodes");
  }
  const std::size_t n = h0.rows();
  const std::size_t d = h0.cols();
  Tape tape;
  Matrix h = h0;
  for (std::size_t l = 0; l < num_layers_; ++l) {
    const auto w = layer_weights(params, l);
    if (w.self->rows() != d || w.self->cols() != d) throw InputError("encoder weight width mismatch");
    std::array<Matrix, kNumRelations> agg;
    for (auto& a : agg) a = Matrix(n, d);
    Matrix pre(n, d);
    kernels::rgcn_layer(exec_, h, adj_, w, agg, pre);

    Matrix next = pre;
    if (l + 1 < num_layers_) {
      for (double& v : next.flat()) v = v > 0.0 ? v : 0.0;
    }
    tape.inputs.push_back(std::move(h));
    tape.aggregates.push_back(std::move(agg));
    tape.pre.push_back(std::move(pre));
    h = std::move(next);
  }
  for (double v : h.flat()) {
    if (!std::isfinite(v)) throw NumericError("encoder produced a non-finite value");
  }
  tape.output = std::move(h);
  return tape;
}

Matrix RgcnEncoder::backward(const Tape& tape, const Matrix& d_out, ParamStore& params) const {
  const std::size_t n = d_out.rows();
  const std::size_t d = d_out.cols();
  Matrix d_h = d_out;
  for (std::size_t l = num_layers_; l-- > 0;) {
    Matrix d_pre = d_h;
    if (l + 1 < num_layers_) {
      const auto pre = tape.pre[l].flat();
      auto g = d_pre.flat();
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (!(pre[k] > 0.0)) g[k] = 0.0;
      }
    }
    const auto w = layer_weights(params, l);
    Matrix& g_self = params.grad(self_weight_name(l));
    Matrix d_in(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      const auto gp = d_pre.row(i);
      outer_acc(g_self, gp, tape.inputs[l].row(i));
      gemv_t_acc(*w.self, gp, d_in.row(i));
      for (auto r : kEdgeRelations) {
        const std::size_t ri = edge_index(r);
        const auto& nbrs = adj_.in[i][ri];
        if (nbrs.empty()) continue;
        outer_acc(params.grad(relation_weight_name(l, r)), gp, tape.aggregates[l][ri].row(i));
        std::vector<double> d_agg(d, 0.0);
        gemv_t_acc(*w.relation[ri], gp, d_agg);
        const double inv = 1.0 / static_cast<double>(nbrs.size());
        for (NodeId j : nbrs) {
          auto dst = d_in.row(j);
          for (std::size_t k = 0; k < d; ++k) dst[k] += inv * d_agg[k];
        }
      }
    }
    d_h = std::move(d_in);
  }
  return d_h;
}

}  // namespace topogen
