#include "topogen/numerics.hpp"

#include <cmath>
#include <fstream>

#include "topogen/errors.hpp"

namespace topogen {

void gemv_acc(const Matrix& m, std::span<const double> x, std::span<double> out, double scale) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    const auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) s += row[c] * x[c];
    out[r] += scale * s;
  }
}

void gemv_t_acc(const Matrix& m, std::span<const double> x, std::span<double> out, double scale) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double xr = scale * x[r];
    const auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += row[c] * xr;
  }
}

void outer_acc(Matrix& m, std::span<const double> a, std::span<const double> b, double scale) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double ar = scale * a[r];
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] += ar * b[c];
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Parameter& ParamStore::add(const std::string& name, std::vector<std::size_t> shape) {
  if (shape.empty() || shape.size() > 2) throw InputError("parameter '" + name + "' must be 1-D or 2-D");
  for (auto s : shape) {
    if (s == 0) throw InputError("parameter '" + name + "' has a zero dimension");
  }
  const std::size_t rows = shape.size() == 2 ? shape[0] : 1;
  const std::size_t cols = shape.back();
  auto [it, inserted] = params_.try_emplace(name);
  if (!inserted) throw InputError("duplicate parameter '" + name + "'");
  it->second.shape = std::move(shape);
  it->second.value = Matrix(rows, cols);
  it->second.grad = Matrix(rows, cols);
  return it->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw InputError("unknown parameter '" + name + "'");
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw InputError("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : params_) out.push_back(k);
  return out;
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.grad.fill(0.0);
}

void ParamStore::init_uniform(UniformStream& rng, double lo, double hi) {
  for (auto& [_, p] : params_) {
    for (auto& v : p.value.flat()) v = rng.uniform(lo, hi);
  }
}

void ParamStore::check_finite_values() const {
  for (const auto& [name, p] : params_) {
    for (double v : p.value.flat()) {
      if (!std::isfinite(v)) throw NumericError("non-finite value in parameter '" + name + "'");
    }
  }
}

void ParamStore::check_finite_grads() const {
  for (const auto& [name, p] : params_) {
    for (double v : p.grad.flat()) {
      if (!std::isfinite(v)) throw NumericError("non-finite gradient for parameter '" + name + "'");
    }
  }
}

bool ParamStore::same_values(const ParamStore& o) const {
  if (step_ != o.step_ || params_.size() != o.params_.size()) return false;
  for (const auto& [name, p] : params_) {
    auto it = o.params_.find(name);
    if (it == o.params_.end() || it->second.shape != p.shape || !(it->second.value == p.value)) return false;
  }
  return true;
}

nlohmann::ordered_json to_json(const ParamStore& store) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  nlohmann::ordered_json arrays = nlohmann::ordered_json::object();
  for (const auto& [name, p] : store) {
    nlohmann::ordered_json a;
    a["shape"] = p.shape;
    a["data"] = std::vector<double>(p.value.flat().begin(), p.value.flat().end());
    arrays[name] = std::move(a);
  }
  j["arrays"] = std::move(arrays);
  j["step"] = store.step();
  return j;
}

ParamStore param_store_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw InputError("unsupported checkpoint version");
    ParamStore store;
    for (const auto& [name, a] : j.at("arrays").items()) {
      auto& p = store.add(name, a.at("shape").get<std::vector<std::size_t>>());
      auto data = a.at("data").get<std::vector<double>>();
      if (data.size() != p.value.size()) throw InputError("checkpoint array '" + name + "' has wrong length");
      std::copy(data.begin(), data.end(), p.value.flat().begin());
    }
    store.set_step(j.at("step").get<std::size_t>());
    store.check_finite_values();
    return store;
  } catch (const nlohmann::json::exception& ex) {
    throw InputError(std::string("malformed checkpoint: ") + ex.what());
  }
}

void save_param_store(const ParamStore& store, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << to_json(store).dump() << '\n';
}

ParamStore load_param_store(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open checkpoint " + path);
  try {
    return param_store_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& ex) {
    throw InputError(path + ": " + ex.what());
  }
}

double backward(const Objective& objective, ParamStore& params) {
  params.zero_grad();
  const double v = objective.accumulate_gradient(params);
  if (!std::isfinite(v)) throw NumericError("objective value is not finite");
  params.check_finite_grads();
  return v;
}

void sgd_update(ParamStore& params, double lr) {
  if (!(lr > 0.0)) throw InputError("learning rate must be positive");
  for (auto& [_, p] : params) {
    auto v = p.value.flat();
    auto g = p.grad.flat();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  }
  params.check_finite_values();
  params.advance_step();
}

}  // namespace topogen
