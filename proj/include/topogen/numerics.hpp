#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "topogen/rng.hpp"

namespace topogen {

// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// out += M * x
void gemv_acc(const Matrix& m, std::span<const double> x, std::span<double> out, double scale = 1.0);
// out += M^T * x
void gemv_t_acc(const Matrix& m, std::span<const double> x, std::span<double> out, double scale = 1.0);
// M += scale * a b^T
void outer_acc(Matrix& m, std::span<const double> a, std::span<const double> b, double scale = 1.0);
double dot(std::span<const double> a, std::span<const double> b);

// A trainable array with a gradient accumulator of the same shape.
struct Parameter {
  std::vector<std::size_t> shape;  // [n] or [rows, cols]
  Matrix value;
  Matrix grad;
};

// Named parameter collection. Iteration is in name order, which fixes the
// initialization and checkpoint layout.
class ParamStore {
 public:
  Parameter& add(const std::string& name, std::vector<std::size_t> shape);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;

  Matrix& value(const std::string& name) { return at(name).value; }
  const Matrix& value(const std::string& name) const { return at(name).value; }
  Matrix& grad(const std::string& name) { return at(name).grad; }

  std::vector<std::string> names() const;
  std::size_t num_scalars() const;
  std::size_t step() const { return step_; }
  void set_step(std::size_t s) { step_ = s; }
  void advance_step() { ++step_; }

  void zero_grad();
  void init_uniform(UniformStream& rng, double lo, double hi);

  // Throws NumericError naming the first non-finite parameter (or gradient).
  void check_finite_values() const;
  void check_finite_grads() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  // Values and step only; gradients are not persisted.
  bool same_values(const ParamStore& o) const;

 private:
  std::map<std::string, Parameter> params_;
  std::size_t step_ = 0;
};

nlohmann::ordered_json to_json(const ParamStore& store);
ParamStore param_store_from_json(const nlohmann::json& j);
void save_param_store(const ParamStore& store, const std::string& path);
ParamStore load_param_store(const std::string& path);

// A scalar objective with an analytic gradient over a ParamStore.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual double value(const ParamStore& params) const = 0;
  // Adds d(value)/d(param) into params' gradient accumulators; returns value.
  virtual double accumulate_gradient(ParamStore& params) const = 0;
};

// Zeroes gradients, accumulates the objective's gradient and checks it is
// finite. Returns the objective value.
double backward(const Objective& objective, ParamStore& params);

// p <- p - lr * g for every coordinate; advances the step counter.
void sgd_update(ParamStore& params, double lr);

}  // namespace topogen
