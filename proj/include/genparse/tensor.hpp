#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "genparse/transition.hpp"

namespace genparse {

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Dense row-major matrix; vectors are single-column tensors.
template <typename Real>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols) : rows_(rows), cols_(cols), data_(std::size_t(rows) * cols) {}
  Tensor(int rows, int cols, std::vector<Real> values);

  static Tensor column(std::vector<Real> values) {
    const int n = static_cast<int>(values.size());
    return Tensor(n, 1, std::move(values));
  }
  static Tensor scalar(Real v) { return Tensor(1, 1, {v}); }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_string() const;

  Real& operator()(int r, int c) { return data_[std::size_t(r) * cols_ + c]; }
  Real operator()(int r, int c) const { return data_[std::size_t(r) * cols_ + c]; }
  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }
  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }

  void fill(Real v);
  bool all_finite() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Real> data_;
};

template <typename Real>
struct Parameter {
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;
};

enum class Init { kUniform, kZero };

// Owns every learned tensor of a model. References returned by add() stay
// valid for the lifetime of the store.
template <typename Real>
class ParameterStore {
 public:
  inline static constexpr Real kInitRange = Real(0.1);

  Parameter<Real>& add(const std::string& name, int rows, int cols, Init init = Init::kUniform);

  Parameter<Real>& get(const std::string& name);
  const Parameter<Real>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  // Weights uniform in [-0.1, 0.1], biases zero.
  void initialize(std::uint64_t seed);
  void zero_grad();
  void fill_values(Real v);

  std::size_t size() const { return params_.size(); }
  std::size_t num_values() const;
  Parameter<Real>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<Real>& operator[](std::size_t i) const { return *params_[i]; }

 private:
  std::vector<std::unique_ptr<Parameter<Real>>> params_;
  std::vector<Init> inits_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace genparse
