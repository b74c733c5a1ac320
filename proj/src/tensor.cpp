#include "genparse/tensor.hpp"

#include <cmath>

namespace genparse {

template <typename Real>
Tensor<Real>::Tensor(int rows, int cols, std::vector<Real> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != std::size_t(rows) * cols) {
    throw ShapeError("tensor of shape " + shape_string() + " given " +
                     std::to_string(data_.size()) + " values");
  }
}

template <typename Real>
std::string Tensor<Real>::shape_string() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

template <typename Real>
void Tensor<Real>::fill(Real v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename Real>
bool Tensor<Real>::all_finite() const {
  for (Real v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename Real>
Parameter<Real>& ParameterStore<Real>::add(const std::string& name, int rows, int cols,
                                           Init init) {
  if (index_.count(name)) throw Error("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter<Real>>();
  p->name = name;
  p->value = Tensor<Real>(rows, cols);
  p->grad = Tensor<Real>(rows, cols);
  index_.emplace(name, params_.size());
  params_.push_back(std::move(p));
  inits_.push_back(init);
  return *params_.back();
}

template <typename Real>
Parameter<Real>& ParameterStore<Real>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
  return *params_[it->second];
}

template <typename Real>
const Parameter<Real>& ParameterStore<Real>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
  return *params_[it->second];
}

template <typename Real>
void ParameterStore<Real>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-double(kInitRange), double(kInitRange));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& values = params_[i]->value;
    if (inits_[i] == Init::kZero) {
      values.fill(Real(0));
    } else {
      for (auto& v : values.values()) v = static_cast<Real>(dist(rng));
    }
  }
  zero_grad();
}

template <typename Real>
void ParameterStore<Real>::zero_grad() {
  for (auto& p : params_) p->grad.fill(Real(0));
}

template <typename Real>
void ParameterStore<Real>::fill_values(Real v) {
  for (auto& p : params_) p->value.fill(v);
}

template <typename Real>
std::size_t ParameterStore<Real>::num_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

template class Tensor<float>;
template class Tensor<double>;
template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace genparse
