// SPDX-License-Identifier: Apache-2.0
#include "qroute/tensor.hpp"

#include <sstream>

#include "qroute/errors.hpp"

namespace qroute {

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto d = std::make_shared<TensorData>();
  d->values.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
  d->shape = std::move(shape);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.data()) v = value;
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values,
                         bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
    throw ShapeError("from_data: " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  d->values = std::move(values);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

std::int64_t Tensor::dim(int i) const {
  if (i < 0) i += ndim();
  if (i < 0 || i >= ndim())
    throw ShapeError("dim index " + std::to_string(i) + " out of range for " +
                     shape_str(shape()));
  return d_->shape[static_cast<std::size_t>(i)];
}

double Tensor::item() const {
  if (numel() != 1)
    throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return d_->values[0];
}

double Tensor::at(std::initializer_list<std::int64_t> idx) const {
  if (static_cast<int>(idx.size()) != ndim())
    throw ShapeError("at(): rank mismatch for " + shape_str(shape()));
  std::int64_t off = 0;
  int i = 0;
  for (std::int64_t v : idx) {
    off = off * d_->shape[static_cast<std::size_t>(i)] + v;
    ++i;
  }
  return d_->values[static_cast<std::size_t>(off)];
}

void ensure_grad(TensorData& n) {
  if (n.grad.empty()) n.grad.assign(n.values.size(), 0.0);
}

std::span<double> Tensor::grad() {
  ensure_grad(*d_);
  return {d_->grad.data(), d_->grad.size()};
}

std::span<const double> Tensor::grad() const {
  ensure_grad(*d_);
  return {d_->grad.data(), d_->grad.size()};
}

void Tensor::zero_grad() {
  for (double& g : d_->grad) g = 0.0;
}

}  // namespace qroute
