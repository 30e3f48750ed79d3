// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace qroute {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

/// Storage node shared by Tensor handles and tape closures.
struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
};

/// Dense row-major tensor of doubles with optional gradient storage.
/// Copies are shallow; two handles to the same node alias storage.
/// All arithmetic lives in free functions (ops.hpp) so that gradient
/// recording stays in one place.
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> values,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  int ndim() const { return static_cast<int>(d_->shape.size()); }
  std::int64_t dim(int i) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(d_->values.size()); }

  bool requires_grad() const { return d_->requires_grad; }
  Tensor& set_requires_grad(bool rg) {
    d_->requires_grad = rg;
    return *this;
  }

  std::span<double> data() { return {d_->values.data(), d_->values.size()}; }
  std::span<const double> data() const {
    return {d_->values.data(), d_->values.size()};
  }

  /// Value of a 0-dim or single-element tensor.
  double item() const;
  double at(std::initializer_list<std::int64_t> idx) const;

  bool grad_allocated() const { return !d_->grad.empty(); }
  /// Gradient storage, allocated (zeroed) on first use.
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();

  const std::shared_ptr<TensorData>& node() const { return d_; }

private:
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData> d_;
};

/// Allocate-and-zero grad storage for a node if absent.
void ensure_grad(TensorData& n);

}  // namespace qroute
