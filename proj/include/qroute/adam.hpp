// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qroute/tensor.hpp"

namespace qroute {

/// One Adam update on a single tensor. m and v are the caller's moment
/// buffers (same length as the tensor); t is the 1-based step count
/// used for bias correction.
void adam_step(Tensor& param, std::span<const double> grad,
               std::vector<double>& m, std::vector<double>& v,
               std::uint64_t t, double lr, double beta1, double beta2,
               double eps);

/// Adam over a fixed parameter list. Moment buffers are kept in double
/// precision and are checkpointable via state accessors.
class Adam {
public:
  explicit Adam(std::vector<Tensor> params, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  /// Applies one update from the accumulated .grad of every parameter.
  void step(double lr);
  void zero_grad();

  std::uint64_t t() const { return t_; }
  std::size_t size() const { return params_.size(); }
  const std::vector<double>& m(std::size_t i) const { return m_[i]; }
  const std::vector<double>& v(std::size_t i) const { return v_[i]; }

  /// Restores optimizer state (for checkpoint load).
  void set_state(std::uint64_t t, std::vector<std::vector<double>> m,
                 std::vector<std::vector<double>> v);

private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
};

}  // namespace qroute
