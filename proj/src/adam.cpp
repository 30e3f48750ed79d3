// SPDX-License-Identifier: Apache-2.0
#include "qroute/adam.hpp"

#include <cmath>

#include "qroute/errors.hpp"

namespace qroute {

void adam_step(Tensor& param, std::span<const double> grad,
               std::vector<double>& m, std::vector<double>& v,
               std::uint64_t t, double lr, double beta1, double beta2,
               double eps) {
  if (grad.size() != static_cast<std::size_t>(param.numel()) ||
      m.size() != grad.size() || v.size() != grad.size())
    throw ShapeError("adam_step: state size mismatch");
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  auto pd = param.data();
  for (std::size_t i = 0; i < grad.size(); ++i) {
    double g = grad[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    double mhat = m[i] / bc1;
    double vhat = v[i] / bc2;
    pd[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

Adam::Adam(std::vector<Tensor> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Tensor& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i)
    adam_step(params_[i], params_[i].grad(), m_[i], v_[i], t_, lr, beta1_,
              beta2_, eps_);
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void Adam::set_state(std::uint64_t t, std::vector<std::vector<double>> m,
                     std::vector<std::vector<double>> v) {
  if (m.size() != params_.size() || v.size() != params_.size())
    throw ConfigError("adam state restore: parameter count mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (m[i].size() != static_cast<std::size_t>(params_[i].numel()) ||
        v[i].size() != static_cast<std::size_t>(params_[i].numel()))
      throw ConfigError("adam state restore: moment size mismatch");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace qroute
