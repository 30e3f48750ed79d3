// SPDX-License-Identifier: Apache-2.0
#include "qroute/nn.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "qroute/errors.hpp"

namespace qroute {

Tensor ParamRegistry::add_param(const std::string& name, Tensor t) {
  t.set_requires_grad(true);
  params_.push_back({name, t});
  return t;
}

Tensor ParamRegistry::add_buffer(const std::string& name, Tensor t) {
  t.set_requires_grad(false);
  buffers_.push_back({name, t});
  return t;
}

Tensor ParamRegistry::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.tensor;
  for (const auto& b : buffers_)
    if (b.name == name) return b.tensor;
  throw ConfigError("no parameter or buffer named '" + name + "'");
}

void ParamRegistry::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::int64_t ParamRegistry::total_param_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void init_uniform_fan_in(Tensor& t, std::int64_t fan_in, RngStream& rng) {
  double a = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (double& v : t.data()) v = rng.uniform(-a, a);
}

void init_orthogonal(Tensor& t, RngStream& rng) {
  if (t.ndim() != 2) throw ShapeError("init_orthogonal expects a matrix");
  std::int64_t rows = t.dim(0), cols = t.dim(1);
  bool tall = rows >= cols;
  std::int64_t r = tall ? rows : cols;
  std::int64_t c = tall ? cols : rows;
  Eigen::MatrixXd g(r, c);
  // Column-major fill order is part of the determinism contract.
  for (std::int64_t j = 0; j < c; ++j)
    for (std::int64_t i = 0; i < r; ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(r, c);
  Eigen::MatrixXd rm = qr.matrixQR().topRows(c).triangularView<Eigen::Upper>();
  // Fix the sign ambiguity so the draw alone determines the result.
  for (std::int64_t j = 0; j < c; ++j)
    if (rm(j, j) < 0.0) q.col(j) = -q.col(j);
  auto td = t.data();
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t j = 0; j < cols; ++j)
      td[static_cast<std::size_t>(i * cols + j)] = tall ? q(i, j) : q(j, i);
}

Linear::Linear(ParamRegistry& reg, const std::string& prefix, std::int64_t in,
               std::int64_t out, RngStream& rng, bool bias) {
  Tensor w = Tensor::zeros({out, in});
  init_uniform_fan_in(w, in, rng);
  w_ = reg.add_param(prefix + ".weight", w);
  if (bias) b_ = reg.add_param(prefix + ".bias", Tensor::zeros({out}));
}

Conv2d::Conv2d(ParamRegistry& reg, const std::string& prefix, std::int64_t in_c,
               std::int64_t out_c, int kernel, int stride, int pad,
               RngStream& rng, bool bias)
    : stride_(stride), pad_(pad) {
  Tensor w = Tensor::zeros({out_c, in_c, kernel, kernel});
  init_uniform_fan_in(w, in_c * kernel * kernel, rng);
  w_ = reg.add_param(prefix + ".weight", w);
  if (bias) b_ = reg.add_param(prefix + ".bias", Tensor::zeros({out_c}));
}

BatchNorm2d::BatchNorm2d(ParamRegistry& reg, const std::string& prefix,
                         std::int64_t c) {
  gamma_ = reg.add_param(prefix + ".weight", Tensor::full({c}, 1.0));
  beta_ = reg.add_param(prefix + ".bias", Tensor::zeros({c}));
  running_mean_ = reg.add_buffer(prefix + ".running_mean", Tensor::zeros({c}));
  running_var_ = reg.add_buffer(prefix + ".running_var", Tensor::full({c}, 1.0));
}

GroupNorm::GroupNorm(ParamRegistry& reg, const std::string& prefix,
                     std::int64_t c, int groups)
    : groups_(groups) {
  if (groups < 1 || c % groups != 0)
    throw ConfigError("group_norm at '" + prefix + "': " + std::to_string(c) +
                      " channels not divisible by " + std::to_string(groups) +
                      " groups");
  gamma_ = reg.add_param(prefix + ".weight", Tensor::full({c}, 1.0));
  beta_ = reg.add_param(prefix + ".bias", Tensor::zeros({c}));
}

LayerNorm::LayerNorm(ParamRegistry& reg, const std::string& prefix,
                     std::int64_t d) {
  gamma_ = reg.add_param(prefix + ".weight", Tensor::full({d}, 1.0));
  beta_ = reg.add_param(prefix + ".bias", Tensor::zeros({d}));
}

Embedding::Embedding(ParamRegistry& reg, const std::string& prefix,
                     std::int64_t vocab, std::int64_t dim, RngStream& rng) {
  Tensor t = Tensor::zeros({vocab, dim});
  init_uniform_fan_in(t, dim, rng);
  table_ = reg.add_param(prefix + ".weight", t);
}

GruCell::GruCell(ParamRegistry& reg, const std::string& prefix,
                 std::int64_t input, std::int64_t hidden, RngStream& rng)
    : hidden_(hidden) {
  Tensor wih = Tensor::zeros({3 * hidden, input});
  Tensor whh = Tensor::zeros({3 * hidden, hidden});
  // Orthogonal init per gate block keeps each gate's map well
  // conditioned independent of the stacking.
  for (int g = 0; g < 3; ++g) {
    Tensor bi = Tensor::zeros({hidden, input});
    init_orthogonal(bi, rng);
    Tensor bh = Tensor::zeros({hidden, hidden});
    init_orthogonal(bh, rng);
    auto copy_block = [hidden](Tensor& dst, const Tensor& src, int block,
                               std::int64_t cols) {
      for (std::int64_t i = 0; i < hidden; ++i)
        for (std::int64_t j = 0; j < cols; ++j)
          dst.data()[static_cast<std::size_t>((block * hidden + i) * cols + j)] =
              src.at({i, j});
    };
    copy_block(wih, bi, g, input);
    copy_block(whh, bh, g, hidden);
  }
  weight_ih_ = reg.add_param(prefix + ".weight_ih", wih);
  weight_hh_ = reg.add_param(prefix + ".weight_hh", whh);
  bias_ih_ = reg.add_param(prefix + ".bias_ih", Tensor::zeros({3 * hidden}));
  bias_hh_ = reg.add_param(prefix + ".bias_hh", Tensor::zeros({3 * hidden}));
}

Tensor GruCell::forward(const Tensor& x, const Tensor& h) const {
  std::int64_t hd = hidden_;
  Tensor gi = linear(x, weight_ih_, bias_ih_);  // [N, 3H]
  Tensor gh = linear(h, weight_hh_, bias_hh_);
  Tensor r = sigmoid(add(narrow(gi, 1, 0, hd), narrow(gh, 1, 0, hd)));
  Tensor z = sigmoid(add(narrow(gi, 1, hd, hd), narrow(gh, 1, hd, hd)));
  Tensor n = qroute::tanh(
      add(narrow(gi, 1, 2 * hd, hd), mul(r, narrow(gh, 1, 2 * hd, hd))));
  // h' = (1 - z) * n + z * h
  Tensor one_minus_z = scalar_add(neg(z), 1.0);
  return add(mul(one_minus_z, n), mul(z, h));
}

}  // namespace qroute
