// SPDX-License-Identifier: Apache-2.0
#include "qroute/routing.hpp"

#include <cmath>

#include "qroute/errors.hpp"

namespace qroute {

double gumbel_from_uniform(double u) { return -std::log(-std::log(u)); }

double logistic_from_uniform(double u) {
  return std::log(u) - std::log(1.0 - u);
}

double sample_gumbel(RngStream& rng) {
  return gumbel_from_uniform(rng.uniform_open01());
}

double sample_logistic(RngStream& rng) {
  return logistic_from_uniform(rng.uniform_open01());
}

Tensor sample_gumbel(Shape shape, RngStream& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data()) v = sample_gumbel(rng);
  return t;
}

Tensor sample_logistic(Shape shape, RngStream& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data()) v = sample_logistic(rng);
  return t;
}

std::int64_t gumbel_max_sample(std::span<const double> log_weights,
                               RngStream& rng) {
  if (log_weights.empty())
    throw ShapeError("gumbel_max_sample: empty weights");
  std::int64_t best = 0;
  double best_v = log_weights[0] + sample_gumbel(rng);
  for (std::size_t i = 1; i < log_weights.size(); ++i) {
    double v = log_weights[i] + sample_gumbel(rng);
    if (v > best_v) {
      best_v = v;
      best = static_cast<std::int64_t>(i);
    }
  }
  return best;
}

Tensor gumbel_softmax(const Tensor& log_pi, double tau, RngStream& rng) {
  if (tau <= 0.0) throw ConfigError("gumbel_softmax: tau must be positive");
  Tensor g = sample_gumbel(log_pi.shape(), rng);
  return softmax(scalar_mul(add(log_pi, g), 1.0 / tau), -1);
}

Tensor soft_gates(const Tensor& logits, const Tensor& noise, double tau) {
  if (tau <= 0.0) throw ConfigError("soft_gates: tau must be positive");
  return sigmoid(scalar_mul(add(noise, logits), 1.0 / tau));
}

double RoutingNetwork::default_bias_init() { return std::log(0.7 / 0.3); }

namespace {
std::int64_t total_of(const std::vector<std::int64_t>& counts) {
  if (counts.empty()) throw ConfigError("routing needs at least one layer");
  std::int64_t total = 0;
  for (std::int64_t c : counts) {
    if (c < 1) throw ConfigError("every routed layer needs at least 1 module");
    total += c;
  }
  return total;
}

std::vector<std::int64_t> uniform_counts(std::int64_t layers,
                                         std::int64_t modules) {
  if (layers < 1 || modules < 1)
    throw ConfigError("routing grid must be at least 1x1");
  return std::vector<std::int64_t>(static_cast<std::size_t>(layers), modules);
}
}  // namespace

RoutingNetwork::RoutingNetwork(ParamRegistry& reg, const std::string& prefix,
                               std::int64_t q_dim,
                               std::vector<std::int64_t> module_counts,
                               RngStream& rng)
    : fc_(reg, prefix + ".fc", q_dim, total_of(module_counts), rng,
          /*bias=*/true),
      counts_(std::move(module_counts)) {
  offsets_.resize(counts_.size() + 1, 0);
  for (std::size_t l = 0; l < counts_.size(); ++l)
    offsets_[l + 1] = offsets_[l] + counts_[l];
  total_ = offsets_.back();
  Tensor b = fc_.bias();
  for (double& v : b.data()) v = default_bias_init();
}

RoutingNetwork::RoutingNetwork(ParamRegistry& reg, const std::string& prefix,
                               std::int64_t q_dim, std::int64_t layers,
                               std::int64_t modules, RngStream& rng)
    : RoutingNetwork(reg, prefix, q_dim, uniform_counts(layers, modules),
                     rng) {}

std::int64_t RoutingNetwork::module_count(std::int64_t layer) const {
  if (layer < 0 || layer >= layers())
    throw ShapeError("routing layer index out of range");
  return counts_[static_cast<std::size_t>(layer)];
}

std::int64_t RoutingNetwork::layer_offset(std::int64_t layer) const {
  if (layer < 0 || layer >= layers())
    throw ShapeError("routing layer index out of range");
  return offsets_[static_cast<std::size_t>(layer)];
}

Tensor RoutingNetwork::logits(const Tensor& q) const {
  return fc_.forward(q);  // [N, total_gates]
}

Tensor RoutingNetwork::route(const Tensor& q, double tau,
                             RngStream& rng) const {
  Tensor noise = sample_logistic({q.dim(0), total_}, rng);
  return route_with_noise(q, noise, tau);
}

Tensor RoutingNetwork::route_with_noise(const Tensor& q, const Tensor& noise,
                                        double tau) const {
  Tensor soft = soft_gates(logits(q), noise, tau);
  return straight_through_threshold(soft, 0.5);
}

Tensor RoutingNetwork::deterministic_route(const Tensor& q) const {
  return straight_through_threshold(logits(q), 0.0);
}

Tensor RoutingNetwork::gate_slice(const Tensor& path, std::int64_t layer) const {
  if (path.shape().size() != 2 || path.dim(1) != total_)
    throw ShapeError("gate_slice: expected a flat [N, total_gates] path");
  return narrow(path, 1, layer_offset(layer), module_count(layer));
}

Tensor RoutingNetwork::as_grid(const Tensor& flat) const {
  for (std::int64_t c : counts_)
    if (c != counts_[0])
      throw ConfigError("as_grid requires a uniform module count per layer");
  return reshape(flat, {flat.dim(0), layers(), counts_[0]});
}

}  // namespace qroute
