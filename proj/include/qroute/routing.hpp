// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "qroute/nn.hpp"

namespace qroute {

// Noise transforms, exposed on raw uniforms for direct testing.
/// Gumbel(0,1) variate from u in (0,1): -log(-log u).
double gumbel_from_uniform(double u);
/// Logistic(0,1) variate from u in (0,1): log u - log(1 - u); the
/// difference of two independent Gumbels has this law.
double logistic_from_uniform(double u);

double sample_gumbel(RngStream& rng);
double sample_logistic(RngStream& rng);
Tensor sample_gumbel(Shape shape, RngStream& rng);
Tensor sample_logistic(Shape shape, RngStream& rng);

/// Exact categorical draw by perturbing unnormalized log-weights with
/// Gumbel noise and taking the argmax.
std::int64_t gumbel_max_sample(std::span<const double> log_weights,
                               RngStream& rng);

/// Relaxed one-hot sample: softmax((g + log_pi) / tau) over the last
/// axis, g ~ Gumbel(0,1) elementwise rather than a hard argmax.
Tensor gumbel_softmax(const Tensor& log_pi, double tau, RngStream& rng);

/// Tempered concrete gates: sigmoid((noise + logits) / tau). With
/// logistic noise this relaxes the Bernoulli whose log-odds are the
/// logits; thresholding the result at 1/2 recovers exact Bernoulli
/// samples for every tau.
Tensor soft_gates(const Tensor& logits, const Tensor& noise, double tau);

/// Question-conditioned binary routing over the gated layers of the
/// visual backbone. Layer l owns module_counts[l] gates; paths are
/// stored flat as [N, total_gates] with layers laid out consecutively,
/// which accommodates backbones whose module count varies per layer.
/// A single affine layer maps the question encoding to per-gate logits;
/// its bias starts at log(0.7/0.3), a mild prior toward executing
/// modules early in training.
class RoutingNetwork {
public:
  RoutingNetwork(ParamRegistry& reg, const std::string& prefix,
                 std::int64_t q_dim, std::vector<std::int64_t> module_counts,
                 RngStream& rng);
  /// Uniform grid of `layers` x `modules` gates.
  RoutingNetwork(ParamRegistry& reg, const std::string& prefix,
                 std::int64_t q_dim, std::int64_t layers,
                 std::int64_t modules, RngStream& rng);

  std::int64_t layers() const {
    return static_cast<std::int64_t>(counts_.size());
  }
  std::int64_t module_count(std::int64_t layer) const;
  const std::vector<std::int64_t>& module_counts() const { return counts_; }
  std::int64_t total_gates() const { return total_; }
  /// Offset of layer l's first gate within a flat path row.
  std::int64_t layer_offset(std::int64_t layer) const;

  /// Per-gate logits [N, total_gates] from question encodings [N, q_dim].
  Tensor logits(const Tensor& q) const;

  /// Sampled binary path [N, total_gates] with straight-through
  /// gradients: forward values are exactly 0/1, backward flows through
  /// the soft gates. Noise is one logistic draw per gate.
  Tensor route(const Tensor& q, double tau, RngStream& rng) const;

  /// Same, with caller-provided noise (testing and reproducibility).
  Tensor route_with_noise(const Tensor& q, const Tensor& noise,
                          double tau) const;

  /// Noise-free evaluation path: 1 where the logit is strictly
  /// positive, equivalently where sigmoid(logit) > 1/2.
  Tensor deterministic_route(const Tensor& q) const;

  /// Layer l's columns of a flat [N, total_gates] path: [N, counts[l]].
  Tensor gate_slice(const Tensor& path, std::int64_t layer) const;

  /// Reshape a flat tensor to [N, L, M]; requires a uniform grid.
  Tensor as_grid(const Tensor& flat) const;

  static double default_bias_init();

private:
  Linear fc_;
  std::vector<std::int64_t> counts_;
  std::vector<std::int64_t> offsets_;  // counts_.size() + 1 entries
  std::int64_t total_ = 0;
};

}  // namespace qroute
