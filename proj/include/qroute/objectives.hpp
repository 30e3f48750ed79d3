// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "qroute/tensor.hpp"

namespace qroute {

/// Loss contributed by a routing layer none of whose modules was
/// activated by any batch instance (the coefficient of variation is
/// undefined there). Large enough to dominate until the layer wakes up.
inline constexpr double kZeroLoadPenalty = 100.0;

/// Mean softmax cross-entropy of answer logits [N,K] against target
/// answer ids; out-of-range targets are rejected.
Tensor vqa_loss(const Tensor& logits, const std::vector<std::int64_t>& targets);

/// Per-module activation mass: paths [N, total_gates] summed over the
/// batch -> [total_gates]. Fed with straight-through gate values the
/// result stays differentiable, so the balance regularizer can reach
/// the routing logits; fed with hard binary gates it is the integer
/// activation count used for analysis.
Tensor module_load(const Tensor& paths);

struct LoadBalance {
  Tensor loss;                                // scalar
  std::vector<std::int64_t> zero_load_layers; // layers with zero total load
};

/// Sum over layers of the squared coefficient of variation (population
/// standard deviation over mean) of that layer's slice of the load
/// vector. `module_counts` carves the flat vector into layers. Layers
/// with zero mean load contribute `zero_penalty` each and are listed.
LoadBalance load_balance_loss(const Tensor& load,
                              const std::vector<std::int64_t>& module_counts,
                              double zero_penalty = kZeroLoadPenalty);

struct LossBreakdown {
  Tensor l_vqa;
  Tensor l_load;
  double lambda = 0.0;
  Tensor total;
};

/// total = l_vqa + lambda * l_load. Negative lambda is a configuration
/// error; scalars in, scalars out.
LossBreakdown total_loss(const Tensor& l_vqa, const Tensor& l_load,
                         double lambda);

}  // namespace qroute
