// SPDX-License-Identifier: Apache-2.0
#include "qroute/objectives.hpp"

#include "qroute/errors.hpp"
#include "qroute/ops.hpp"

namespace qroute {

Tensor vqa_loss(const Tensor& logits,
                const std::vector<std::int64_t>& targets) {
  return cross_entropy(logits, targets);
}

Tensor module_load(const Tensor& paths) {
  if (paths.shape().size() != 2) {
    throw ShapeError("module_load expects paths of shape [batch, gates]");
  }
  if (paths.dim(0) < 1) {
    throw ShapeError("module_load needs a non-empty batch");
  }
  return sum_axis(paths, 0);
}

LoadBalance load_balance_loss(const Tensor& load,
                              const std::vector<std::int64_t>& module_counts,
                              double zero_penalty) {
  if (load.shape().size() != 1) {
    throw ShapeError("load_balance_loss expects a flat load vector");
  }
  if (module_counts.empty()) {
    throw ConfigError("load_balance_loss needs at least one layer");
  }
  std::int64_t total = 0;
  for (std::int64_t m : module_counts) {
    if (m <= 0) throw ConfigError("module counts must be positive");
    total += m;
  }
  if (total != load.dim(0)) {
    throw ShapeError("module counts do not add up to the load vector length");
  }

  LoadBalance out;
  Tensor row = reshape(load, {1, total});
  std::vector<Tensor> terms;
  terms.reserve(module_counts.size());
  std::int64_t offset = 0;
  for (std::size_t l = 0; l < module_counts.size(); ++l) {
    const std::int64_t m = module_counts[l];
    Tensor slice = narrow(row, 1, offset, m);
    terms.push_back(cv_squared_rows(slice, zero_penalty));
    // Mirror the operator's zero test: mean of the slice exactly zero.
    double mu = 0.0;
    for (std::int64_t j = 0; j < m; ++j)
      mu += load.data()[static_cast<std::size_t>(offset + j)];
    if (mu / static_cast<double>(m) == 0.0) {
      out.zero_load_layers.push_back(static_cast<std::int64_t>(l));
    }
    offset += m;
  }
  out.loss = sum(concat(terms, 0));
  return out;
}

LossBreakdown total_loss(const Tensor& l_vqa, const Tensor& l_load,
                         double lambda) {
  if (lambda < 0.0) {
    throw ConfigError("the load-balancing coefficient must be non-negative");
  }
  if (l_vqa.numel() != 1 || l_load.numel() != 1) {
    throw ShapeError("total_loss combines scalar loss terms");
  }
  LossBreakdown b;
  b.l_vqa = l_vqa;
  b.l_load = l_load;
  b.lambda = lambda;
  b.total = add(l_vqa, scalar_mul(l_load, lambda));
  return b;
}

}  // namespace qroute
