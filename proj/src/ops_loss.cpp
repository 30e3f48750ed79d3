// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "ops_common.hpp"

namespace qroute {

using detail::check;

Tensor cross_entropy(const Tensor& logits,
                     const std::vector<std::int64_t>& targets) {
  check(logits.ndim() == 2, "cross_entropy expects logits [N,K]");
  std::int64_t n = logits.dim(0), k = logits.dim(1);
  check(static_cast<std::int64_t>(targets.size()) == n,
        "cross_entropy: target count mismatch");
  for (std::int64_t t : targets)
    check(t >= 0 && t < k, "cross_entropy: target out of range");

  bool traced = tracing({&logits});
  auto xd = logits.data();
  // Cache the probabilities for the backward pass; K is small.
  std::vector<double> probs(static_cast<std::size_t>(n * k));
  double loss = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double* row = xd.data() + i * k;
    double* prow = probs.data() + i * k;
    double mx = row[0];
    for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::int64_t j = 0; j < k; ++j) {
      prow[j] = std::exp(row[j] - mx);
      z += prow[j];
    }
    double invz = 1.0 / z;
    for (std::int64_t j = 0; j < k; ++j) prow[j] *= invz;
    loss -= (row[targets[static_cast<std::size_t>(i)]] - mx) - std::log(z);
  }
  loss /= static_cast<double>(n);
  Tensor out = Tensor::scalar(loss, traced);

  if (traced) {
    auto xn = logits.node();
    auto on = out.node();
    Tape::current()->push(
        [xn, on, probs = std::move(probs), targets, n, k] {
          if (on->grad.empty() || !xn->requires_grad) return;
          ensure_grad(*xn);
          double g = on->grad[0] / static_cast<double>(n);
          for (std::int64_t i = 0; i < n; ++i) {
            const double* prow = probs.data() + i * k;
            double* dx = xn->grad.data() + i * k;
            std::int64_t t = targets[static_cast<std::size_t>(i)];
            for (std::int64_t j = 0; j < k; ++j)
              dx[j] += g * (prow[j] - (j == t ? 1.0 : 0.0));
          }
        });
  }
  return out;
}

}  // namespace qroute
