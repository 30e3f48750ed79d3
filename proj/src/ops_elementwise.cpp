// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "ops_common.hpp"

namespace qroute {

using detail::check_same_shape;
using detail::make_out;

namespace {

// Shared scaffolding for unary f(x) with backward dy * dfdx(x, y).
template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& x, const char* /*name*/, Fwd fwd, Bwd bwd) {
  bool traced = tracing({&x});
  Tensor out = make_out(x.shape(), traced);
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = fwd(xd[i]);
  if (traced) {
    auto xn = x.node();
    auto on = out.node();
    Tape::current()->push([xn, on, bwd] {
      if (on->grad.empty() || !xn->requires_grad) return;
      ensure_grad(*xn);
      for (std::size_t i = 0; i < xn->values.size(); ++i)
        xn->grad[i] += on->grad[i] * bwd(xn->values[i], on->values[i]);
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  bool traced = tracing({&a, &b});
  Tensor out = make_out(a.shape(), traced);
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] + bd[i];
  if (traced) {
    auto an = a.node();
    auto bn = b.node();
    auto on = out.node();
    Tape::current()->push([an, bn, on] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        ensure_grad(*an);
        for (std::size_t i = 0; i < an->grad.size(); ++i)
          an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        ensure_grad(*bn);
        for (std::size_t i = 0; i < bn->grad.size(); ++i)
          bn->grad[i] += on->grad[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  bool traced = tracing({&a, &b});
  Tensor out = make_out(a.shape(), traced);
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] - bd[i];
  if (traced) {
    auto an = a.node();
    auto bn = b.node();
    auto on = out.node();
    Tape::current()->push([an, bn, on] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        ensure_grad(*an);
        for (std::size_t i = 0; i < an->grad.size(); ++i)
          an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        ensure_grad(*bn);
        for (std::size_t i = 0; i < bn->grad.size(); ++i)
          bn->grad[i] -= on->grad[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  bool traced = tracing({&a, &b});
  Tensor out = make_out(a.shape(), traced);
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * bd[i];
  if (traced) {
    auto an = a.node();
    auto bn = b.node();
    auto on = out.node();
    Tape::current()->push([an, bn, on] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        ensure_grad(*an);
        for (std::size_t i = 0; i < an->grad.size(); ++i)
          an->grad[i] += on->grad[i] * bn->values[i];
      }
      if (bn->requires_grad) {
        ensure_grad(*bn);
        for (std::size_t i = 0; i < bn->grad.size(); ++i)
          bn->grad[i] += on->grad[i] * an->values[i];
      }
    });
  }
  return out;
}

Tensor neg(const Tensor& x) {
  return unary_op(
      x, "neg", [](double v) { return -v; },
      [](double, double) { return -1.0; });
}

Tensor scalar_mul(const Tensor& x, double s) {
  return unary_op(
      x, "scalar_mul", [s](double v) { return v * s; },
      [s](double, double) { return s; });
}

Tensor scalar_add(const Tensor& x, double s) {
  return unary_op(
      x, "scalar_add", [s](double v) { return v + s; },
      [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, "sigmoid",
      [](double v) {
        // Branch on sign so neither exp overflows.
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, "exp", [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary_op(
      x, "log", [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor square(const Tensor& x) {
  return unary_op(
      x, "square", [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

Tensor straight_through_threshold(const Tensor& x, double threshold) {
  bool traced = tracing({&x});
  Tensor out = make_out(x.shape(), traced);
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i)
    od[i] = xd[i] > threshold ? 1.0 : 0.0;
  if (traced) {
    auto xn = x.node();
    auto on = out.node();
    Tape::current()->push([xn, on] {
      if (on->grad.empty() || !xn->requires_grad) return;
      ensure_grad(*xn);
      for (std::size_t i = 0; i < xn->grad.size(); ++i)
        xn->grad[i] += on->grad[i];
    });
  }
  return out;
}

Tensor detach(const Tensor& x) {
  return Tensor::from_data(x.shape(),
                           std::vector<double>(x.data().begin(), x.data().end()),
                           /*requires_grad=*/false);
}

std::vector<std::int64_t> argmax_rows(const Tensor& x) {
  detail::check(x.ndim() == 2, "argmax_rows expects [N,K]");
  std::int64_t n = x.dim(0), k = x.dim(1);
  std::vector<std::int64_t> out(static_cast<std::size_t>(n));
  auto xd = x.data();
  for (std::int64_t i = 0; i < n; ++i) {
    const double* row = xd.data() + i * k;
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < k; ++j)
      if (row[j] > row[best]) best = j;
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

}  // namespace qroute
