// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "ops_common.hpp"

namespace qroute {

using detail::axis_strides;
using detail::check;
using detail::make_out;
using detail::normalize_axis;

Tensor sum(const Tensor& x) {
  bool traced = tracing({&x});
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::scalar(acc, traced);
  if (traced) {
    auto xn = x.node();
    auto on = out.node();
    Tape::current()->push([xn, on] {
      if (on->grad.empty() || !xn->requires_grad) return;
      ensure_grad(*xn);
      double g = on->grad[0];
      for (double& gi : xn->grad) gi += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  check(x.numel() > 0, "mean of empty tensor");
  bool traced = tracing({&x});
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  double inv = 1.0 / static_cast<double>(x.numel());
  Tensor out = Tensor::scalar(acc * inv, traced);
  if (traced) {
    auto xn = x.node();
    auto on = out.node();
    Tape::current()->push([xn, on, inv] {
      if (on->grad.empty() || !xn->requires_grad) return;
      ensure_grad(*xn);
      double g = on->grad[0] * inv;
      for (double& gi : xn->grad) gi += g;
    });
  }
  return out;
}

Tensor sum_axis(const Tensor& x, int axis) {
  axis = normalize_axis(axis, x.ndim(), "sum_axis");
  std::int64_t outer, len, inner;
  axis_strides(x.shape(), axis, outer, len, inner);
  Shape oshape;
  for (int i = 0; i < x.ndim(); ++i)
    if (i != axis) oshape.push_back(x.dim(i));
  bool traced = tracing({&x});
  Tensor out = make_out(std::move(oshape), traced);
  auto xd = x.data();
  auto od = out.data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t a = 0; a < len; ++a) {
      const double* src = xd.data() + (o * len + a) * inner;
      double* dst = od.data() + o * inner;
      for (std::int64_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  if (traced) {
    auto xn = x.node();
    auto on = out.node();
    Tape::current()->push([xn, on, outer, len, inner] {
      if (on->grad.empty() || !xn->requires_grad) return;
      ensure_grad(*xn);
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t a = 0; a < len; ++a) {
          double* dst = xn->grad.data() + (o * len + a) * inner;
          const double* src = on->grad.data() + o * inner;
          for (std::int64_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  axis = normalize_axis(axis, x.ndim(), "softmax");
  std::int64_t outer, len, inner;
  axis_strides(x.shape(), axis, outer, len, inner);
  bool traced = tracing({&x});
  Tensor out = make_out(x.shape(), traced);
  auto xd = x.data();
  auto od = out.data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t i = 0; i < inner; ++i) {
      const double* src = xd.data() + o * len * inner + i;
      double* dst = od.data() + o * len * inner + i;
      double mx = src[0];
      for (std::int64_t a = 1; a < len; ++a)
        mx = std::max(mx, src[a * inner]);
      double z = 0.0;
      for (std::int64_t a = 0; a < len; ++a) {
        double e = std::exp(src[a * inner] - mx);
        dst[a * inner] = e;
        z += e;
      }
      double invz = 1.0 / z;
      for (std::int64_t a = 0; a < len; ++a) dst[a * inner] *= invz;
    }
  if (traced) {
    auto xn = x.node();
    auto on = out.node();
    Tape::current()->push([xn, on, outer, len, inner] {
      if (on->grad.empty() || !xn->requires_grad) return;
      ensure_grad(*xn);
      // dx = y * (dy - sum(dy * y)) per softmax fiber.
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < inner; ++i) {
          const double* y = on->values.data() + o * len * inner + i;
          const double* dy = on->grad.data() + o * len * inner + i;
          double* dx = xn->grad.data() + o * len * inner + i;
          double dot = 0.0;
          for (std::int64_t a = 0; a < len; ++a)
            dot += dy[a * inner] * y[a * inner];
          for (std::int64_t a = 0; a < len; ++a)
            dx[a * inner] += y[a * inner] * (dy[a * inner] - dot);
        }
    });
  }
  return out;
}

Tensor cv_squared_rows(const Tensor& a, double zero_penalty) {
  check(a.ndim() == 2, "cv_squared_rows expects [L,M]");
  std::int64_t rows = a.dim(0), m = a.dim(1);
  bool traced = tracing({&a});
  Tensor out = make_out({rows}, traced);
  auto ad = a.data();
  auto od = out.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = ad.data() + r * m;
    double mu = 0.0, sq = 0.0;
    for (std::int64_t j = 0; j < m; ++j) {
      mu += row[j];
      sq += row[j] * row[j];
    }
    mu /= static_cast<double>(m);
    sq /= static_cast<double>(m);
    od[r] = (mu == 0.0) ? zero_penalty : sq / (mu * mu) - 1.0;
  }
  if (traced) {
    auto an = a.node();
    auto on = out.node();
    Tape::current()->push([an, on, rows, m] {
      if (on->grad.empty() || !an->requires_grad) return;
      ensure_grad(*an);
      for (std::int64_t r = 0; r < rows; ++r) {
        double g = on->grad[static_cast<std::size_t>(r)];
        if (g == 0.0) continue;
        const double* row = an->values.data() + r * m;
        double* drow = an->grad.data() + r * m;
        double mu = 0.0, sq = 0.0;
        for (std::int64_t j = 0; j < m; ++j) {
          mu += row[j];
          sq += row[j] * row[j];
        }
        mu /= static_cast<double>(m);
        sq /= static_cast<double>(m);
        if (mu == 0.0) continue;  // constant penalty, no gradient
        // d(E[a^2]/mu^2 - 1)/da_j = 2/(M mu^2) * (a_j - E[a^2]/mu)
        double c = 2.0 / (static_cast<double>(m) * mu * mu);
        double t = sq / mu;
        for (std::int64_t j = 0; j < m; ++j) drow[j] += g * c * (row[j] - t);
      }
    });
  }
  return out;
}

}  // namespace qroute
