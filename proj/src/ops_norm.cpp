// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "ops_common.hpp"

namespace qroute {

using detail::check;
using detail::make_out;

Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    Tensor& running_mean, Tensor& running_var, double eps,
                    double momentum, bool train) {
  check(x.ndim() == 4, "batch_norm2d expects [N,C,H,W]");
  std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  check(gamma.ndim() == 1 && gamma.dim(0) == c, "batch_norm2d: bad gamma");
  check(beta.ndim() == 1 && beta.dim(0) == c, "batch_norm2d: bad beta");
  check(running_mean.dim(0) == c && running_var.dim(0) == c,
        "batch_norm2d: bad running stats");
  std::int64_t m = n * hw;

  std::vector<double> mean_v(static_cast<std::size_t>(c));
  std::vector<double> invstd_v(static_cast<std::size_t>(c));
  auto xd = x.data();
  if (train) {
    for (std::int64_t ci = 0; ci < c; ++ci) {
      double mu = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const double* src = xd.data() + (i * c + ci) * hw;
        for (std::int64_t p = 0; p < hw; ++p) mu += src[p];
      }
      mu /= static_cast<double>(m);
      double var = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const double* src = xd.data() + (i * c + ci) * hw;
        for (std::int64_t p = 0; p < hw; ++p) {
          double d = src[p] - mu;
          var += d * d;
        }
      }
      var /= static_cast<double>(m);
      mean_v[static_cast<std::size_t>(ci)] = mu;
      invstd_v[static_cast<std::size_t>(ci)] = 1.0 / std::sqrt(var + eps);
      running_mean.data()[ci] =
          (1.0 - momentum) * running_mean.data()[ci] + momentum * mu;
      running_var.data()[ci] =
          (1.0 - momentum) * running_var.data()[ci] + momentum * var;
    }
  } else {
    for (std::int64_t ci = 0; ci < c; ++ci) {
      mean_v[static_cast<std::size_t>(ci)] = running_mean.data()[ci];
      invstd_v[static_cast<std::size_t>(ci)] =
          1.0 / std::sqrt(running_var.data()[ci] + eps);
    }
  }

  bool traced = tracing({&x, &gamma, &beta});
  Tensor out = make_out(x.shape(), traced);
  auto od = out.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t ci = 0; ci < c; ++ci) {
      const double* src = xd.data() + (i * c + ci) * hw;
      double* dst = od.data() + (i * c + ci) * hw;
      double mu = mean_v[static_cast<std::size_t>(ci)];
      double is = invstd_v[static_cast<std::size_t>(ci)];
      double g = gd[ci], b = bd[ci];
      for (std::int64_t p = 0; p < hw; ++p)
        dst[p] = (src[p] - mu) * is * g + b;
    }

  if (traced) {
    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    auto on = out.node();
    Tape::current()->push([xn, gn, bn, on, mean_v = std::move(mean_v),
                           invstd_v = std::move(invstd_v), n, c, hw, m,
                           train] {
      if (on->grad.empty()) return;
      for (std::int64_t ci = 0; ci < c; ++ci) {
        double mu = mean_v[static_cast<std::size_t>(ci)];
        double is = invstd_v[static_cast<std::size_t>(ci)];
        double gamma_v = gn->values[static_cast<std::size_t>(ci)];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
          const double* dy = on->grad.data() + (i * c + ci) * hw;
          const double* xv = xn->values.data() + (i * c + ci) * hw;
          for (std::int64_t p = 0; p < hw; ++p) {
            sum_dy += dy[p];
            sum_dy_xhat += dy[p] * (xv[p] - mu) * is;
          }
        }
        if (gn->requires_grad) {
          ensure_grad(*gn);
          gn->grad[static_cast<std::size_t>(ci)] += sum_dy_xhat;
        }
        if (bn->requires_grad) {
          ensure_grad(*bn);
          bn->grad[static_cast<std::size_t>(ci)] += sum_dy;
        }
        if (xn->requires_grad) {
          ensure_grad(*xn);
          if (train) {
            double inv_m = 1.0 / static_cast<double>(m);
            for (std::int64_t i = 0; i < n; ++i) {
              const double* dy = on->grad.data() + (i * c + ci) * hw;
              const double* xv = xn->values.data() + (i * c + ci) * hw;
              double* dx = xn->grad.data() + (i * c + ci) * hw;
              for (std::int64_t p = 0; p < hw; ++p) {
                double xhat = (xv[p] - mu) * is;
                dx[p] += gamma_v * is *
                         (dy[p] - inv_m * sum_dy - xhat * inv_m * sum_dy_xhat);
              }
            }
          } else {
            // Running stats are constants; the map is affine per element.
            for (std::int64_t i = 0; i < n; ++i) {
              const double* dy = on->grad.data() + (i * c + ci) * hw;
              double* dx = xn->grad.data() + (i * c + ci) * hw;
              for (std::int64_t p = 0; p < hw; ++p)
                dx[p] += gamma_v * is * dy[p];
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  int groups, double eps) {
  check(x.ndim() == 4, "group_norm expects [N,C,H,W]");
  std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  check(groups >= 1 && c % groups == 0,
        "group_norm: channels must divide evenly into groups");
  check(gamma.ndim() == 1 && gamma.dim(0) == c, "group_norm: bad gamma");
  check(beta.ndim() == 1 && beta.dim(0) == c, "group_norm: bad beta");
  std::int64_t cpg = c / groups;
  std::int64_t gsize = cpg * hw;

  std::vector<double> mean_v(static_cast<std::size_t>(n * groups));
  std::vector<double> invstd_v(static_cast<std::size_t>(n * groups));
  auto xd = x.data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t g = 0; g < groups; ++g) {
      const double* src = xd.data() + (i * c + g * cpg) * hw;
      double mu = 0.0;
      for (std::int64_t p = 0; p < gsize; ++p) mu += src[p];
      mu /= static_cast<double>(gsize);
      double var = 0.0;
      for (std::int64_t p = 0; p < gsize; ++p) {
        double d = src[p] - mu;
        var += d * d;
      }
      var /= static_cast<double>(gsize);
      mean_v[static_cast<std::size_t>(i * groups + g)] = mu;
      invstd_v[static_cast<std::size_t>(i * groups + g)] =
          1.0 / std::sqrt(var + eps);
    }

  bool traced = tracing({&x, &gamma, &beta});
  Tensor out = make_out(x.shape(), traced);
  auto od = out.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t ci = 0; ci < c; ++ci) {
      std::int64_t g = ci / cpg;
      double mu = mean_v[static_cast<std::size_t>(i * groups + g)];
      double is = invstd_v[static_cast<std::size_t>(i * groups + g)];
      const double* src = xd.data() + (i * c + ci) * hw;
      double* dst = od.data() + (i * c + ci) * hw;
      for (std::int64_t p = 0; p < hw; ++p)
        dst[p] = (src[p] - mu) * is * gd[ci] + bd[ci];
    }

  if (traced) {
    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    auto on = out.node();
    Tape::current()->push([xn, gn, bn, on, mean_v = std::move(mean_v),
                           invstd_v = std::move(invstd_v), n, c, hw, groups,
                           cpg, gsize] {
      if (on->grad.empty()) return;
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t g = 0; g < groups; ++g) {
          double mu = mean_v[static_cast<std::size_t>(i * groups + g)];
          double is = invstd_v[static_cast<std::size_t>(i * groups + g)];
          // dx needs group sums of dxhat and dxhat*xhat, where
          // dxhat = dy * gamma_c varies per channel within the group.
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (std::int64_t cc = 0; cc < cpg; ++cc) {
            std::int64_t ci = g * cpg + cc;
            double gamma_v = gn->values[static_cast<std::size_t>(ci)];
            const double* dy = on->grad.data() + (i * c + ci) * hw;
            const double* xv = xn->values.data() + (i * c + ci) * hw;
            for (std::int64_t p = 0; p < hw; ++p) {
              double dxh = dy[p] * gamma_v;
              sum_dxhat += dxh;
              sum_dxhat_xhat += dxh * (xv[p] - mu) * is;
            }
          }
          double inv_g = 1.0 / static_cast<double>(gsize);
          for (std::int64_t cc = 0; cc < cpg; ++cc) {
            std::int64_t ci = g * cpg + cc;
            double gamma_v = gn->values[static_cast<std::size_t>(ci)];
            const double* dy = on->grad.data() + (i * c + ci) * hw;
            const double* xv = xn->values.data() + (i * c + ci) * hw;
            if (gn->requires_grad || bn->requires_grad) {
              double sdy = 0.0, sdyx = 0.0;
              for (std::int64_t p = 0; p < hw; ++p) {
                sdy += dy[p];
                sdyx += dy[p] * (xv[p] - mu) * is;
              }
              if (gn->requires_grad) {
                ensure_grad(*gn);
                gn->grad[static_cast<std::size_t>(ci)] += sdyx;
              }
              if (bn->requires_grad) {
                ensure_grad(*bn);
                bn->grad[static_cast<std::size_t>(ci)] += sdy;
              }
            }
            if (xn->requires_grad) {
              ensure_grad(*xn);
              double* dx = xn->grad.data() + (i * c + ci) * hw;
              for (std::int64_t p = 0; p < hw; ++p) {
                double xhat = (xv[p] - mu) * is;
                double dxh = dy[p] * gamma_v;
                dx[p] += is * (dxh - inv_g * sum_dxhat -
                               xhat * inv_g * sum_dxhat_xhat);
              }
            }
          }
        }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  check(x.ndim() >= 1, "layer_norm expects rank >= 1");
  std::int64_t d = x.dim(-1);
  check(gamma.ndim() == 1 && gamma.dim(0) == d, "layer_norm: bad gamma");
  check(beta.ndim() == 1 && beta.dim(0) == d, "layer_norm: bad beta");
  std::int64_t rows = x.numel() / d;

  std::vector<double> mean_v(static_cast<std::size_t>(rows));
  std::vector<double> invstd_v(static_cast<std::size_t>(rows));
  auto xd = x.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* src = xd.data() + r * d;
    double mu = 0.0;
    for (std::int64_t j = 0; j < d; ++j) mu += src[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      double dv = src[j] - mu;
      var += dv * dv;
    }
    var /= static_cast<double>(d);
    mean_v[static_cast<std::size_t>(r)] = mu;
    invstd_v[static_cast<std::size_t>(r)] = 1.0 / std::sqrt(var + eps);
  }

  bool traced = tracing({&x, &gamma, &beta});
  Tensor out = make_out(x.shape(), traced);
  auto od = out.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* src = xd.data() + r * d;
    double* dst = od.data() + r * d;
    double mu = mean_v[static_cast<std::size_t>(r)];
    double is = invstd_v[static_cast<std::size_t>(r)];
    for (std::int64_t j = 0; j < d; ++j)
      dst[j] = (src[j] - mu) * is * gd[j] + bd[j];
  }

  if (traced) {
    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    auto on = out.node();
    Tape::current()->push([xn, gn, bn, on, mean_v = std::move(mean_v),
                           invstd_v = std::move(invstd_v), rows, d] {
      if (on->grad.empty()) return;
      double inv_d = 1.0 / static_cast<double>(d);
      for (std::int64_t r = 0; r < rows; ++r) {
        double mu = mean_v[static_cast<std::size_t>(r)];
        double is = invstd_v[static_cast<std::size_t>(r)];
        const double* dy = on->grad.data() + r * d;
        const double* xv = xn->values.data() + r * d;
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
          double dxh = dy[j] * gn->values[static_cast<std::size_t>(j)];
          sum_dxhat += dxh;
          sum_dxhat_xhat += dxh * (xv[j] - mu) * is;
        }
        if (gn->requires_grad || bn->requires_grad) {
          if (gn->requires_grad) ensure_grad(*gn);
          if (bn->requires_grad) ensure_grad(*bn);
          for (std::int64_t j = 0; j < d; ++j) {
            double xhat = (xv[j] - mu) * is;
            if (gn->requires_grad)
              gn->grad[static_cast<std::size_t>(j)] += dy[j] * xhat;
            if (bn->requires_grad)
              bn->grad[static_cast<std::size_t>(j)] += dy[j];
          }
        }
        if (xn->requires_grad) {
          ensure_grad(*xn);
          double* dx = xn->grad.data() + r * d;
          for (std::int64_t j = 0; j < d; ++j) {
            double xhat = (xv[j] - mu) * is;
            double dxh = dy[j] * gn->values[static_cast<std::size_t>(j)];
            dx[j] +=
                is * (dxh - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
          }
        }
      }
    });
  }
  return out;
}

}  // namespace qroute
