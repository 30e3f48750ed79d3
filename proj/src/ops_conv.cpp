// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Core>
#include <algorithm>
#include <limits>

#include "ops_common.hpp"

namespace qroute {

using detail::check;
using detail::make_out;

namespace {

using Mat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<Mat>;
using MapC = Eigen::Map<const Mat>;

std::int64_t out_extent(std::int64_t in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

// Scratch for im2col matrices; reused across calls to avoid allocator
// churn in the per-image GEMM loop.
thread_local std::vector<double> g_cols;

// x_img: one image [C,H,W]. Fills cols [C*kh*kw, OH*OW] row-major.
void im2col(const double* x_img, std::int64_t c, std::int64_t h,
            std::int64_t w, int kernel, int stride, int pad, std::int64_t oh,
            std::int64_t ow, double* cols) {
  for (std::int64_t ci = 0; ci < c; ++ci)
    for (int ki = 0; ki < kernel; ++ki)
      for (int kj = 0; kj < kernel; ++kj) {
        double* row = cols + ((ci * kernel + ki) * kernel + kj) * (oh * ow);
        for (std::int64_t i = 0; i < oh; ++i) {
          std::int64_t ih = i * stride - pad + ki;
          if (ih < 0 || ih >= h) {
            std::fill(row + i * ow, row + (i + 1) * ow, 0.0);
            continue;
          }
          const double* src = x_img + (ci * h + ih) * w;
          for (std::int64_t j = 0; j < ow; ++j) {
            std::int64_t iw = j * stride - pad + kj;
            row[i * ow + j] = (iw < 0 || iw >= w) ? 0.0 : src[iw];
          }
        }
      }
}

// Scatter-add of dcols (same layout as im2col output) back into dx_img.
void col2im_acc(const double* dcols, std::int64_t c, std::int64_t h,
                std::int64_t w, int kernel, int stride, int pad,
                std::int64_t oh, std::int64_t ow, double* dx_img) {
  for (std::int64_t ci = 0; ci < c; ++ci)
    for (int ki = 0; ki < kernel; ++ki)
      for (int kj = 0; kj < kernel; ++kj) {
        const double* row =
            dcols + ((ci * kernel + ki) * kernel + kj) * (oh * ow);
        for (std::int64_t i = 0; i < oh; ++i) {
          std::int64_t ih = i * stride - pad + ki;
          if (ih < 0 || ih >= h) continue;
          double* dst = dx_img + (ci * h + ih) * w;
          for (std::int64_t j = 0; j < ow; ++j) {
            std::int64_t iw = j * stride - pad + kj;
            if (iw >= 0 && iw < w) dst[iw] += row[i * ow + j];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad) {
  check(x.ndim() == 4 && w.ndim() == 4, "conv2d expects x [N,C,H,W], w [O,C,kh,kw]");
  check(w.dim(2) == w.dim(3), "conv2d: square kernels only");
  check(x.dim(1) == w.dim(1), "conv2d: channel mismatch");
  check(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  std::int64_t o = w.dim(0);
  int kernel = static_cast<int>(w.dim(2));
  std::int64_t oh = out_extent(h, kernel, stride, pad);
  std::int64_t ow = out_extent(wd, kernel, stride, pad);
  check(oh >= 1 && ow >= 1, "conv2d: kernel larger than padded input");
  if (b.defined()) check(b.ndim() == 1 && b.dim(0) == o, "conv2d: bad bias");

  bool traced = b.defined() ? tracing({&x, &w, &b}) : tracing({&x, &w});
  Tensor out = make_out({n, o, oh, ow}, traced);
  std::int64_t krows = c * kernel * kernel;
  std::int64_t opix = oh * ow;
  g_cols.resize(static_cast<std::size_t>(krows * opix));

  MapC wm(w.data().data(), o, krows);
  for (std::int64_t i = 0; i < n; ++i) {
    im2col(x.data().data() + i * c * h * wd, c, h, wd, kernel, stride, pad, oh,
           ow, g_cols.data());
    MapC cm(g_cols.data(), krows, opix);
    MapM om(out.data().data() + i * o * opix, o, opix);
    om.noalias() = wm * cm;
  }
  if (b.defined()) {
    auto bd = b.data();
    auto od = out.data();
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t f = 0; f < o; ++f) {
        double* dst = od.data() + (i * o + f) * opix;
        double bv = bd[f];
        for (std::int64_t p = 0; p < opix; ++p) dst[p] += bv;
      }
  }

  if (traced) {
    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.defined() ? b.node() : nullptr;
    auto on = out.node();
    Tape::current()->push(
        [xn, wn, bn, on, n, c, h, wd, o, kernel, stride, pad, oh, ow, krows,
         opix] {
          if (on->grad.empty()) return;
          // Columns are recomputed rather than cached; im2col is cheap
          // next to the GEMMs and the tape stays light.
          std::vector<double> cols(static_cast<std::size_t>(krows * opix));
          std::vector<double> dcols;
          MapC wm(wn->values.data(), o, krows);
          for (std::int64_t i = 0; i < n; ++i) {
            MapC g(on->grad.data() + i * o * opix, o, opix);
            if (wn->requires_grad) {
              ensure_grad(*wn);
              im2col(xn->values.data() + i * c * h * wd, c, h, wd, kernel,
                     stride, pad, oh, ow, cols.data());
              MapC cm(cols.data(), krows, opix);
              MapM dw(wn->grad.data(), o, krows);
              dw.noalias() += g * cm.transpose();
            }
            if (xn->requires_grad) {
              ensure_grad(*xn);
              dcols.resize(static_cast<std::size_t>(krows * opix));
              MapM dcm(dcols.data(), krows, opix);
              dcm.noalias() = wm.transpose() * g;
              col2im_acc(dcols.data(), c, h, wd, kernel, stride, pad, oh, ow,
                         xn->grad.data() + i * c * h * wd);
            }
          }
          if (bn && bn->requires_grad) {
            ensure_grad(*bn);
            for (std::int64_t i = 0; i < n; ++i)
              for (std::int64_t f = 0; f < o; ++f) {
                const double* src = on->grad.data() + (i * o + f) * opix;
                double acc = 0.0;
                for (std::int64_t p = 0; p < opix; ++p) acc += src[p];
                bn->grad[static_cast<std::size_t>(f)] += acc;
              }
          }
        });
  }
  return out;
}

Tensor maxpool2d(const Tensor& x, int kernel, int stride) {
  check(x.ndim() == 4, "maxpool2d expects [N,C,H,W]");
  check(kernel >= 1 && stride >= 1, "maxpool2d: bad kernel/stride");
  std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  std::int64_t oh = out_extent(h, kernel, stride, 0);
  std::int64_t ow = out_extent(w, kernel, stride, 0);
  check(oh >= 1 && ow >= 1, "maxpool2d: window larger than input");
  bool traced = tracing({&x});
  Tensor out = make_out({n, c, oh, ow}, traced);
  auto xd = x.data();
  auto od = out.data();
  // argmax as flat index into the [H,W] plane; first max wins, so ties
  // resolve deterministically.
  std::vector<std::int64_t> arg(static_cast<std::size_t>(n * c * oh * ow));
  for (std::int64_t nc = 0; nc < n * c; ++nc) {
    const double* plane = xd.data() + nc * h * w;
    for (std::int64_t i = 0; i < oh; ++i)
      for (std::int64_t j = 0; j < ow; ++j) {
        double best = -std::numeric_limits<double>::infinity();
        std::int64_t bi = 0;
        for (int ki = 0; ki < kernel; ++ki)
          for (int kj = 0; kj < kernel; ++kj) {
            std::int64_t ih = i * stride + ki, iw = j * stride + kj;
            if (ih >= h || iw >= w) continue;
            double v = plane[ih * w + iw];
            if (v > best) {
              best = v;
              bi = ih * w + iw;
            }
          }
        od[static_cast<std::size_t>((nc * oh + i) * ow + j)] = best;
        arg[static_cast<std::size_t>((nc * oh + i) * ow + j)] = bi;
      }
  }
  if (traced) {
    auto xn = x.node();
    auto on = out.node();
    std::int64_t hw = h * w, ohw = oh * ow;
    Tape::current()->push([xn, on, arg = std::move(arg), n, c, hw, ohw] {
      if (on->grad.empty() || !xn->requires_grad) return;
      ensure_grad(*xn);
      for (std::int64_t nc = 0; nc < n * c; ++nc) {
        double* dst = xn->grad.data() + nc * hw;
        const double* src = on->grad.data() + nc * ohw;
        const std::int64_t* a = arg.data() + nc * ohw;
        for (std::int64_t p = 0; p < ohw; ++p) dst[a[p]] += src[p];
      }
    });
  }
  return out;
}

Tensor global_max_pool(const Tensor& x) {
  check(x.ndim() == 4, "global_max_pool expects [N,C,H,W]");
  std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  bool traced = tracing({&x});
  Tensor out = make_out({n, c}, traced);
  auto xd = x.data();
  auto od = out.data();
  std::vector<std::int64_t> arg(static_cast<std::size_t>(n * c));
  for (std::int64_t i = 0; i < n * c; ++i) {
    const double* plane = xd.data() + i * hw;
    std::int64_t bi = 0;
    for (std::int64_t p = 1; p < hw; ++p)
      if (plane[p] > plane[bi]) bi = p;
    od[static_cast<std::size_t>(i)] = plane[bi];
    arg[static_cast<std::size_t>(i)] = bi;
  }
  if (traced) {
    auto xn = x.node();
    auto on = out.node();
    Tape::current()->push([xn, on, arg = std::move(arg), n, c, hw] {
      if (on->grad.empty() || !xn->requires_grad) return;
      ensure_grad(*xn);
      for (std::int64_t i = 0; i < n * c; ++i)
        xn->grad[static_cast<std::size_t>(i * hw + arg[static_cast<std::size_t>(i)])] +=
            on->grad[static_cast<std::size_t>(i)];
    });
  }
  return out;
}

}  // namespace qroute
