// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Core>

#include "ops_common.hpp"

namespace qroute {

using detail::check;
using detail::make_out;

namespace {

using Mat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<Mat>;
using MapC = Eigen::Map<const Mat>;

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.ndim() == 2 && b.ndim() == 2 && a.dim(1) == b.dim(0),
        "matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
            shape_str(b.shape()));
  std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  bool traced = tracing({&a, &b});
  Tensor out = make_out({m, n}, traced);
  MapC am(a.data().data(), m, k);
  MapC bm(b.data().data(), k, n);
  MapM om(out.data().data(), m, n);
  om.noalias() = am * bm;
  if (traced) {
    auto an = a.node();
    auto bn = b.node();
    auto on = out.node();
    Tape::current()->push([an, bn, on, m, k, n] {
      if (on->grad.empty()) return;
      MapC g(on->grad.data(), m, n);
      if (an->requires_grad) {
        ensure_grad(*an);
        MapM da(an->grad.data(), m, k);
        MapC bv(bn->values.data(), k, n);
        da.noalias() += g * bv.transpose();
      }
      if (bn->requires_grad) {
        ensure_grad(*bn);
        MapM db(bn->grad.data(), k, n);
        MapC av(an->values.data(), m, k);
        db.noalias() += av.transpose() * g;
      }
    });
  }
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  check(a.ndim() == 3 && b.ndim() == 3 && a.dim(0) == b.dim(0),
        "bmm expects [B,m,k] x [B,k,n]");
  std::int64_t batch = a.dim(0);
  std::int64_t m = trans_a ? a.dim(2) : a.dim(1);
  std::int64_t k = trans_a ? a.dim(1) : a.dim(2);
  std::int64_t kb = trans_b ? b.dim(2) : b.dim(1);
  std::int64_t n = trans_b ? b.dim(1) : b.dim(2);
  check(k == kb, "bmm: inner dim mismatch");
  bool traced = tracing({&a, &b});
  Tensor out = make_out({batch, m, n}, traced);
  std::int64_t as = a.dim(1) * a.dim(2);
  std::int64_t bs = b.dim(1) * b.dim(2);
  for (std::int64_t i = 0; i < batch; ++i) {
    MapC am(a.data().data() + i * as, a.dim(1), a.dim(2));
    MapC bm(b.data().data() + i * bs, b.dim(1), b.dim(2));
    MapM om(out.data().data() + i * m * n, m, n);
    if (!trans_a && !trans_b)
      om.noalias() = am * bm;
    else if (trans_a && !trans_b)
      om.noalias() = am.transpose() * bm;
    else if (!trans_a && trans_b)
      om.noalias() = am * bm.transpose();
    else
      om.noalias() = am.transpose() * bm.transpose();
  }
  if (traced) {
    auto an = a.node();
    auto bn = b.node();
    auto on = out.node();
    auto a1 = a.dim(1), a2 = a.dim(2), b1 = b.dim(1), b2 = b.dim(2);
    Tape::current()->push(
        [an, bn, on, batch, m, n, as, bs, a1, a2, b1, b2, trans_a, trans_b] {
          if (on->grad.empty()) return;
          for (std::int64_t i = 0; i < batch; ++i) {
            MapC g(on->grad.data() + i * m * n, m, n);
            MapC av(an->values.data() + i * as, a1, a2);
            MapC bv(bn->values.data() + i * bs, b1, b2);
            if (an->requires_grad) {
              ensure_grad(*an);
              MapM da(an->grad.data() + i * as, a1, a2);
              // dA = dY B^T (with transposes folded per flag case).
              if (!trans_a && !trans_b)
                da.noalias() += g * bv.transpose();
              else if (trans_a && !trans_b)
                da.noalias() += bv * g.transpose();
              else if (!trans_a && trans_b)
                da.noalias() += g * bv;
              else
                da.noalias() += bv.transpose() * g.transpose();
            }
            if (bn->requires_grad) {
              ensure_grad(*bn);
              MapM db(bn->grad.data() + i * bs, b1, b2);
              if (!trans_a && !trans_b)
                db.noalias() += av.transpose() * g;
              else if (trans_a && !trans_b)
                db.noalias() += av * g;
              else if (!trans_a && trans_b)
                db.noalias() += g.transpose() * av;
              else
                db.noalias() += g.transpose() * av.transpose();
            }
          }
        });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  check(x.ndim() == 2 && w.ndim() == 2 && x.dim(1) == w.dim(1),
        "linear: x " + shape_str(x.shape()) + " w " + shape_str(w.shape()));
  std::int64_t n = x.dim(0), in = x.dim(1), out_f = w.dim(0);
  if (b.defined())
    check(b.ndim() == 1 && b.dim(0) == out_f, "linear: bad bias shape");
  bool traced = b.defined() ? tracing({&x, &w, &b}) : tracing({&x, &w});
  Tensor out = make_out({n, out_f}, traced);
  MapC xm(x.data().data(), n, in);
  MapC wm(w.data().data(), out_f, in);
  MapM om(out.data().data(), n, out_f);
  om.noalias() = xm * wm.transpose();
  if (b.defined()) {
    auto bd = b.data();
    for (std::int64_t i = 0; i < n; ++i) {
      double* row = out.data().data() + i * out_f;
      for (std::int64_t j = 0; j < out_f; ++j) row[j] += bd[j];
    }
  }
  if (traced) {
    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.defined() ? b.node() : nullptr;
    auto on = out.node();
    Tape::current()->push([xn, wn, bn, on, n, in, out_f] {
      if (on->grad.empty()) return;
      MapC g(on->grad.data(), n, out_f);
      if (xn->requires_grad) {
        ensure_grad(*xn);
        MapM dx(xn->grad.data(), n, in);
        MapC wv(wn->values.data(), out_f, in);
        dx.noalias() += g * wv;
      }
      if (wn->requires_grad) {
        ensure_grad(*wn);
        MapM dw(wn->grad.data(), out_f, in);
        MapC xv(xn->values.data(), n, in);
        dw.noalias() += g.transpose() * xv;
      }
      if (bn && bn->requires_grad) {
        ensure_grad(*bn);
        for (std::int64_t i = 0; i < n; ++i) {
          const double* row = on->grad.data() + i * out_f;
          for (std::int64_t j = 0; j < out_f; ++j)
            bn->grad[static_cast<std::size_t>(j)] += row[j];
        }
      }
    });
  }
  return out;
}

}  // namespace qroute
