// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <array>

#include "ops_common.hpp"

namespace qroute {

using detail::axis_strides;
using detail::check;
using detail::make_out;
using detail::normalize_axis;

Tensor reshape(const Tensor& x, Shape shape) {
  check(shape_numel(shape) == x.numel(),
        "reshape: numel mismatch " + shape_str(x.shape()) + " -> " +
            shape_str(shape));
  bool traced = tracing({&x});
  Tensor out = Tensor::from_data(
      std::move(shape), std::vector<double>(x.data().begin(), x.data().end()),
      traced);
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

namespace {

// Row-major strides for a shape.
std::vector<std::int64_t> strides_of(const Shape& s) {
  std::vector<std::int64_t> st(s.size());
  std::int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<std::size_t>(i)] = acc;
    acc *= s[static_cast<std::size_t>(i)];
  }
  return st;
}

// out flat index -> in flat index map for permute(dims).
void permute_map(const Shape& in_shape, const std::vector<int>& dims,
                 std::vector<std::int64_t>& map, Shape& out_shape) {
  auto in_strides = strides_of(in_shape);
  out_shape.clear();
  std::vector<std::int64_t> out_in_stride;  // in-stride of each out axis
  for (int d : dims) {
    out_shape.push_back(in_shape[static_cast<std::size_t>(d)]);
    out_in_stride.push_back(in_strides[static_cast<std::size_t>(d)]);
  }
  std::int64_t n = shape_numel(out_shape);
  map.resize(static_cast<std::size_t>(n));
  std::vector<std::int64_t> idx(out_shape.size(), 0);
  for (std::int64_t o = 0; o < n; ++o) {
    std::int64_t src = 0;
    for (std::size_t k = 0; k < idx.size(); ++k)
      src += idx[k] * out_in_stride[k];
    map[static_cast<std::size_t>(o)] = src;
    for (int k = static_cast<int>(idx.size()) - 1; k >= 0; --k) {
      if (++idx[static_cast<std::size_t>(k)] <
          out_shape[static_cast<std::size_t>(k)])
        break;
      idx[static_cast<std::size_t>(k)] = 0;
    }
  }
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<int>& dims) {
  check(static_cast<int>(dims.size()) == x.ndim(),
        "permute: dims rank mismatch");
  std::vector<bool> seen(dims.size(), false);
  for (int d : dims) {
    check(d >= 0 && d < x.ndim() && !seen[static_cast<std::size_t>(d)],
          "permute: invalid dims");
    seen[static_cast<std::size_t>(d)] = true;
  }
  std::vector<std::int64_t> map;
  Shape oshape;
  permute_map(x.shape(), dims, map, oshape);
  bool traced = tracing({&x});
  Tensor out = make_out(std::move(oshape), traced);
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t o = 0; o < map.size(); ++o)
    od[o] = xd[static_cast<std::size_t>(map[o])];
  if (traced) {
    auto xn = x.node();
    auto on = out.node();
    Tape::current()->push([xn, on, map = std::move(map)] {
      if (on->grad.empty() || !xn->requires_grad) return;
      ensure_grad(*xn);
      for (std::size_t o = 0; o < map.size(); ++o)
        xn->grad[static_cast<std::size_t>(map[o])] += on->grad[o];
    });
  }
  return out;
}

Tensor narrow(const Tensor& x, int axis, std::int64_t start, std::int64_t len) {
  axis = normalize_axis(axis, x.ndim(), "narrow");
  check(start >= 0 && len >= 1 && start + len <= x.dim(axis),
        "narrow: range out of bounds");
  std::int64_t outer, alen, inner;
  axis_strides(x.shape(), axis, outer, alen, inner);
  Shape oshape = x.shape();
  oshape[static_cast<std::size_t>(axis)] = len;
  bool traced = tracing({&x});
  Tensor out = make_out(std::move(oshape), traced);
  auto xd = x.data();
  auto od = out.data();
  for (std::int64_t o = 0; o < outer; ++o) {
    const double* src = xd.data() + (o * alen + start) * inner;
    double* dst = od.data() + o * len * inner;
    std::copy(src, src + len * inner, dst);
  }
  if (traced) {
    auto xn = x.node();
    auto on = out.node();
    Tape::current()->push([xn, on, outer, alen, inner, start, len] {
      if (on->grad.empty() || !xn->requires_grad) return;
      ensure_grad(*xn);
      for (std::int64_t o = 0; o < outer; ++o) {
        double* dst = xn->grad.data() + (o * alen + start) * inner;
        const double* src = on->grad.data() + o * len * inner;
        for (std::int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

Tensor select(const Tensor& x, int axis, std::int64_t index) {
  axis = normalize_axis(axis, x.ndim(), "select");
  Tensor sliced = narrow(x, axis, index, 1);
  Shape oshape;
  for (int i = 0; i < x.ndim(); ++i)
    if (i != axis) oshape.push_back(x.dim(i));
  return reshape(sliced, std::move(oshape));
}

Tensor concat(std::span<const Tensor> xs, int axis) {
  check(!xs.empty(), "concat: no inputs");
  int nd = xs[0].ndim();
  axis = normalize_axis(axis, nd, "concat");
  std::int64_t total = 0;
  for (const Tensor& t : xs) {
    check(t.ndim() == nd, "concat: rank mismatch");
    for (int i = 0; i < nd; ++i)
      if (i != axis)
        check(t.dim(i) == xs[0].dim(i), "concat: non-axis dim mismatch");
    total += t.dim(axis);
  }
  Shape oshape = xs[0].shape();
  oshape[static_cast<std::size_t>(axis)] = total;
  bool traced = false;
  for (const Tensor& t : xs) traced = traced || tracing({&t});
  Tensor out = make_out(std::move(oshape), traced);

  std::int64_t outer, alen_out, inner;
  axis_strides(out.shape(), axis, outer, alen_out, inner);
  auto od = out.data();
  std::int64_t off = 0;
  struct Piece {
    std::shared_ptr<TensorData> node;
    std::int64_t offset, len;
  };
  std::vector<Piece> pieces;
  for (const Tensor& t : xs) {
    std::int64_t len = t.dim(axis);
    auto td = t.data();
    for (std::int64_t o = 0; o < outer; ++o) {
      const double* src = td.data() + o * len * inner;
      double* dst = od.data() + (o * alen_out + off) * inner;
      std::copy(src, src + len * inner, dst);
    }
    pieces.push_back({t.node(), off, len});
    off += len;
  }
  if (traced) {
    auto on = out.node();
    Tape::current()->push(
        [on, pieces = std::move(pieces), outer, alen_out, inner] {
          if (on->grad.empty()) return;
          for (const auto& p : pieces) {
            if (!p.node->requires_grad) continue;
            ensure_grad(*p.node);
            for (std::int64_t o = 0; o < outer; ++o) {
              const double* src =
                  on->grad.data() + (o * alen_out + p.offset) * inner;
              double* dst = p.node->grad.data() + o * p.len * inner;
              for (std::int64_t i = 0; i < p.len * inner; ++i)
                dst[i] += src[i];
            }
          }
        });
  }
  return out;
}

Tensor composite_sum(std::span<const Tensor> xs) {
  check(!xs.empty(), "composite_sum: no inputs");
  for (const Tensor& t : xs)
    detail::check_same_shape(xs[0], t, "composite_sum");
  bool traced = false;
  for (const Tensor& t : xs) traced = traced || tracing({&t});
  Tensor out = make_out(xs[0].shape(), traced);
  auto od = out.data();
  std::size_t n = od.size();
  std::size_t m = xs.size();
  // Per element: gather, sort ascending, accumulate. The sorted order is
  // canonical, so any permutation of the inputs produces identical bits.
  std::vector<double> buf(m);
  std::vector<std::span<const double>> views;
  views.reserve(m);
  for (const Tensor& t : xs) views.push_back(t.data());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < m; ++k) buf[k] = views[k][i];
    std::sort(buf.begin(), buf.end());
    double acc = 0.0;
    for (double v : buf) acc += v;
    od[i] = acc;
  }
  if (traced) {
    auto on = out.node();
    std::vector<std::shared_ptr<TensorData>> nodes;
    for (const Tensor& t : xs) nodes.push_back(t.node());
    Tape::current()->push([on, nodes = std::move(nodes)] {
      if (on->grad.empty()) return;
      for (auto& nd : nodes) {
        if (!nd->requires_grad) continue;
        ensure_grad(*nd);
        for (std::size_t i = 0; i < nd->grad.size(); ++i)
          nd->grad[i] += on->grad[i];
      }
    });
  }
  return out;
}

Tensor broadcast_spatial(const Tensor& v, std::int64_t h, std::int64_t w) {
  check(v.ndim() == 2, "broadcast_spatial expects [N,D]");
  std::int64_t n = v.dim(0), d = v.dim(1);
  bool traced = tracing({&v});
  Tensor out = make_out({n, d, h, w}, traced);
  auto vd = v.data();
  auto od = out.data();
  std::int64_t hw = h * w;
  for (std::int64_t i = 0; i < n * d; ++i) {
    double val = vd[static_cast<std::size_t>(i)];
    double* dst = od.data() + i * hw;
    std::fill(dst, dst + hw, val);
  }
  if (traced) {
    auto vn = v.node();
    auto on = out.node();
    Tape::current()->push([vn, on, n, d, hw] {
      if (on->grad.empty() || !vn->requires_grad) return;
      ensure_grad(*vn);
      for (std::int64_t i = 0; i < n * d; ++i) {
        const double* src = on->grad.data() + i * hw;
        double acc = 0.0;
        for (std::int64_t j = 0; j < hw; ++j) acc += src[j];
        vn->grad[static_cast<std::size_t>(i)] += acc;
      }
    });
  }
  return out;
}

Tensor scale_channels(const Tensor& x, const Tensor& s) {
  check(x.ndim() == 4, "scale_channels expects x [N,C,H,W]");
  check(s.ndim() == 2 && s.dim(0) == x.dim(0) && s.dim(1) == x.dim(1),
        "scale_channels expects s [N,C]");
  std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  bool traced = tracing({&x, &s});
  Tensor out = make_out(x.shape(), traced);
  auto xd = x.data();
  auto sd = s.data();
  auto od = out.data();
  for (std::int64_t i = 0; i < n * c; ++i) {
    double sc = sd[static_cast<std::size_t>(i)];
    const double* src = xd.data() + i * hw;
    double* dst = od.data() + i * hw;
    for (std::int64_t j = 0; j < hw; ++j) dst[j] = src[j] * sc;
  }
  if (traced) {
    auto xn = x.node();
    auto sn = s.node();
    auto on = out.node();
    Tape::current()->push([xn, sn, on, n, c, hw] {
      if (on->grad.empty()) return;
      if (xn->requires_grad) {
        ensure_grad(*xn);
        for (std::int64_t i = 0; i < n * c; ++i) {
          double sc = sn->values[static_cast<std::size_t>(i)];
          const double* src = on->grad.data() + i * hw;
          double* dst = xn->grad.data() + i * hw;
          for (std::int64_t j = 0; j < hw; ++j) dst[j] += src[j] * sc;
        }
      }
      if (sn->requires_grad) {
        ensure_grad(*sn);
        for (std::int64_t i = 0; i < n * c; ++i) {
          const double* g = on->grad.data() + i * hw;
          const double* v = xn->values.data() + i * hw;
          double acc = 0.0;
          for (std::int64_t j = 0; j < hw; ++j) acc += g[j] * v[j];
          sn->grad[static_cast<std::size_t>(i)] += acc;
        }
      }
    });
  }
  return out;
}

Tensor scale_instances(const Tensor& x, const Tensor& s) {
  check(x.ndim() >= 1, "scale_instances expects x [N,...]");
  check(s.ndim() == 1 && s.dim(0) == x.dim(0),
        "scale_instances expects s [N]");
  std::int64_t n = x.dim(0);
  std::int64_t inner = x.numel() / n;
  bool traced = tracing({&x, &s});
  Tensor out = make_out(x.shape(), traced);
  auto xd = x.data();
  auto sd = s.data();
  auto od = out.data();
  for (std::int64_t i = 0; i < n; ++i) {
    double sc = sd[static_cast<std::size_t>(i)];
    const double* src = xd.data() + i * inner;
    double* dst = od.data() + i * inner;
    for (std::int64_t j = 0; j < inner; ++j) dst[j] = src[j] * sc;
  }
  if (traced) {
    auto xn = x.node();
    auto sn = s.node();
    auto on = out.node();
    Tape::current()->push([xn, sn, on, n, inner] {
      if (on->grad.empty()) return;
      if (xn->requires_grad) {
        ensure_grad(*xn);
        for (std::int64_t i = 0; i < n; ++i) {
          double sc = sn->values[static_cast<std::size_t>(i)];
          const double* src = on->grad.data() + i * inner;
          double* dst = xn->grad.data() + i * inner;
          for (std::int64_t j = 0; j < inner; ++j) dst[j] += src[j] * sc;
        }
      }
      if (sn->requires_grad) {
        ensure_grad(*sn);
        for (std::int64_t i = 0; i < n; ++i) {
          const double* g = on->grad.data() + i * inner;
          const double* v = xn->values.data() + i * inner;
          double acc = 0.0;
          for (std::int64_t j = 0; j < inner; ++j) acc += g[j] * v[j];
          sn->grad[static_cast<std::size_t>(i)] += acc;
        }
      }
    });
  }
  return out;
}

Tensor embedding(const Tensor& table, const std::vector<std::int64_t>& ids,
                 Shape out_prefix) {
  check(table.ndim() == 2, "embedding expects table [V,d]");
  std::int64_t v = table.dim(0), d = table.dim(1);
  check(static_cast<std::int64_t>(ids.size()) == shape_numel(out_prefix),
        "embedding: ids/out_prefix mismatch");
  for (std::int64_t id : ids)
    check(id >= 0 && id < v, "embedding: id out of range");
  Shape oshape = out_prefix;
  oshape.push_back(d);
  bool traced = tracing({&table});
  Tensor out = make_out(std::move(oshape), traced);
  auto td = table.data();
  auto od = out.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double* src = td.data() + ids[i] * d;
    std::copy(src, src + d, od.data() + static_cast<std::int64_t>(i) * d);
  }
  if (traced) {
    auto tn = table.node();
    auto on = out.node();
    Tape::current()->push([tn, on, ids, d] {
      if (on->grad.empty() || !tn->requires_grad) return;
      ensure_grad(*tn);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const double* src = on->grad.data() + static_cast<std::int64_t>(i) * d;
        double* dst = tn->grad.data() + ids[i] * d;
        for (std::int64_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

}  // namespace qroute
