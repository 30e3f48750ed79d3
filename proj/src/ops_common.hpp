// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "qroute/errors.hpp"
#include "qroute/ops.hpp"

namespace qroute::detail {

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

inline void check_same_shape(const Tensor& a, const Tensor& b,
                             const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline int normalize_axis(int axis, int ndim, const char* op) {
  if (axis < 0) axis += ndim;
  if (axis < 0 || axis >= ndim)
    throw ShapeError(std::string(op) + ": axis out of range");
  return axis;
}

/// Product of dims before `axis` (outer) and after it (inner).
inline void axis_strides(const Shape& s, int axis, std::int64_t& outer,
                         std::int64_t& axis_len, std::int64_t& inner) {
  outer = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  axis_len = s[static_cast<std::size_t>(axis)];
  inner = 1;
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i)
    inner *= s[i];
}

/// Fresh output; requires_grad is set when the caller will record.
inline Tensor make_out(Shape shape, bool traced) {
  return Tensor::zeros(std::move(shape), traced);
}

/// Accumulate src into node's grad if it participates in the graph.
inline bool wants_grad(const TensorData& n) { return n.requires_grad; }

}  // namespace qroute::detail
