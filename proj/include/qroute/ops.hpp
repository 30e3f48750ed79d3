// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qroute/tape.hpp"
#include "qroute/tensor.hpp"

namespace qroute {

// Differentiable primitives. Every function returns a fresh tensor and,
// when a tape is installed and an input requires grad, records one
// backward closure. Shapes are validated eagerly; mismatches throw
// ShapeError. Unless stated otherwise, binary ops require identical
// shapes (broadcasting is explicit, via the broadcast_* / scale_*
// helpers, so gradient paths stay obvious).

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor scalar_mul(const Tensor& x, double s);
Tensor scalar_add(const Tensor& x, double s);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);

/// Forward: 1.0 where x > threshold else 0.0. Backward: identity
/// (gradients pass through unchanged, as if the op were not there).
Tensor straight_through_threshold(const Tensor& x, double threshold);

/// Same values, detached from the graph; gradients stop here.
Tensor detach(const Tensor& x);

// ---- reductions ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sum over one axis; the axis is removed from the shape.
Tensor sum_axis(const Tensor& x, int axis);
/// Softmax along `axis` (max-shifted for stability).
Tensor softmax(const Tensor& x, int axis);

// ---- shape ----
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& dims);
/// Contiguous slice [start, start+len) along `axis`.
Tensor narrow(const Tensor& x, int axis, std::int64_t start, std::int64_t len);
/// narrow to a single index, with the axis removed.
Tensor select(const Tensor& x, int axis, std::int64_t index);
Tensor concat(std::span<const Tensor> xs, int axis);

/// Elementwise sum of same-shaped tensors, accumulated per element in a
/// canonical (value-sorted) order, so the result is invariant under any
/// permutation of the inputs, bit for bit.
Tensor composite_sum(std::span<const Tensor> xs);

// ---- linear algebra ----
/// a [m,k] x b [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// Batched matmul on [B,m,k] x [B,k,n]; trans_a / trans_b transpose the
/// trailing two dims of the respective input first.
Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a = false,
           bool trans_b = false);
/// x [N,in] * W [out,in]^T + b [out]; pass undefined b to skip the bias.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// ---- convolution / pooling ----
/// x [N,C,H,W], w [O,C,kh,kw], optional b [O]; zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad);
Tensor maxpool2d(const Tensor& x, int kernel, int stride);
/// [N,C,H,W] -> [N,C], max over the spatial extent.
Tensor global_max_pool(const Tensor& x);

// ---- normalization ----
/// Batch norm over (N,H,W) per channel. In train mode normalizes with
/// batch statistics and updates running_mean / running_var in place
/// (population variance, r <- (1-momentum) r + momentum batch); in eval
/// mode normalizes with the running buffers. Differentiable in both
/// modes (buffers are not differentiated).
Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    Tensor& running_mean, Tensor& running_var, double eps,
                    double momentum, bool train);
/// Group norm on [N,C,H,W]; statistics per (instance, group), affine per
/// channel. Batch-size independent.
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  int groups, double eps);
/// Layer norm over the last dimension.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps);

// ---- embedding / loss ----
/// Row gather: out shape = out_prefix + [table.dim(1)], one table row
/// per id; ids.size() must equal numel(out_prefix).
Tensor embedding(const Tensor& table, const std::vector<std::int64_t>& ids,
                 Shape out_prefix);
/// Mean negative log-likelihood of targets under softmax(logits).
/// logits [N,K], targets in [0,K).
Tensor cross_entropy(const Tensor& logits,
                     const std::vector<std::int64_t>& targets);

// ---- broadcast helpers ----
/// v [N,D] -> [N,D,H,W], value copied across the spatial extent.
Tensor broadcast_spatial(const Tensor& v, std::int64_t h, std::int64_t w);
/// x [N,C,H,W] scaled per (instance, channel) by s [N,C].
Tensor scale_channels(const Tensor& x, const Tensor& s);
/// x [N,...] scaled per instance by s [N].
Tensor scale_instances(const Tensor& x, const Tensor& s);

// ---- statistics ----
/// Per-row squared coefficient of variation of a [L,M]: population
/// variance over squared mean. Rows whose mean is zero contribute
/// `zero_penalty` with zero gradient (the ratio is undefined there).
Tensor cv_squared_rows(const Tensor& a, double zero_penalty);

// ---- non-differentiable utilities ----
/// Row-wise argmax of [N,K] (first maximum wins).
std::vector<std::int64_t> argmax_rows(const Tensor& x);

}  // namespace qroute
