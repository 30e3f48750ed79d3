// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "qroute/ops.hpp"
#include "qroute/rng.hpp"
#include "qroute/tensor.hpp"

namespace qroute {

/// Named tensor owned by a registry. Parameters are trainable;
/// buffers (running statistics) are saved and restored but never
/// differentiated.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Flat, construction-ordered collection of a model's tensors. The
/// ordering is the iteration contract: optimizer state and checkpoint
/// layout follow it, so it must not depend on hashing or address order.
class ParamRegistry {
public:
  /// Registers a trainable tensor (sets requires_grad) and returns it.
  Tensor add_param(const std::string& name, Tensor t);
  /// Registers a non-trainable buffer and returns it.
  Tensor add_buffer(const std::string& name, Tensor t);

  const std::vector<NamedTensor>& params() const { return params_; }
  const std::vector<NamedTensor>& buffers() const { return buffers_; }

  /// Lookup by exact name across params and buffers; throws if absent.
  Tensor find(const std::string& name) const;

  void zero_grad();
  std::int64_t total_param_count() const;

private:
  std::vector<NamedTensor> params_;
  std::vector<NamedTensor> buffers_;
};

// ---- initializers ----

/// U(-a, a) with a = sqrt(1 / fan_in).
void init_uniform_fan_in(Tensor& t, std::int64_t fan_in, RngStream& rng);
/// Orthogonal rows/columns via QR of a Gaussian draw, sign-fixed so the
/// result is unique. For non-square shapes the smaller side is
/// orthonormal.
void init_orthogonal(Tensor& t, RngStream& rng);

// ---- layers ----

class Linear {
public:
  Linear(ParamRegistry& reg, const std::string& prefix, std::int64_t in,
         std::int64_t out, RngStream& rng, bool bias = true);
  Tensor forward(const Tensor& x) const { return linear(x, w_, b_); }
  const Tensor& weight() const { return w_; }
  const Tensor& bias() const { return b_; }

private:
  Tensor w_, b_;
};

class Conv2d {
public:
  Conv2d(ParamRegistry& reg, const std::string& prefix, std::int64_t in_c,
         std::int64_t out_c, int kernel, int stride, int pad, RngStream& rng,
         bool bias = false);
  Tensor forward(const Tensor& x) const {
    return conv2d(x, w_, b_, stride_, pad_);
  }

private:
  Tensor w_, b_;
  int stride_, pad_;
};

class BatchNorm2d {
public:
  BatchNorm2d(ParamRegistry& reg, const std::string& prefix, std::int64_t c);
  Tensor forward(const Tensor& x, bool train) {
    return batch_norm2d(x, gamma_, beta_, running_mean_, running_var_, kEps,
                        kMomentum, train);
  }
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

private:
  Tensor gamma_, beta_, running_mean_, running_var_;
};

class GroupNorm {
public:
  GroupNorm(ParamRegistry& reg, const std::string& prefix, std::int64_t c,
            int groups);
  Tensor forward(const Tensor& x) const {
    return group_norm(x, gamma_, beta_, groups_, kEps);
  }
  static constexpr double kEps = 1e-5;

private:
  Tensor gamma_, beta_;
  int groups_;
};

class LayerNorm {
public:
  LayerNorm(ParamRegistry& reg, const std::string& prefix, std::int64_t d);
  Tensor forward(const Tensor& x) const {
    return layer_norm(x, gamma_, beta_, kEps);
  }
  static constexpr double kEps = 1e-5;

private:
  Tensor gamma_, beta_;
};

class Embedding {
public:
  Embedding(ParamRegistry& reg, const std::string& prefix, std::int64_t vocab,
            std::int64_t dim, RngStream& rng);
  Tensor forward(const std::vector<std::int64_t>& ids, Shape out_prefix) const {
    return embedding(table_, ids, std::move(out_prefix));
  }
  const Tensor& table() const { return table_; }
  std::int64_t dim() const { return table_.dim(1); }

private:
  Tensor table_;
};

/// Single GRU cell. Gate blocks are stored stacked as [3H, *] in the
/// order reset, update, candidate; each block is initialized
/// orthogonally. The candidate uses the reset-gated recurrent term
/// n = tanh(W_in x + b_in + r * (W_hn h + b_hn)).
class GruCell {
public:
  GruCell(ParamRegistry& reg, const std::string& prefix, std::int64_t input,
          std::int64_t hidden, RngStream& rng);
  /// x [N,input], h [N,hidden] -> new hidden [N,hidden].
  Tensor forward(const Tensor& x, const Tensor& h) const;
  std::int64_t hidden_size() const { return hidden_; }

private:
  Tensor weight_ih_, weight_hh_, bias_ih_, bias_hh_;
  std::int64_t hidden_;
};

}  // namespace qroute
