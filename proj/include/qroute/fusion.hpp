// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "qroute/nn.hpp"
#include "qroute/rng.hpp"
#include "qroute/tensor.hpp"

namespace qroute {

/// Question-conditioned fusion of the visual feature map and the answer
/// classifier sitting on top of it. Two interchangeable read-out paths
/// feed the same MLP: a transformer head with spatial attention pooling,
/// or plain global max pooling.
struct FusionConfig {
  /// Use the transformer + spatial-attention read-out; false selects
  /// global max pooling over the raw feature map.
  bool attention = true;
  /// Concatenate the question features to the pooled vector before the
  /// classifier.
  bool with_q = true;
  /// Token width inside the transformer head.
  std::int64_t d_t = 128;
  std::int64_t heads = 4;
  std::int64_t classifier_hidden = 256;

  /// Throws ConfigError on non-positive sizes or d_t % heads != 0.
  void validate() const;
};

/// Concatenates the question vector onto every spatial position of the
/// feature map: y [N,C,H,W] + q [N,D] -> [N,C+D,H,W].
Tensor broadcast_concat_fuse(const Tensor& y, const Tensor& q);

/// Flattens a feature map into a token sequence: [N,C,H,W] ->
/// [N, H*W, C], tokens in row-major spatial order (t = i*W + j).
Tensor spatial_tokens(const Tensor& u);

/// One pre-activation-free ("post-norm") transformer encoder layer:
/// multi-head scaled dot-product self-attention and a position-wise
/// feed-forward block, each wrapped in residual + layer norm. No
/// positional encoding is added; position information is expected to
/// arrive through the token contents (e.g. coordinate channels).
class TransformerEncoderLayer {
 public:
  TransformerEncoderLayer(ParamRegistry& reg, const std::string& prefix,
                          std::int64_t d_t, std::int64_t heads,
                          RngStream& rng);

  /// tokens [N,T,d_t] -> [N,T,d_t].
  Tensor forward(const Tensor& tokens) const;

  /// Softmax attention weights for a forward pass on `tokens`:
  /// [N*heads, T, T], each row summing to 1.
  Tensor attention_weights(const Tensor& tokens) const;

  std::int64_t width() const { return d_; }

 private:
  /// Returns {weights [N*heads,T,T], attended tokens [N,T,d_t]}.
  struct Attention {
    Tensor weights;
    Tensor output;
  };
  Attention self_attention(const Tensor& tokens) const;

  std::int64_t d_ = 0;
  std::int64_t heads_ = 0;
  Linear wq_, wk_, wv_, wo_;
  LayerNorm ln1_;
  Linear ff1_, ff2_;
  LayerNorm ln2_;
};

/// Collapses a token sequence to one vector per instance with a learned
/// spatial softmax: a scalar score per token (a 1x1 convolution in map
/// form), softmax over tokens, weighted sum of the tokens.
class SpatialAttentionPool {
 public:
  SpatialAttentionPool(ParamRegistry& reg, const std::string& prefix,
                       std::int64_t d_t, RngStream& rng);

  /// tokens [N,T,d_t] -> [N,d_t].
  Tensor forward(const Tensor& tokens) const;

  /// Softmax pooling weights [N,T] for a forward pass on `tokens`.
  Tensor attention(const Tensor& tokens) const;

 private:
  Linear score_;
};

/// Full read-out head: fuses the visual feature map with the question
/// vector and produces answer logits through a two-layer MLP. The
/// attention and GMP paths share this interface and emit logits of the
/// same length.
class FusionClassifier {
 public:
  FusionClassifier(ParamRegistry& reg, const std::string& fusion_prefix,
                   const std::string& classifier_prefix,
                   const FusionConfig& cfg, std::int64_t visual_channels,
                   std::int64_t q_dim, std::int64_t answers, RngStream& rng);

  /// visual [N,C,H,W], q [N,q_dim] -> logits [N,answers].
  Tensor forward(const Tensor& visual, const Tensor& q) const;

  /// Fused, projected token sequence [N,H*W,d_t] (attention mode only;
  /// throws ConfigError in GMP mode).
  Tensor fused_tokens(const Tensor& visual, const Tensor& q) const;

  const TransformerEncoderLayer& encoder() const;
  const SpatialAttentionPool& pool() const;
  const FusionConfig& config() const { return cfg_; }
  std::int64_t classifier_input_width() const { return cls_in_; }

 private:
  FusionConfig cfg_;
  std::int64_t visual_channels_ = 0;
  std::int64_t q_dim_ = 0;
  std::int64_t cls_in_ = 0;
  std::unique_ptr<Linear> in_proj_;
  std::unique_ptr<TransformerEncoderLayer> encoder_;
  std::unique_ptr<SpatialAttentionPool> pool_;
  Linear fc1_, fc2_;
};

}  // namespace qroute
