// SPDX-License-Identifier: Apache-2.0
#include "qroute/fusion.hpp"

#include <array>
#include <cmath>
#include <utility>

#include "qroute/errors.hpp"
#include "qroute/ops.hpp"

namespace qroute {
namespace {

// Applies a Linear to the trailing dim of a [N,T,d] sequence.
Tensor tokenwise(const Linear& fc, const Tensor& x, std::int64_t out) {
  const std::int64_t n = x.dim(0), t = x.dim(1), d = x.dim(2);
  Tensor flat = reshape(x, {n * t, d});
  return reshape(fc.forward(flat), {n, t, out});
}

std::int64_t checked_token_width(std::int64_t d_t, std::int64_t heads) {
  if (d_t <= 0 || heads <= 0 || d_t % heads != 0) {
    throw ConfigError(
        "transformer token width must be a positive multiple of the head count");
  }
  return d_t;
}

std::int64_t classifier_input_width_of(const FusionConfig& cfg,
                                       std::int64_t visual_channels,
                                       std::int64_t q_dim,
                                       std::int64_t answers) {
  cfg.validate();
  if (visual_channels <= 0 || q_dim <= 0) {
    throw ConfigError("fusion needs positive visual and question widths");
  }
  if (answers <= 0) {
    throw ConfigError("answer vocabulary must be non-empty");
  }
  const std::int64_t pooled = cfg.attention ? cfg.d_t : visual_channels;
  return pooled + (cfg.with_q ? q_dim : 0);
}

}  // namespace

void FusionConfig::validate() const {
  if (d_t <= 0 || heads <= 0) {
    throw ConfigError("transformer token width and head count must be positive");
  }
  if (d_t % heads != 0) {
    throw ConfigError("transformer token width must be divisible by the head count");
  }
  if (classifier_hidden <= 0) {
    throw ConfigError("classifier hidden width must be positive");
  }
}

Tensor broadcast_concat_fuse(const Tensor& y, const Tensor& q) {
  if (y.shape().size() != 4) {
    throw ShapeError("fusion expects a [batch, channels, height, width] map");
  }
  if (q.shape().size() != 2 || q.dim(0) != y.dim(0)) {
    throw ShapeError("question features must be [batch, dim] with the map's batch");
  }
  const std::array<Tensor, 2> parts = {
      y, broadcast_spatial(q, y.dim(2), y.dim(3))};
  return concat(parts, 1);
}

Tensor spatial_tokens(const Tensor& u) {
  if (u.shape().size() != 4) {
    throw ShapeError("spatial_tokens expects a [batch, channels, height, width] map");
  }
  const std::int64_t n = u.dim(0), c = u.dim(1), h = u.dim(2), w = u.dim(3);
  return reshape(permute(u, {0, 2, 3, 1}), {n, h * w, c});
}

TransformerEncoderLayer::TransformerEncoderLayer(ParamRegistry& reg,
                                                 const std::string& prefix,
                                                 std::int64_t d_t,
                                                 std::int64_t heads,
                                                 RngStream& rng)
    : d_(checked_token_width(d_t, heads)),
      heads_(heads),
      wq_(reg, prefix + ".wq", d_t, d_t, rng),
      wk_(reg, prefix + ".wk", d_t, d_t, rng),
      wv_(reg, prefix + ".wv", d_t, d_t, rng),
      wo_(reg, prefix + ".wo", d_t, d_t, rng),
      ln1_(reg, prefix + ".ln1", d_t),
      ff1_(reg, prefix + ".ff1", d_t, 4 * d_t, rng),
      ff2_(reg, prefix + ".ff2", 4 * d_t, d_t, rng),
      ln2_(reg, prefix + ".ln2", d_t) {}

TransformerEncoderLayer::Attention TransformerEncoderLayer::self_attention(
    const Tensor& tokens) const {
  if (tokens.shape().size() != 3 || tokens.dim(2) != d_) {
    throw ShapeError("encoder expects tokens of shape [batch, count, width]");
  }
  const std::int64_t n = tokens.dim(0), t = tokens.dim(1);
  const std::int64_t dh = d_ / heads_;

  // [N,T,d] -> [N*heads, T, d/heads]
  const auto split_heads = [&](const Tensor& x) {
    return reshape(permute(reshape(x, {n, t, heads_, dh}), {0, 2, 1, 3}),
                   {n * heads_, t, dh});
  };
  Tensor qh = split_heads(tokenwise(wq_, tokens, d_));
  Tensor kh = split_heads(tokenwise(wk_, tokens, d_));
  Tensor vh = split_heads(tokenwise(wv_, tokens, d_));

  Tensor scores =
      scalar_mul(bmm(qh, kh, false, true), 1.0 / std::sqrt(double(dh)));
  Tensor weights = softmax(scores, -1);

  Tensor ctx = bmm(weights, vh);  // [N*heads, T, dh]
  Tensor merged = reshape(permute(reshape(ctx, {n, heads_, t, dh}),
                                  {0, 2, 1, 3}),
                          {n, t, d_});
  return {std::move(weights), tokenwise(wo_, merged, d_)};
}

Tensor TransformerEncoderLayer::forward(const Tensor& tokens) const {
  Tensor attended = self_attention(tokens).output;
  Tensor h = ln1_.forward(add(tokens, attended));
  const std::int64_t n = h.dim(0), t = h.dim(1);
  Tensor ff = reshape(
      ff2_.forward(relu(ff1_.forward(reshape(h, {n * t, d_})))), {n, t, d_});
  return ln2_.forward(add(h, ff));
}

Tensor TransformerEncoderLayer::attention_weights(const Tensor& tokens) const {
  return self_attention(tokens).weights;
}

SpatialAttentionPool::SpatialAttentionPool(ParamRegistry& reg,
                                           const std::string& prefix,
                                           std::int64_t d_t, RngStream& rng)
    : score_(reg, prefix + ".score", d_t, 1, rng) {}

Tensor SpatialAttentionPool::attention(const Tensor& tokens) const {
  if (tokens.shape().size() != 3) {
    throw ShapeError("pooling expects tokens of shape [batch, count, width]");
  }
  const std::int64_t n = tokens.dim(0), t = tokens.dim(1);
  Tensor scores = reshape(tokenwise(score_, tokens, 1), {n, t});
  return softmax(scores, -1);
}

Tensor SpatialAttentionPool::forward(const Tensor& tokens) const {
  Tensor a = attention(tokens);
  const std::int64_t n = tokens.dim(0), t = tokens.dim(1);
  // [N,1,T] x [N,T,d] -> [N,1,d]
  Tensor pooled = bmm(reshape(a, {n, 1, t}), tokens);
  return reshape(pooled, {n, tokens.dim(2)});
}

FusionClassifier::FusionClassifier(ParamRegistry& reg,
                                   const std::string& fusion_prefix,
                                   const std::string& classifier_prefix,
                                   const FusionConfig& cfg,
                                   std::int64_t visual_channels,
                                   std::int64_t q_dim, std::int64_t answers,
                                   RngStream& rng)
    : cfg_(cfg),
      visual_channels_(visual_channels),
      q_dim_(q_dim),
      cls_in_(classifier_input_width_of(cfg, visual_channels, q_dim, answers)),
      in_proj_(cfg.attention
                   ? std::make_unique<Linear>(reg, fusion_prefix + ".in_proj",
                                              visual_channels + q_dim, cfg.d_t,
                                              rng)
                   : nullptr),
      encoder_(cfg.attention ? std::make_unique<TransformerEncoderLayer>(
                                   reg, fusion_prefix + ".encoder", cfg.d_t,
                                   cfg.heads, rng)
                             : nullptr),
      pool_(cfg.attention
                ? std::make_unique<SpatialAttentionPool>(
                      reg, fusion_prefix + ".pool", cfg.d_t, rng)
                : nullptr),
      fc1_(reg, classifier_prefix + ".fc1", cls_in_, cfg.classifier_hidden,
           rng),
      fc2_(reg, classifier_prefix + ".fc2", cfg.classifier_hidden, answers,
           rng) {}

Tensor FusionClassifier::fused_tokens(const Tensor& visual,
                                      const Tensor& q) const {
  if (!cfg_.attention) {
    throw ConfigError("fused tokens exist only with the attention head enabled");
  }
  Tensor u = broadcast_concat_fuse(visual, q);
  return tokenwise(*in_proj_, spatial_tokens(u), cfg_.d_t);
}

Tensor FusionClassifier::forward(const Tensor& visual, const Tensor& q) const {
  if (visual.shape().size() != 4 || visual.dim(1) != visual_channels_) {
    throw ShapeError("visual features must be [batch, channels, height, width]");
  }
  if (q.shape().size() != 2 || q.dim(1) != q_dim_ ||
      q.dim(0) != visual.dim(0)) {
    throw ShapeError("question features must be [batch, dim] with the map's batch");
  }
  Tensor f;
  if (cfg_.attention) {
    f = pool_->forward(encoder_->forward(fused_tokens(visual, q)));
  } else {
    f = global_max_pool(visual);
  }
  if (cfg_.with_q) {
    const std::array<Tensor, 2> parts = {f, q};
    f = concat(parts, 1);
  }
  return fc2_.forward(relu(fc1_.forward(f)));
}

const TransformerEncoderLayer& FusionClassifier::encoder() const {
  if (!encoder_) {
    throw ConfigError("the attention head is disabled in this configuration");
  }
  return *encoder_;
}

const SpatialAttentionPool& FusionClassifier::pool() const {
  if (!pool_) {
    throw ConfigError("the attention head is disabled in this configuration");
  }
  return *pool_;
}

}  // namespace qroute
