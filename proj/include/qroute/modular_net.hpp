// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>

#include "qroute/nn.hpp"

namespace qroute {

/// What a routed module is: one output filter of a block's second
/// convolution, or one whole parallel branch of a multi-branch block.
enum class Granularity { Filter, Branch };

struct BackboneConfig {
  Granularity granularity = Granularity::Branch;
  std::int64_t in_channels = 3;
  std::int64_t stem_channels = 16;
  /// Blocks per stage; every block is one gated layer.
  std::vector<std::int64_t> depths{1, 1, 1, 1};
  /// Output channels per stage.
  std::vector<std::int64_t> widths{16, 32, 32, 32};
  /// Stride of each stage's first block (later blocks use 1).
  std::vector<int> stage_strides{1, 2, 2, 2};
  /// Branch granularity: parallel branches (= modules) per layer.
  std::int64_t cardinality = 8;
  /// Branch granularity: bottleneck width inside each branch.
  std::int64_t branch_width = 4;
  /// Branch granularity: normalize each branch's output with group
  /// normalization (cardinality groups) instead of batch normalization.
  bool group_norm_branch_output = true;
  /// Append two [-1,1] coordinate ramp channels to the final map.
  bool coord_maps = true;

  void validate() const;
  std::int64_t stage_count() const {
    return static_cast<std::int64_t>(depths.size());
  }
  std::int64_t layer_count() const;
  /// Modules per gated layer, in network order.
  std::vector<std::int64_t> module_counts() const;
};

/// One gated residual layer: y = composite(gated module outputs) + skip(x).
///
/// Gates arrive as a [N, module_count] tensor of exact 0/1 values
/// (straight-through samples during training, thresholded logits at
/// evaluation). In training mode every module executes and its output
/// is multiplied by its gate, so gradients reach both the module
/// parameters and, through the gate's surrogate, the routing logits.
/// In evaluation mode a module whose gate column is zero for the whole
/// batch is not executed at all; because each module normalizes its own
/// output before gating, the skipped and the multiplied-by-zero forms
/// agree exactly.
class ModularLayer {
public:
  virtual ~ModularLayer() = default;
  virtual std::int64_t module_count() const = 0;
  virtual std::int64_t out_channels() const = 0;
  virtual Tensor forward(const Tensor& x, const Tensor& gates, bool train) = 0;
  /// Twin without gate factors in the graph; all modules execute.
  virtual Tensor forward_ungated(const Tensor& x, bool train) = 0;
  /// The residual branch alone: what an all-zero gate row leaves.
  virtual Tensor forward_skip_only(const Tensor& x, bool train) = 0;

  /// Modules actually executed by the most recent forward call.
  std::int64_t last_executed() const { return last_executed_; }

protected:
  std::int64_t last_executed_ = 0;
};

/// Residual block whose second convolution is split into single-filter
/// modules; module outputs are concatenated along channels (each module
/// owns one output channel), normalized, gated, and added to the skip.
class FilterModularLayer final : public ModularLayer {
public:
  FilterModularLayer(ParamRegistry& reg, const std::string& prefix,
                     std::int64_t in_c, std::int64_t out_c, int stride,
                     RngStream& rng);
  std::int64_t module_count() const override { return out_c_; }
  std::int64_t out_channels() const override { return out_c_; }
  Tensor forward(const Tensor& x, const Tensor& gates, bool train) override;
  Tensor forward_ungated(const Tensor& x, bool train) override;
  Tensor forward_skip_only(const Tensor& x, bool train) override;

private:
  Tensor composite(const Tensor& x, const Tensor* gates, bool train);
  Tensor skip(const Tensor& x, bool train);

  std::int64_t in_c_, out_c_;
  int stride_;
  Conv2d conv1_;
  BatchNorm2d bn1_;
  std::vector<Tensor> filters_;  // one [1, out_c, 3, 3] weight per module
  BatchNorm2d bn2_;
  std::unique_ptr<Conv2d> down_conv_;
  std::unique_ptr<BatchNorm2d> down_bn_;
};

/// Aggregated-transform block: each parallel bottleneck branch
/// (1x1 reduce, 3x3, 1x1 expand, with its own normalizations) is one
/// module; branch outputs are summed in a canonical order, gated per
/// instance, and added to the skip.
class BranchModularLayer final : public ModularLayer {
public:
  BranchModularLayer(ParamRegistry& reg, const std::string& prefix,
                     std::int64_t in_c, std::int64_t out_c, int stride,
                     std::int64_t cardinality, std::int64_t branch_width,
                     bool group_norm_output, RngStream& rng);
  std::int64_t module_count() const override {
    return static_cast<std::int64_t>(branches_.size());
  }
  std::int64_t out_channels() const override { return out_c_; }
  Tensor forward(const Tensor& x, const Tensor& gates, bool train) override;
  Tensor forward_ungated(const Tensor& x, bool train) override;
  Tensor forward_skip_only(const Tensor& x, bool train) override;

  /// Reorders the branches (testing hook for permutation equivariance).
  void permute_modules(const std::vector<std::int64_t>& perm);

private:
  struct Branch {
    Conv2d reduce;
    BatchNorm2d bn_reduce;
    Conv2d conv;
    BatchNorm2d bn_conv;
    Conv2d expand;
    std::unique_ptr<GroupNorm> gn_out;
    std::unique_ptr<BatchNorm2d> bn_out;
    Tensor forward(const Tensor& x, bool train);
  };
  Tensor combine(const Tensor& x, const Tensor* gates, bool train);
  Tensor skip(const Tensor& x, bool train);

  std::int64_t in_c_, out_c_;
  int stride_;
  std::vector<Branch> branches_;
  std::unique_ptr<Conv2d> down_conv_;
  std::unique_ptr<BatchNorm2d> down_bn_;
};

/// x [N,C,H,W] -> [N,C+2,H,W]: the input channels unchanged, then a
/// horizontal and a vertical linear ramp spanning [-1,1] (a single
/// pixel along an axis gets -1, the ramp start).
Tensor append_coord_maps(const Tensor& x);

/// Stem + gated residual stages + final normalization/nonlinearity,
/// with optional coordinate channels on the output map.
class VisualBackbone {
public:
  VisualBackbone(ParamRegistry& reg, const BackboneConfig& cfg,
                 RngStream& rng);

  std::int64_t layer_count() const {
    return static_cast<std::int64_t>(layers_.size());
  }
  const std::vector<std::int64_t>& module_counts() const { return counts_; }
  std::int64_t total_gates() const { return total_gates_; }
  /// Stage index (0-based) of each gated layer.
  const std::vector<std::int64_t>& layer_stage() const { return layer_stage_; }
  /// Channels of the returned feature map (coordinate channels included).
  std::int64_t out_channels() const;
  ModularLayer& layer(std::int64_t i) { return *layers_[static_cast<std::size_t>(i)]; }

  /// image [N,in_channels,H,W], path [N,total_gates] flat 0/1 gates laid
  /// out layer after layer.
  Tensor forward(const Tensor& image, const Tensor& path, bool train);
  Tensor forward_ungated(const Tensor& image, bool train);
  Tensor forward_skip_only(const Tensor& image, bool train);

private:
  Tensor run(const Tensor& image, const Tensor* path, bool train,
             bool skip_only);

  BackboneConfig cfg_;
  Conv2d stem_conv_;
  BatchNorm2d stem_bn_;
  std::vector<std::unique_ptr<ModularLayer>> layers_;
  std::vector<std::int64_t> counts_;
  std::vector<std::int64_t> offsets_;
  std::vector<std::int64_t> layer_stage_;
  std::int64_t total_gates_ = 0;
  std::unique_ptr<BatchNorm2d> head_bn_;  // registered after the layers
};

}  // namespace qroute
