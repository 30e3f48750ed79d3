// SPDX-License-Identifier: Apache-2.0
#include "qroute/modular_net.hpp"

#include <algorithm>
#include <array>

#include "qroute/errors.hpp"

namespace qroute {

namespace {

std::int64_t conv_out_dim(std::int64_t in, int kernel, int pad, int stride) {
  return (in + 2 * pad - kernel) / stride + 1;
}

void check_gates(const Tensor& gates, std::int64_t n, std::int64_t m) {
  if (gates.shape().size() != 2 || gates.dim(0) != n || gates.dim(1) != m)
    throw ShapeError("gate tensor must be [batch, module_count]");
}

bool column_active(const Tensor& gates, std::int64_t m) {
  auto g = gates.data();
  std::int64_t cols = gates.dim(1);
  for (std::int64_t n = 0; n < gates.dim(0); ++n)
    if (g[static_cast<std::size_t>(n * cols + m)] != 0.0) return true;
  return false;
}

Tensor gate_column(const Tensor& gates, std::int64_t m) {
  return reshape(narrow(gates, 1, m, 1), {gates.dim(0)});
}

}  // namespace

// ---- config ----

std::int64_t BackboneConfig::layer_count() const {
  std::int64_t n = 0;
  for (std::int64_t d : depths) n += d;
  return n;
}

std::vector<std::int64_t> BackboneConfig::module_counts() const {
  std::vector<std::int64_t> counts;
  for (std::size_t s = 0; s < depths.size(); ++s)
    for (std::int64_t b = 0; b < depths[s]; ++b)
      counts.push_back(granularity == Granularity::Filter ? widths[s]
                                                          : cardinality);
  return counts;
}

void BackboneConfig::validate() const {
  if (depths.empty()) throw ConfigError("backbone needs at least one stage");
  if (widths.size() != depths.size() || stage_strides.size() != depths.size())
    throw ConfigError("depths, widths and stage_strides must align");
  for (std::int64_t d : depths)
    if (d < 1) throw ConfigError("every stage needs at least one block");
  for (std::int64_t w : widths)
    if (w < 1) throw ConfigError("stage widths must be positive");
  for (int s : stage_strides)
    if (s != 1 && s != 2) throw ConfigError("stage strides must be 1 or 2");
  if (in_channels < 1 || stem_channels < 1)
    throw ConfigError("channel counts must be positive");
  if (granularity == Granularity::Branch) {
    if (cardinality < 1 || branch_width < 1)
      throw ConfigError("cardinality and branch_width must be positive");
    if (group_norm_branch_output)
      for (std::int64_t w : widths)
        if (w % cardinality != 0)
          throw ConfigError(
              "group-normalized branches need widths divisible by the "
              "cardinality");
  }
}

// ---- filter-granularity layer ----

FilterModularLayer::FilterModularLayer(ParamRegistry& reg,
                                       const std::string& prefix,
                                       std::int64_t in_c, std::int64_t out_c,
                                       int stride, RngStream& rng)
    : in_c_(in_c),
      out_c_(out_c),
      stride_(stride),
      conv1_(reg, prefix + ".conv1", in_c, out_c, 3, stride, 1, rng),
      bn1_(reg, prefix + ".bn1", out_c),
      bn2_(reg, prefix + ".bn2", out_c) {
  filters_.reserve(static_cast<std::size_t>(out_c));
  for (std::int64_t m = 1; m <= out_c; ++m) {
    Tensor w = Tensor::zeros({1, out_c, 3, 3});
    init_uniform_fan_in(w, out_c * 9, rng);
    filters_.push_back(reg.add_param(
        prefix + ".module" + std::to_string(m) + ".conv.weight", w));
  }
  if (stride != 1 || in_c != out_c) {
    down_conv_ = std::make_unique<Conv2d>(reg, prefix + ".downsample.conv",
                                          in_c, out_c, 1, stride, 0, rng);
    down_bn_ =
        std::make_unique<BatchNorm2d>(reg, prefix + ".downsample.bn", out_c);
  }
}

Tensor FilterModularLayer::skip(const Tensor& x, bool train) {
  if (!down_conv_) return x;
  return down_bn_->forward(down_conv_->forward(x), train);
}

Tensor FilterModularLayer::composite(const Tensor& x, const Tensor* gates,
                                     bool train) {
  Tensor t = relu(bn1_.forward(conv1_.forward(x), train));
  const std::int64_t n = t.dim(0), h = t.dim(2), w = t.dim(3);
  last_executed_ = 0;
  std::vector<Tensor> channels;
  channels.reserve(filters_.size());
  for (std::int64_t m = 0; m < out_c_; ++m) {
    // Evaluation skips a filter no instance asks for; training runs all
    // of them so the gate product has both factors in the graph.
    bool live = train || gates == nullptr || column_active(*gates, m);
    if (live) {
      channels.push_back(
          conv2d(t, filters_[static_cast<std::size_t>(m)], Tensor(), 1, 1));
      ++last_executed_;
    } else {
      channels.push_back(Tensor::zeros({n, 1, h, w}));
    }
  }
  Tensor y = bn2_.forward(concat(channels, 1), train);
  if (gates != nullptr) y = scale_channels(y, *gates);
  return y;
}

Tensor FilterModularLayer::forward(const Tensor& x, const Tensor& gates,
                                   bool train) {
  check_gates(gates, x.dim(0), out_c_);
  return add(composite(x, &gates, train), skip(x, train));
}

Tensor FilterModularLayer::forward_ungated(const Tensor& x, bool train) {
  return add(composite(x, nullptr, train), skip(x, train));
}

Tensor FilterModularLayer::forward_skip_only(const Tensor& x, bool train) {
  last_executed_ = 0;
  return skip(x, train);
}

// ---- branch-granularity layer ----

Tensor BranchModularLayer::Branch::forward(const Tensor& x, bool train) {
  Tensor t = relu(bn_reduce.forward(reduce.forward(x), train));
  t = relu(bn_conv.forward(conv.forward(t), train));
  t = expand.forward(t);
  return gn_out ? gn_out->forward(t) : bn_out->forward(t, train);
}

BranchModularLayer::BranchModularLayer(ParamRegistry& reg,
                                       const std::string& prefix,
                                       std::int64_t in_c, std::int64_t out_c,
                                       int stride, std::int64_t cardinality,
                                       std::int64_t branch_width,
                                       bool group_norm_output, RngStream& rng)
    : in_c_(in_c), out_c_(out_c), stride_(stride) {
  branches_.reserve(static_cast<std::size_t>(cardinality));
  for (std::int64_t m = 1; m <= cardinality; ++m) {
    std::string mp = prefix + ".module" + std::to_string(m);
    Branch br{
        Conv2d(reg, mp + ".conv1", in_c, branch_width, 1, 1, 0, rng),
        BatchNorm2d(reg, mp + ".bn1", branch_width),
        Conv2d(reg, mp + ".conv2", branch_width, branch_width, 3, stride, 1,
               rng),
        BatchNorm2d(reg, mp + ".bn2", branch_width),
        Conv2d(reg, mp + ".conv3", branch_width, out_c, 1, 1, 0, rng),
        nullptr,
        nullptr,
    };
    if (group_norm_output)
      br.gn_out = std::make_unique<GroupNorm>(reg, mp + ".norm3", out_c,
                                              static_cast<int>(cardinality));
    else
      br.bn_out = std::make_unique<BatchNorm2d>(reg, mp + ".norm3", out_c);
    branches_.push_back(std::move(br));
  }
  if (stride != 1 || in_c != out_c) {
    down_conv_ = std::make_unique<Conv2d>(reg, prefix + ".downsample.conv",
                                          in_c, out_c, 1, stride, 0, rng);
    down_bn_ =
        std::make_unique<BatchNorm2d>(reg, prefix + ".downsample.bn", out_c);
  }
}

Tensor BranchModularLayer::skip(const Tensor& x, bool train) {
  if (!down_conv_) return x;
  return down_bn_->forward(down_conv_->forward(x), train);
}

Tensor BranchModularLayer::combine(const Tensor& x, const Tensor* gates,
                                   bool train) {
  const std::int64_t n = x.dim(0);
  const std::int64_t oh = conv_out_dim(x.dim(2), 3, 1, stride_);
  const std::int64_t ow = conv_out_dim(x.dim(3), 3, 1, stride_);
  last_executed_ = 0;
  std::vector<Tensor> outs;
  outs.reserve(branches_.size());
  for (std::int64_t m = 0; m < module_count(); ++m) {
    bool live = train || gates == nullptr || column_active(*gates, m);
    if (live) {
      Tensor o = branches_[static_cast<std::size_t>(m)].forward(x, train);
      if (gates != nullptr) o = scale_instances(o, gate_column(*gates, m));
      outs.push_back(o);
      ++last_executed_;
    } else {
      outs.push_back(Tensor::zeros({n, out_c_, oh, ow}));
    }
  }
  return composite_sum(outs);
}

Tensor BranchModularLayer::forward(const Tensor& x, const Tensor& gates,
                                   bool train) {
  check_gates(gates, x.dim(0), module_count());
  return add(combine(x, &gates, train), skip(x, train));
}

Tensor BranchModularLayer::forward_ungated(const Tensor& x, bool train) {
  return add(combine(x, nullptr, train), skip(x, train));
}

Tensor BranchModularLayer::forward_skip_only(const Tensor& x, bool train) {
  last_executed_ = 0;
  return skip(x, train);
}

void BranchModularLayer::permute_modules(const std::vector<std::int64_t>& perm) {
  if (perm.size() != branches_.size())
    throw ShapeError("permutation length must equal the module count");
  std::vector<Branch> next;
  next.reserve(branches_.size());
  for (std::int64_t idx : perm) {
    if (idx < 0 || idx >= module_count())
      throw ShapeError("permutation index out of range");
    next.push_back(std::move(branches_[static_cast<std::size_t>(idx)]));
  }
  branches_ = std::move(next);
}

// ---- coordinate maps ----

Tensor append_coord_maps(const Tensor& x) {
  if (x.shape().size() != 4)
    throw ShapeError("append_coord_maps expects [N,C,H,W]");
  const std::int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  Tensor coords = Tensor::zeros({n, 2, h, w});
  auto cd = coords.data();
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t i = 0; i < h; ++i)
      for (std::int64_t j = 0; j < w; ++j) {
        double xr = w == 1 ? -1.0 : -1.0 + 2.0 * static_cast<double>(j) /
                                               static_cast<double>(w - 1);
        double yr = h == 1 ? -1.0 : -1.0 + 2.0 * static_cast<double>(i) /
                                               static_cast<double>(h - 1);
        std::size_t base = static_cast<std::size_t>(((b * 2) * h + i) * w + j);
        cd[base] = xr;
        cd[base + static_cast<std::size_t>(h * w)] = yr;
      }
  std::array<Tensor, 2> parts{x, coords};
  return concat(std::span<const Tensor>(parts.data(), parts.size()), 1);
}

// ---- backbone ----

VisualBackbone::VisualBackbone(ParamRegistry& reg, const BackboneConfig& cfg,
                               RngStream& rng)
    : cfg_(cfg),
      stem_conv_((cfg.validate(), reg), "visual.stem.conv", cfg.in_channels,
                 cfg.stem_channels, 3, 2, 1, rng),
      stem_bn_(reg, "visual.stem.bn", cfg.stem_channels) {
  std::int64_t in_c = cfg.stem_channels;
  std::int64_t l = 0;
  for (std::size_t s = 0; s < cfg.depths.size(); ++s) {
    for (std::int64_t b = 0; b < cfg.depths[s]; ++b) {
      ++l;
      int stride = b == 0 ? cfg.stage_strides[s] : 1;
      std::string prefix = "visual.layer" + std::to_string(l);
      if (cfg.granularity == Granularity::Filter)
        layers_.push_back(std::make_unique<FilterModularLayer>(
            reg, prefix, in_c, cfg.widths[s], stride, rng));
      else
        layers_.push_back(std::make_unique<BranchModularLayer>(
            reg, prefix, in_c, cfg.widths[s], stride, cfg.cardinality,
            cfg.branch_width, cfg.group_norm_branch_output, rng));
      in_c = cfg.widths[s];
      layer_stage_.push_back(static_cast<std::int64_t>(s));
    }
  }
  offsets_.assign(1, 0);
  for (const auto& layer : layers_) {
    counts_.push_back(layer->module_count());
    offsets_.push_back(offsets_.back() + counts_.back());
  }
  total_gates_ = offsets_.back();
  head_bn_ = std::make_unique<BatchNorm2d>(reg, "visual.head.bn",
                                           cfg.widths.back());
}

std::int64_t VisualBackbone::out_channels() const {
  return cfg_.widths.back() + (cfg_.coord_maps ? 2 : 0);
}

Tensor VisualBackbone::run(const Tensor& image, const Tensor* path, bool train,
                           bool skip_only) {
  if (image.shape().size() != 4 || image.dim(1) != cfg_.in_channels)
    throw ShapeError("backbone expects images [N," +
                     std::to_string(cfg_.in_channels) + ",H,W]");
  if (path != nullptr &&
      (path->shape().size() != 2 || path->dim(0) != image.dim(0) ||
       path->dim(1) != total_gates_))
    throw ShapeError("routing path must be [batch, " +
                     std::to_string(total_gates_) + "]");
  Tensor x = relu(stem_bn_.forward(stem_conv_.forward(image), train));
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (skip_only) {
      x = layers_[l]->forward_skip_only(x, train);
    } else if (path != nullptr) {
      Tensor gates = narrow(*path, 1, offsets_[l], counts_[l]);
      x = layers_[l]->forward(x, gates, train);
    } else {
      x = layers_[l]->forward_ungated(x, train);
    }
  }
  x = relu(head_bn_->forward(x, train));
  if (cfg_.coord_maps) x = append_coord_maps(x);
  return x;
}

Tensor VisualBackbone::forward(const Tensor& image, const Tensor& path,
                               bool train) {
  return run(image, &path, train, false);
}

Tensor VisualBackbone::forward_ungated(const Tensor& image, bool train) {
  return run(image, nullptr, train, false);
}

Tensor VisualBackbone::forward_skip_only(const Tensor& image, bool train) {
  return run(image, nullptr, train, true);
}

}  // namespace qroute
