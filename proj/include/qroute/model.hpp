// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "qroute/config.hpp"
#include "qroute/fusion.hpp"
#include "qroute/modular_net.hpp"
#include "qroute/routing.hpp"
#include "qroute/text_encoder.hpp"

namespace qroute {

struct ModelOutput {
  Tensor logits;  // [N, answers]
  Tensor paths;   // [N, total_gates], exact 0/1
  Tensor q;       // [N, text_hidden]
};

/// The full question-routed classifier: question encoder, routing
/// network over the backbone's gated layers, modular visual backbone,
/// and fusion head. All parameters live in one registry under the
/// prefixes text., visual., routing., fusion. and classifier.;
/// initialization is a pure function of the config seed.
class VqaModel {
public:
  VqaModel(const ExperimentConfig& cfg, std::int64_t vocab_size,
           std::int64_t answers);

  /// Stochastic straight-through routing; every module executes.
  ModelOutput forward_train(const Tensor& images,
                            const std::vector<std::vector<std::int64_t>>& questions,
                            RngStream& noise_rng);
  /// Deterministic thresholded routing; gated-off modules are skipped.
  ModelOutput forward_eval(const Tensor& images,
                           const std::vector<std::vector<std::int64_t>>& questions);

  const ExperimentConfig& config() const { return cfg_; }
  std::int64_t answers() const { return answers_; }
  std::int64_t vocab_size() const { return vocab_size_; }

  ParamRegistry& registry() { return reg_; }
  const ParamRegistry& registry() const { return reg_; }
  TextEncoder& text() { return text_; }
  VisualBackbone& backbone() { return visual_; }
  RoutingNetwork& routing() { return routing_; }
  FusionClassifier& fusion() { return fusion_; }

private:
  ExperimentConfig cfg_;
  std::int64_t vocab_size_;
  std::int64_t answers_;
  ParamRegistry reg_;
  RngStream init_rng_;
  TextEncoder text_;
  VisualBackbone visual_;
  RoutingNetwork routing_;
  FusionClassifier fusion_;
};

}  // namespace qroute
