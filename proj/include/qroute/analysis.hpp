// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "qroute/dataset.hpp"
#include "qroute/model.hpp"

namespace qroute {

/// Five-number summary of a sample; quartiles interpolate linearly
/// between order statistics (h = (n-1) p).
struct QuantileSummary {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

/// Throws ConfigError on an empty sample.
QuantileSummary five_number_summary(std::vector<double> values);

/// Writes one CSV row per question and backbone stage:
///
///   question_id,type,subtype,stage,bits
///
/// question_id is the question's row index within the dataset, stage
/// is 1-based, and bits holds the evaluation-time gate decisions of
/// the stage's modules as '0'/'1' characters, gated layers in order.
/// Identical model and data produce identical bytes.
void export_routing_paths(VqaModel& model, const LoadedDataset& ds,
                          std::int64_t batch_size, std::ostream& out);
/// Same, to a file; throws ConfigError when the file cannot be written.
void export_routing_paths(VqaModel& model, const LoadedDataset& ds,
                          std::int64_t batch_size, const std::string& path);

struct LayerExecutionSummary {
  std::int64_t layer = 0;    // 1-based gated layer index
  std::int64_t stage = 0;    // 1-based owning stage
  std::int64_t modules = 0;  // gates in this layer
  /// Distribution over questions of the executed-module fraction.
  QuantileSummary ratio;
  double mean_ratio = 0.0;
};

struct ExecutionRatioReport {
  std::int64_t questions = 0;
  std::vector<LayerExecutionSummary> layers;
  /// Mean executed fraction over every gate and question.
  double mean_execution_ratio = 0.0;
  /// 1 - mean_execution_ratio: the fraction of module applications
  /// routing skipped at evaluation time.
  double compute_reduction = 0.0;
};

/// Throws ConfigError when the dataset has no questions.
ExecutionRatioReport execution_ratio_report(VqaModel& model,
                                            const LoadedDataset& ds,
                                            std::int64_t batch_size);

/// Indented JSON rendering of the report with stable key order.
std::string to_json(const ExecutionRatioReport& report);

struct SaliencyResult {
  Tensor map;        // [H, W] scaled to [0,1]; all zero when flat
  double peak = 0.0; // largest |d logit / d pixel| before scaling
  std::int64_t answer = 0;  // argmax answer id the gradient came from
};

/// Gradient of the winning answer logit with respect to the input
/// pixels under evaluation-mode routing, reduced over channels by
/// max |.| and scaled so the strongest pixel reads 1. The image is
/// [3,H,W] or [1,3,H,W].
SaliencyResult saliency_map(VqaModel& model, const Tensor& image,
                            const std::vector<std::int64_t>& tokens);

/// Grayscale rendering of a map in [0,1]: round(255 * value) per pixel.
ImageRgb8 saliency_to_image(const Tensor& map);

struct SaliencyMaskStats {
  std::int64_t in_pixels = 0;
  std::int64_t out_pixels = 0;
  double in_mean = 0.0;
  double out_mean = 0.0;
  /// in_mean / out_mean; +inf when only the mask carries saliency.
  double ratio = 0.0;
};

/// Mean saliency on object pixels versus background pixels. The object
/// mask is the set of pixels whose rendering differs from an empty
/// scene, so it needs no knowledge of the palette.
SaliencyMaskStats saliency_mask_stats(const Tensor& map,
                                      const SceneGraph& scene);

}  // namespace qroute
