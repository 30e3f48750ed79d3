// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "qroute/dataset.hpp"
#include "qroute/model.hpp"

namespace qroute {

/// One model-ready slice of a dataset: stacked images, ragged token
/// sequences, and target answer ids.
struct Batch {
  Tensor images;  // [N, 3, H, W]
  std::vector<std::vector<std::int64_t>> questions;
  std::vector<std::int64_t> answers;
};

/// Gathers the given question rows (images come from each question's
/// scene). Requires the dataset to be loaded with images.
Batch make_batch(const LoadedDataset& ds,
                 std::span<const std::int64_t> indices);

struct Accuracy {
  std::int64_t correct = 0;
  std::int64_t total = 0;
  double rate() const {
    return total == 0 ? 0.0 : static_cast<double>(correct) /
                                  static_cast<double>(total);
  }
};

struct EvalReport {
  std::int64_t questions = 0;
  Accuracy overall;
  std::map<std::string, Accuracy> per_type;     // by question type name
  std::map<std::string, Accuracy> per_subtype;  // by template subtype
  /// How often each gate opened across the split, flat layer-major.
  std::vector<std::int64_t> gate_open_counts;
  /// Mean fraction of a layer's modules executed per question.
  std::vector<double> layer_execution_ratio;
  /// Mean over all gates; 1 - this is the compute saved by routing.
  double mean_execution_ratio = 0.0;
};

/// Deterministic evaluation over the whole dataset in batches. Routing
/// uses thresholded logits, so the report is a pure function of the
/// model parameters and the data.
EvalReport evaluate(VqaModel& model, const LoadedDataset& ds,
                    std::int64_t batch_size);

}  // namespace qroute
