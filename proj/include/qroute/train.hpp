// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qroute/dataset.hpp"
#include "qroute/model.hpp"

namespace qroute {

/// Linear warmup from warmup_start_lr to lr over warmup_steps
/// optimization steps (0-based), constant afterwards.
double learning_rate_at(const ExperimentConfig& cfg, std::int64_t step);

struct TrainOptions {
  /// Metrics and checkpoints land here; empty disables file output.
  std::string out_dir;
  /// Verbatim configuration text embedded in every checkpoint.
  std::string config_text;
};

struct EpochStat {
  std::int64_t epoch = 0;  // 1-based
  double val_accuracy = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  std::int64_t steps = 0;
  std::vector<EpochStat> epochs;
  double final_val_accuracy = 0.0;
  double best_val_accuracy = 0.0;
  bool early_stopped = false;
};

/// Runs the configured number of epochs: shuffled mini-batches,
/// stochastic routing, answer loss plus the weighted load balance, Adam
/// with linear warmup. Writes metrics.jsonl (every log_every steps),
/// epochs.jsonl, and per-epoch checkpoints (checkpoint_epoch<N>.bin and
/// checkpoint_last.bin) under out_dir. Validation runs after every
/// epoch; training stops early once accuracy reaches early_stop_acc
/// when that is enabled. A non-finite loss aborts with the step and
/// every loss component named. Identical seeds and data reproduce the
/// run bit for bit apart from wall-clock fields.
TrainResult train_model(VqaModel& model, const LoadedDataset& train_ds,
                        const LoadedDataset& val_ds, const TrainOptions& opts);

}  // namespace qroute
