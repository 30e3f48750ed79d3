// SPDX-License-Identifier: Apache-2.0
#include "qroute/train.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "qroute/adam.hpp"
#include "qroute/checkpoint.hpp"
#include "qroute/errors.hpp"
#include "qroute/eval.hpp"
#include "qroute/objectives.hpp"
#include "qroute/ops.hpp"
#include "qroute/tape.hpp"

namespace qroute {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double scalar_of(const Tensor& t) { return t.data()[0]; }

double batch_accuracy(const Tensor& logits,
                      const std::vector<std::int64_t>& targets) {
  const std::vector<std::int64_t> pred = argmax_rows(logits);
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    hits += pred[i] == targets[static_cast<std::size_t>(i)];
  return pred.empty() ? 0.0
                      : static_cast<double>(hits) /
                            static_cast<double>(pred.size());
}

std::ofstream open_log(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  return f;
}

}  // namespace

double learning_rate_at(const ExperimentConfig& cfg, std::int64_t step) {
  if (cfg.warmup_steps <= 0 || step >= cfg.warmup_steps) return cfg.lr;
  const double f =
      static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  return cfg.warmup_start_lr + f * (cfg.lr - cfg.warmup_start_lr);
}

TrainResult train_model(VqaModel& model, const LoadedDataset& train_ds,
                        const LoadedDataset& val_ds,
                        const TrainOptions& opts) {
  const ExperimentConfig& cfg = model.config();
  if (train_ds.questions.empty())
    throw ConfigError("the training split has no questions");

  const bool to_disk = !opts.out_dir.empty();
  std::filesystem::path out(opts.out_dir);
  std::ofstream metrics, epochs_log;
  if (to_disk) {
    std::filesystem::create_directories(out);
    metrics = open_log(out / "metrics.jsonl");
    epochs_log = open_log(out / "epochs.jsonl");
  }

  std::vector<Tensor> params;
  for (const auto& p : model.registry().params()) params.push_back(p.tensor);
  Adam opt(std::move(params), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

  const auto& module_counts = model.backbone().module_counts();
  const std::int64_t n = static_cast<std::int64_t>(train_ds.questions.size());
  const Clock::time_point t0 = Clock::now();

  TrainResult result;
  std::int64_t step = 0;
  for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    RngStream shuffle_rng(cfg.seed, "epoch-" + std::to_string(epoch));
    shuffle_rng.shuffle(order);

    for (std::int64_t start = 0; start < n; start += cfg.batch_size) {
      const std::int64_t stop = std::min(n, start + cfg.batch_size);
      const Batch batch = make_batch(
          train_ds, std::span<const std::int64_t>(
                        order.data() + start,
                        static_cast<std::size_t>(stop - start)));

      Tape tape;
      ModelOutput fwd;
      LossBreakdown loss;
      {
        TapeScope scope(tape);
        RngStream noise(cfg.seed, "noise-" + std::to_string(step));
        fwd = model.forward_train(batch.images, batch.questions, noise);
        const Tensor l_vqa = vqa_loss(fwd.logits, batch.answers);
        const LoadBalance balance =
            load_balance_loss(module_load(fwd.paths), module_counts);
        loss = total_loss(l_vqa, balance.loss, cfg.lambda);

        const double v = scalar_of(loss.l_vqa);
        const double b = scalar_of(loss.l_load);
        const double t = scalar_of(loss.total);
        if (!std::isfinite(t)) {
          throw std::runtime_error(
              "training diverged at step " + std::to_string(step) +
              ": answer loss " + std::to_string(v) + ", load balance " +
              std::to_string(b) + ", total " + std::to_string(t));
        }
        model.registry().zero_grad();
        tape.backward(loss.total);
      }
      opt.step(learning_rate_at(cfg, step));

      if (to_disk && step % cfg.log_every == 0) {
        nlohmann::json line = {
            {"step", step},
            {"epoch", epoch},
            {"lr", learning_rate_at(cfg, step)},
            {"l_vqa", scalar_of(loss.l_vqa)},
            {"l_load", scalar_of(loss.l_load)},
            {"loss", scalar_of(loss.total)},
            {"batch_accuracy", batch_accuracy(fwd.logits, batch.answers)},
            {"wall_seconds", seconds_since(t0)}};
        metrics << line.dump() << "\n";
        metrics.flush();
      }
      ++step;
    }

    const EvalReport rep = evaluate(model, val_ds, cfg.batch_size);
    const double acc = rep.overall.rate();
    result.epochs.push_back({epoch, acc, seconds_since(t0)});
    result.final_val_accuracy = acc;
    result.best_val_accuracy = std::max(result.best_val_accuracy, acc);

    if (to_disk) {
      nlohmann::json line = {{"epoch", epoch},
                             {"val_accuracy", acc},
                             {"wall_seconds", seconds_since(t0)}};
      epochs_log << line.dump() << "\n";
      epochs_log.flush();

      const Checkpoint ck =
          make_checkpoint(model.registry(), opts.config_text,
                          static_cast<std::uint64_t>(step), &opt);
      save_checkpoint(
          (out / ("checkpoint_epoch" + std::to_string(epoch) + ".bin"))
              .string(),
          ck);
      save_checkpoint((out / "checkpoint_last.bin").string(), ck);
    }

    if (cfg.early_stop_acc > 0.0 && acc >= cfg.early_stop_acc) {
      result.early_stopped = true;
      break;
    }
  }
  result.steps = step;
  return result;
}

}  // namespace qroute
