// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qroute/checkpoint.hpp"
#include "qroute/errors.hpp"
#include "qroute/eval.hpp"
#include "qroute/ops.hpp"
#include "qroute/train.hpp"

#include "dataset_util.hpp"

using namespace qroute;
using nlohmann::json;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("qroute_train_" + tag);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string str() const { return path.string(); }
};

ExperimentConfig tiny_config() {
  return ExperimentConfig::from_text(
      "seed = 11\n"
      "embed_dim = 8\n"
      "text_hidden = 12\n"
      "depths = 1,1\n"
      "widths = 8,8\n"
      "strides = 1,2\n"
      "stem_channels = 8\n"
      "cardinality = 4\n"
      "branch_width = 2\n"
      "d_t = 8\n"
      "heads = 2\n"
      "classifier_hidden = 16\n"
      "batch_size = 8\n"
      "epochs = 2\n"
      "warmup_steps = 3\n"
      "log_every = 2\n");
}

MiniShapesConfig small_data_config() {
  MiniShapesConfig cfg;
  cfg.grid = 4;
  cfg.resolution = 32;
  return cfg;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream out;
  out << f.rdbuf();
  return out.str();
}

std::vector<json> parse_jsonl(const std::filesystem::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  std::vector<json> lines;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) lines.push_back(json::parse(line));
  return lines;
}

std::vector<json> without_wall_clock(std::vector<json> lines) {
  for (json& j : lines) j.erase("wall_seconds");
  return lines;
}

/// Makes every logit constant: answers no longer depend on the input,
/// and the argmax is pinned to `answer`.
void pin_classifier_to(VqaModel& model, std::int64_t answer) {
  Tensor w = model.registry().find("classifier.fc2.weight");
  for (auto& x : w.data()) x = 0.0;
  Tensor b = model.registry().find("classifier.fc2.bias");
  auto bv = b.data();
  for (auto& x : bv) x = 0.0;
  bv[static_cast<std::size_t>(answer)] = 1.0;
}

}  // namespace

TEST_CASE("train: learning rate warms up linearly, then holds") {
  ExperimentConfig cfg;  // warmup 3e-6 -> 3e-4 over 500 steps
  CHECK(learning_rate_at(cfg, 0) == 3e-6);
  CHECK(std::abs(learning_rate_at(cfg, 250) -
                 (3e-6 + 0.5 * (3e-4 - 3e-6))) <= 1e-18);
  CHECK(std::abs(learning_rate_at(cfg, 499) -
                 (3e-6 + (499.0 / 500.0) * (3e-4 - 3e-6))) <= 1e-18);
  CHECK(learning_rate_at(cfg, 500) == 3e-4);
  CHECK(learning_rate_at(cfg, 100000) == 3e-4);

  // Strictly increasing through the warmup.
  for (std::int64_t s = 1; s <= 500; ++s)
    CHECK(learning_rate_at(cfg, s) > learning_rate_at(cfg, s - 1));

  cfg.warmup_steps = 0;
  CHECK(learning_rate_at(cfg, 0) == 3e-4);
}

TEST_CASE("eval: batches gather rows with their scene images") {
  LoadedDataset ds = test::memory_dataset(small_data_config(), 20, 100, 77);

  const std::vector<std::int64_t> idx = {3, 0, 7};
  Batch b = make_batch(ds, idx);
  CHECK(b.images.shape() == Shape{3, 3, 32, 32});
  REQUIRE(b.questions.size() == 3);
  REQUIRE(b.answers.size() == 3);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const QAInstance& q = ds.questions[static_cast<std::size_t>(idx[i])];
    CHECK(b.questions[i] == q.tokens);
    CHECK(b.answers[i] == q.answer);
    const Tensor img = ds.image(q.scene_id);
    const auto src = img.data();
    const auto dst = b.images.data();
    const std::size_t chw = src.size();
    CHECK(std::memcmp(src.data(), dst.data() + i * chw,
                      chw * sizeof(double)) == 0);
  }

  const std::vector<std::int64_t> bad = {20};
  CHECK_THROWS_AS(make_batch(ds, bad), ConfigError);

  LoadedDataset no_images;
  const std::vector<std::int64_t> zero = {0};
  CHECK_THROWS_AS(make_batch(no_images, zero), ConfigError);
}

TEST_CASE("eval: row argmax prefers the lowest tied column") {
  Tensor t = Tensor::zeros({3, 4});
  auto v = t.data();
  // row 0: strict max at 2; row 1: tie between 1 and 3; row 2: all equal.
  v[0] = 0.1; v[1] = 0.3; v[2] = 0.9; v[3] = 0.3;
  v[4] = 0.0; v[5] = 0.7; v[6] = 0.1; v[7] = 0.7;
  CHECK(argmax_rows(t) == std::vector<std::int64_t>{2, 1, 0});

  CHECK_THROWS_AS(argmax_rows(Tensor::zeros({4})), ShapeError);
}

TEST_CASE("eval: a constant classifier reports exact answer frequencies") {
  LoadedDataset ds = test::memory_dataset(small_data_config(), 60, 100, 5);
  ExperimentConfig cfg = tiny_config();
  VqaModel model(cfg, ds.vocab.size(),
                 static_cast<std::int64_t>(ds.answers.size()));

  // Pin the prediction to the most frequent answer in the split.
  std::map<std::int64_t, std::int64_t> freq;
  for (const QAInstance& q : ds.questions) ++freq[q.answer];
  std::int64_t top = 0, top_count = 0;
  for (const auto& [ans, count] : freq)
    if (count > top_count) { top = ans; top_count = count; }
  pin_classifier_to(model, top);

  EvalReport rep = evaluate(model, ds, cfg.batch_size);
  CHECK(rep.questions == 60);
  CHECK(rep.overall.total == 60);
  CHECK(rep.overall.correct == top_count);

  // Group tallies decompose the overall count exactly.
  std::int64_t type_total = 0, type_correct = 0;
  for (const auto& [name, acc] : rep.per_type) {
    CHECK(!name.empty());
    type_total += acc.total;
    type_correct += acc.correct;
  }
  CHECK(type_total == rep.overall.total);
  CHECK(type_correct == rep.overall.correct);

  std::int64_t sub_total = 0, sub_correct = 0;
  for (const auto& [name, acc] : rep.per_subtype) {
    CHECK(!name.empty());
    sub_total += acc.total;
    sub_correct += acc.correct;
  }
  CHECK(sub_total == rep.overall.total);
  CHECK(sub_correct == rep.overall.correct);

  // Count-weighted group rates reproduce the overall rate.
  double weighted = 0.0;
  for (const auto& [name, acc] : rep.per_type)
    weighted += acc.rate() * static_cast<double>(acc.total);
  CHECK(std::abs(weighted / 60.0 - rep.overall.rate()) <= 1e-12);

  // Gate tallies and execution ratios agree with each other.
  const auto& counts = model.backbone().module_counts();
  REQUIRE(rep.gate_open_counts.size() ==
          static_cast<std::size_t>(model.backbone().total_gates()));
  std::int64_t offset = 0, open_total = 0;
  for (std::size_t l = 0; l < counts.size(); ++l) {
    std::int64_t open = 0;
    for (std::int64_t g = 0; g < counts[l]; ++g) {
      const std::int64_t c =
          rep.gate_open_counts[static_cast<std::size_t>(offset + g)];
      CHECK(c >= 0);
      CHECK(c <= rep.questions);
      open += c;
    }
    CHECK(rep.layer_execution_ratio[l] ==
          static_cast<double>(open) /
              static_cast<double>(rep.questions * counts[l]));
    CHECK(rep.layer_execution_ratio[l] >= 0.0);
    CHECK(rep.layer_execution_ratio[l] <= 1.0);
    offset += counts[l];
    open_total += open;
  }
  CHECK(rep.mean_execution_ratio ==
        static_cast<double>(open_total) /
            static_cast<double>(rep.questions *
                                model.backbone().total_gates()));

  // The same gates open for the same questions on a second pass.
  EvalReport again = evaluate(model, ds, 7);  // different batching
  CHECK(again.overall.correct == rep.overall.correct);
  CHECK(again.gate_open_counts == rep.gate_open_counts);

  CHECK_THROWS_AS(evaluate(model, ds, 0), ConfigError);
}

TEST_CASE("eval: an empty dataset yields an empty report") {
  ExperimentConfig cfg = tiny_config();
  VqaModel model(cfg, 33, 21);
  LoadedDataset empty;
  empty.vocab = minishapes_vocab();
  empty.answers = minishapes_answers();

  EvalReport rep = evaluate(model, empty, 8);
  CHECK(rep.questions == 0);
  CHECK(rep.overall.total == 0);
  CHECK(rep.overall.rate() == 0.0);
  CHECK(rep.per_type.empty());
  CHECK(rep.mean_execution_ratio == 0.0);
  for (std::int64_t c : rep.gate_open_counts) CHECK(c == 0);
}

TEST_CASE("train: a short run writes metrics, epoch stats and checkpoints") {
  MiniShapesConfig data_cfg = small_data_config();
  LoadedDataset train_ds = test::memory_dataset(data_cfg, 42, 100, 21);
  LoadedDataset val_ds = test::memory_dataset(data_cfg, 12, 900, 22);

  ExperimentConfig cfg = tiny_config();
  VqaModel model(cfg, train_ds.vocab.size(),
                 static_cast<std::int64_t>(train_ds.answers.size()));

  TempDir dir("short_run");
  TrainOptions opts;
  opts.out_dir = dir.str();
  opts.config_text = "seed = 11\n";
  TrainResult result = train_model(model, train_ds, val_ds, opts);

  // 42 questions in batches of 8 -> 6 steps per epoch, 2 epochs.
  CHECK(result.steps == 12);
  REQUIRE(result.epochs.size() == 2);
  CHECK(result.epochs[0].epoch == 1);
  CHECK(result.epochs[1].epoch == 2);
  CHECK(result.final_val_accuracy == result.epochs[1].val_accuracy);
  CHECK(result.best_val_accuracy ==
        std::max(result.epochs[0].val_accuracy,
                 result.epochs[1].val_accuracy));
  CHECK(!result.early_stopped);

  // metrics.jsonl: steps 0,2,4,6,8,10 at log_every = 2.
  const std::vector<json> metrics = parse_jsonl(dir.path / "metrics.jsonl");
  REQUIRE(metrics.size() == 6);
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    const json& line = metrics[i];
    const std::int64_t step = line.at("step").get<std::int64_t>();
    CHECK(step == static_cast<std::int64_t>(2 * i));
    CHECK(line.at("epoch").get<std::int64_t>() == (step < 6 ? 1 : 2));
    CHECK(line.at("lr").get<double>() == learning_rate_at(cfg, step));
    const double l_vqa = line.at("l_vqa").get<double>();
    const double l_load = line.at("l_load").get<double>();
    const double loss = line.at("loss").get<double>();
    CHECK(std::isfinite(loss));
    CHECK(std::abs(loss - (l_vqa + cfg.lambda * l_load)) <= 1e-12);
    CHECK(line.at("batch_accuracy").get<double>() >= 0.0);
    CHECK(line.at("batch_accuracy").get<double>() <= 1.0);
    CHECK(line.at("wall_seconds").get<double>() >= 0.0);
  }

  const std::vector<json> epochs = parse_jsonl(dir.path / "epochs.jsonl");
  REQUIRE(epochs.size() == 2);
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    CHECK(epochs[i].at("epoch").get<std::int64_t>() ==
          static_cast<std::int64_t>(i + 1));
    CHECK(epochs[i].at("val_accuracy").get<double>() ==
          result.epochs[i].val_accuracy);
  }

  // Per-epoch checkpoints, with "last" an exact copy of the newest one.
  CHECK(std::filesystem::exists(dir.path / "checkpoint_epoch1.bin"));
  CHECK(std::filesystem::exists(dir.path / "checkpoint_epoch2.bin"));
  CHECK(read_file(dir.path / "checkpoint_last.bin") ==
        read_file(dir.path / "checkpoint_epoch2.bin"));

  const Checkpoint last =
      load_checkpoint((dir.path / "checkpoint_last.bin").string());
  CHECK(last.step == 12);
  CHECK(last.config_text == "seed = 11\n");

  LoadedDataset empty;
  CHECK_THROWS_AS(train_model(model, empty, val_ds, opts), ConfigError);
}

TEST_CASE("train: reruns reproduce logs and checkpoints bit for bit") {
  MiniShapesConfig data_cfg = small_data_config();
  LoadedDataset train_ds = test::memory_dataset(data_cfg, 20, 100, 31);
  LoadedDataset val_ds = test::memory_dataset(data_cfg, 10, 900, 32);

  ExperimentConfig cfg = tiny_config();
  cfg.epochs = 1;

  TempDir dir_a("rerun_a");
  TempDir dir_b("rerun_b");
  for (const TempDir* dir : {&dir_a, &dir_b}) {
    VqaModel model(cfg, train_ds.vocab.size(),
                   static_cast<std::int64_t>(train_ds.answers.size()));
    TrainOptions opts;
    opts.out_dir = dir->str();
    opts.config_text = "epochs = 1\n";
    train_model(model, train_ds, val_ds, opts);
  }

  CHECK(read_file(dir_a.path / "checkpoint_last.bin") ==
        read_file(dir_b.path / "checkpoint_last.bin"));
  CHECK(without_wall_clock(parse_jsonl(dir_a.path / "metrics.jsonl")) ==
        without_wall_clock(parse_jsonl(dir_b.path / "metrics.jsonl")));
  CHECK(without_wall_clock(parse_jsonl(dir_a.path / "epochs.jsonl")) ==
        without_wall_clock(parse_jsonl(dir_b.path / "epochs.jsonl")));
}

TEST_CASE("train: reaching the target validation accuracy stops the run") {
  MiniShapesConfig data_cfg = small_data_config();
  LoadedDataset train_ds = test::memory_dataset(data_cfg, 16, 100, 41);
  LoadedDataset val_ds = test::memory_dataset(data_cfg, 30, 900, 42);

  // Start from a classifier pinned to the most common validation
  // answer: two optimization steps per epoch cannot flip a unit bias
  // gap, so the first validation lands at that answer's frequency.
  std::map<std::int64_t, std::int64_t> freq;
  for (const QAInstance& q : val_ds.questions) ++freq[q.answer];
  std::int64_t top = 0, top_count = 0;
  for (const auto& [ans, count] : freq)
    if (count > top_count) { top = ans; top_count = count; }

  // Reference run: no early stop, two epochs.
  ExperimentConfig cfg = tiny_config();
  TrainOptions no_files;
  double epoch1_acc = 0.0;
  {
    VqaModel model(cfg, train_ds.vocab.size(),
                   static_cast<std::int64_t>(train_ds.answers.size()));
    pin_classifier_to(model, top);
    TrainResult r = train_model(model, train_ds, val_ds, no_files);
    REQUIRE(r.epochs.size() == 2);
    epoch1_acc = r.epochs[0].val_accuracy;
  }
  REQUIRE(epoch1_acc > 0.0);

  // Asking for exactly that accuracy stops after the first epoch.
  cfg.early_stop_acc = epoch1_acc;
  VqaModel model(cfg, train_ds.vocab.size(),
                 static_cast<std::int64_t>(train_ds.answers.size()));
  pin_classifier_to(model, top);
  TrainResult r = train_model(model, train_ds, val_ds, no_files);
  CHECK(r.early_stopped);
  CHECK(r.epochs.size() == 1);
  CHECK(r.steps == 2);  // 16 questions / batch 8, one epoch
  CHECK(r.final_val_accuracy == epoch1_acc);
}

TEST_CASE("train: a non-finite loss aborts with a diagnostic") {
  MiniShapesConfig data_cfg = small_data_config();
  LoadedDataset train_ds = test::memory_dataset(data_cfg, 8, 100, 51);
  LoadedDataset val_ds = test::memory_dataset(data_cfg, 8, 900, 52);

  ExperimentConfig cfg = tiny_config();
  cfg.epochs = 1;
  VqaModel model(cfg, train_ds.vocab.size(),
                 static_cast<std::int64_t>(train_ds.answers.size()));
  {
    Tensor b = model.registry().find("classifier.fc2.bias");
    b.data()[0] = std::numeric_limits<double>::quiet_NaN();
  }

  TrainOptions no_files;
  try {
    train_model(model, train_ds, val_ds, no_files);
    FAIL("expected the run to abort");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("training diverged at step 0") != std::string::npos);
    CHECK(msg.find("answer loss") != std::string::npos);
    CHECK(msg.find("load balance") != std::string::npos);
  }
}

TEST_CASE("train: the balance term enters the total with its weight") {
  MiniShapesConfig data_cfg = small_data_config();
  LoadedDataset train_ds = test::memory_dataset(data_cfg, 8, 100, 61);
  LoadedDataset val_ds = test::memory_dataset(data_cfg, 8, 900, 62);

  auto first_step_line = [&](double lambda) {
    ExperimentConfig cfg = tiny_config();
    cfg.epochs = 1;
    cfg.log_every = 1;
    cfg.lambda = lambda;
    VqaModel model(cfg, train_ds.vocab.size(),
                   static_cast<std::int64_t>(train_ds.answers.size()));
    TempDir dir("lambda_probe");
    TrainOptions opts;
    opts.out_dir = dir.str();
    TrainResult r = train_model(model, train_ds, val_ds, opts);
    CHECK(r.steps == 1);
    const std::vector<json> metrics = parse_jsonl(dir.path / "metrics.jsonl");
    REQUIRE(metrics.size() == 1);
    return metrics[0];
  };

  const json plain = first_step_line(0.0);
  const json weighted = first_step_line(0.01);

  // The weight scales the penalty in the total but leaves both raw
  // terms untouched.
  CHECK(plain.at("l_vqa").get<double>() ==
        weighted.at("l_vqa").get<double>());
  CHECK(plain.at("l_load").get<double>() ==
        weighted.at("l_load").get<double>());
  CHECK(plain.at("loss").get<double>() == plain.at("l_vqa").get<double>());
  const double expect = weighted.at("l_vqa").get<double>() +
                        0.01 * weighted.at("l_load").get<double>();
  CHECK(std::abs(weighted.at("loss").get<double>() - expect) <= 1e-15);
}
