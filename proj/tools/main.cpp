// SPDX-License-Identifier: Apache-2.0
//
// qroute: generate MiniShapes data, train the question-routed model,
// and inspect what the routing learned.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "qroute/analysis.hpp"
#include "qroute/checkpoint.hpp"
#include "qroute/config.hpp"
#include "qroute/dataset.hpp"
#include "qroute/errors.hpp"
#include "qroute/eval.hpp"
#include "qroute/train.hpp"

namespace {

using namespace qroute;

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream out;
  out << f.rdbuf();
  return out.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f << content;
}

std::string detokenize(const Vocab& vocab,
                       const std::vector<std::int64_t>& tokens) {
  std::string text;
  for (std::int64_t id : tokens) {
    if (!text.empty()) text.push_back(' ');
    text += vocab.token(id);
  }
  return text;
}

void print_accuracy_table(const std::map<std::string, Accuracy>& rows,
                          const std::string& title) {
  std::cout << title << "\n";
  for (const auto& [name, acc] : rows)
    std::cout << "  " << std::left << std::setw(28) << name << std::right
              << std::setw(5) << acc.correct << " / " << std::setw(5)
              << acc.total << "  " << std::fixed << std::setprecision(4)
              << acc.rate() << "\n";
}

void print_eval_report(const EvalReport& rep) {
  std::cout << "questions: " << rep.questions << "\n"
            << "overall accuracy: " << std::fixed << std::setprecision(4)
            << rep.overall.rate() << " (" << rep.overall.correct << " / "
            << rep.overall.total << ")\n";
  print_accuracy_table(rep.per_type, "per question type:");
  print_accuracy_table(rep.per_subtype, "per template:");
  std::cout << "layer execution ratios:";
  for (double r : rep.layer_execution_ratio)
    std::cout << ' ' << std::fixed << std::setprecision(4) << r;
  std::cout << "\nmean execution ratio: " << std::fixed
            << std::setprecision(4) << rep.mean_execution_ratio
            << " (compute reduction " << 1.0 - rep.mean_execution_ratio
            << ")\n";
}

nlohmann::json accuracy_json(const Accuracy& a) {
  return {{"correct", a.correct}, {"total", a.total}, {"rate", a.rate()}};
}

nlohmann::json report_json(const EvalReport& rep) {
  nlohmann::json per_type, per_subtype;
  for (const auto& [name, acc] : rep.per_type)
    per_type[name] = accuracy_json(acc);
  for (const auto& [name, acc] : rep.per_subtype)
    per_subtype[name] = accuracy_json(acc);
  return {{"questions", rep.questions},
          {"overall", accuracy_json(rep.overall)},
          {"per_type", per_type},
          {"per_subtype", per_subtype},
          {"gate_open_counts", rep.gate_open_counts},
          {"layer_execution_ratio", rep.layer_execution_ratio},
          {"mean_execution_ratio", rep.mean_execution_ratio}};
}

/// Rebuilds the model a checkpoint was trained with and restores its
/// parameters; the experiment config rides inside the checkpoint.
struct RestoredModel {
  ExperimentConfig cfg;
  VqaModel model;
};

RestoredModel restore(const std::string& checkpoint_path,
                      const LoadedDataset& ds) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  ExperimentConfig cfg = ExperimentConfig::from_text(
      ck.config_text, checkpoint_path + ":config");
  VqaModel model(cfg, ds.vocab.size(),
                 static_cast<std::int64_t>(ds.answers.size()));
  apply_checkpoint(ck, model.registry(), nullptr);
  return {cfg, std::move(model)};
}

// ---- subcommands ----

struct GenDataArgs {
  std::string out;
  std::int64_t train_questions = 10000;
  std::int64_t val_questions = 2000;
  std::uint64_t seed = 1;
  int grid = 4;
  int resolution = 64;
  int questions_per_scene = 5;
};

void cmd_gen_data(const GenDataArgs& args) {
  MiniShapesConfig cfg;
  cfg.grid = args.grid;
  cfg.resolution = args.resolution;
  cfg.questions_per_scene = args.questions_per_scene;
  cfg.train_questions = args.train_questions;
  cfg.val_questions = args.val_questions;
  cfg.validate();

  const DatasetSplit train =
      build_split(cfg, args.train_questions, 0, args.seed);
  // Fresh scene ids keep the validation scenes disjoint from training.
  const std::int64_t val_first = train.scenes.back().id + 1;
  const DatasetSplit val =
      build_split(cfg, args.val_questions, val_first, args.seed);

  write_dataset(train, cfg, args.out + "/train");
  write_dataset(val, cfg, args.out + "/val");

  for (const auto& [name, split] :
       {std::pair<const char*, const DatasetSplit&>{"train", train},
        {"val", val}}) {
    const AnswerStats st = majority_stats(split.questions);
    std::cout << name << ": " << split.questions.size() << " questions on "
              << split.scenes.size() << " scenes; majority answer '"
              << st.majority_answer << "' at " << std::fixed
              << std::setprecision(4) << st.majority_rate << "\n";
  }
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
};

void cmd_train(const TrainArgs& args) {
  const std::string config_text = read_file(args.config);
  const ExperimentConfig cfg =
      ExperimentConfig::from_text(config_text, args.config);
  const LoadedDataset train_ds = read_dataset(args.data + "/train");
  const LoadedDataset val_ds = read_dataset(args.data + "/val");

  VqaModel model(cfg, train_ds.vocab.size(),
                 static_cast<std::int64_t>(train_ds.answers.size()));
  std::cout << "model parameters: "
            << model.registry().total_param_count() << "\n"
            << "train questions: " << train_ds.questions.size()
            << ", val questions: " << val_ds.questions.size() << "\n";

  TrainOptions opts;
  opts.out_dir = args.out;
  opts.config_text = config_text;
  const TrainResult result = train_model(model, train_ds, val_ds, opts);

  for (const EpochStat& e : result.epochs)
    std::cout << "epoch " << e.epoch << ": val accuracy " << std::fixed
              << std::setprecision(4) << e.val_accuracy << " ("
              << std::setprecision(1) << e.wall_seconds << "s)\n";
  std::cout << "steps: " << result.steps << "\n"
            << "best val accuracy: " << std::fixed << std::setprecision(4)
            << result.best_val_accuracy << "\n"
            << (result.early_stopped ? "stopped early at the target\n" : "");

  EvalReport rep = evaluate(model, val_ds, cfg.batch_size);
  print_eval_report(rep);
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "val";
  std::string json_out;
};

void cmd_eval(const EvalArgs& args) {
  const LoadedDataset ds = read_dataset(args.data + "/" + args.split);
  RestoredModel rm = restore(args.checkpoint, ds);
  const EvalReport rep = evaluate(rm.model, ds, rm.cfg.batch_size);
  print_eval_report(rep);
  if (!args.json_out.empty())
    write_file(args.json_out, report_json(rep).dump(2) + "\n");
}

struct AnalyzeArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "val";
  std::string out;
};

void cmd_analyze(const AnalyzeArgs& args) {
  const LoadedDataset ds = read_dataset(args.data + "/" + args.split);
  RestoredModel rm = restore(args.checkpoint, ds);
  std::filesystem::create_directories(args.out);

  const std::string csv_path = args.out + "/routing_paths.csv";
  export_routing_paths(rm.model, ds, rm.cfg.batch_size, csv_path);

  const ExecutionRatioReport rep =
      execution_ratio_report(rm.model, ds, rm.cfg.batch_size);
  write_file(args.out + "/execution_ratios.json", to_json(rep) + "\n");

  std::cout << "wrote " << csv_path << "\n";
  for (const LayerExecutionSummary& s : rep.layers)
    std::cout << "layer " << s.layer << " (stage " << s.stage << ", "
              << s.modules << " modules): mean ratio " << std::fixed
              << std::setprecision(4) << s.mean_ratio << ", median "
              << s.ratio.median << "\n";
  std::cout << "mean execution ratio: " << std::fixed << std::setprecision(4)
            << rep.mean_execution_ratio << " (compute reduction "
            << rep.compute_reduction << ")\n";
}

struct SaliencyArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "val";
  std::int64_t question = 0;
  std::string out;
};

void cmd_saliency(const SaliencyArgs& args) {
  const LoadedDataset ds = read_dataset(args.data + "/" + args.split);
  if (args.question < 0 ||
      args.question >= static_cast<std::int64_t>(ds.questions.size()))
    throw ConfigError("question index " + std::to_string(args.question) +
                      " outside the split (" +
                      std::to_string(ds.questions.size()) + " questions)");
  RestoredModel rm = restore(args.checkpoint, ds);
  std::filesystem::create_directories(args.out);

  const QAInstance& q =
      ds.questions[static_cast<std::size_t>(args.question)];
  const SaliencyResult sal =
      saliency_map(rm.model, ds.image(q.scene_id), q.tokens);
  const SaliencyMaskStats st =
      saliency_mask_stats(sal.map, ds.scene(q.scene_id));

  const std::string base =
      args.out + "/saliency_q" + std::to_string(args.question);
  write_png_rgb8(base + ".png", saliency_to_image(sal.map));

  nlohmann::json sidecar = {
      {"question_id", args.question},
      {"scene_id", q.scene_id},
      {"question", detokenize(ds.vocab, q.tokens)},
      {"answer", ds.answers[static_cast<std::size_t>(q.answer)]},
      {"predicted", ds.answers[static_cast<std::size_t>(sal.answer)]},
      {"gradient_peak", sal.peak},
      {"object_pixels", st.in_pixels},
      {"background_pixels", st.out_pixels},
      {"object_mean_saliency", st.in_mean},
      {"background_mean_saliency", st.out_mean},
      {"in_out_ratio", st.ratio}};
  write_file(base + ".json", sidecar.dump(2) + "\n");

  std::cout << "wrote " << base << ".png\n"
            << "question: " << detokenize(ds.vocab, q.tokens) << "\n"
            << "answer: " << ds.answers[static_cast<std::size_t>(q.answer)]
            << ", predicted: "
            << ds.answers[static_cast<std::size_t>(sal.answer)] << "\n"
            << "object/background saliency: " << std::fixed
            << std::setprecision(4) << st.in_mean << " / " << st.out_mean
            << " (ratio " << st.ratio << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Question-routed modular network on MiniShapes"};
  app.require_subcommand(1);

  GenDataArgs gen;
  CLI::App* gen_cmd =
      app.add_subcommand("gen-data", "Generate a MiniShapes dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--train-questions", gen.train_questions,
                      "Training questions", true);
  gen_cmd->add_option("--val-questions", gen.val_questions,
                      "Validation questions", true);
  gen_cmd->add_option("--seed", gen.seed, "Generator seed", true);
  gen_cmd->add_option("--grid", gen.grid, "Scene grid side", true);
  gen_cmd->add_option("--resolution", gen.resolution, "Image side in pixels",
                      true);
  gen_cmd->add_option("--questions-per-scene", gen.questions_per_scene,
                      "Questions per scene", true);

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", train.config, "Experiment config file")
      ->required();
  train_cmd->add_option("--data", train.data,
                        "Dataset directory (train/ and val/)")
      ->required();
  train_cmd
      ->add_option("--out", train.out, "Run directory for logs/checkpoints")
      ->required();

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")
      ->required();
  eval_cmd->add_option("--data", eval_args.data, "Dataset directory")
      ->required();
  eval_cmd->add_option("--split", eval_args.split, "Split subdirectory",
                       true);
  eval_cmd->add_option("--json", eval_args.json_out,
                       "Also write the report as JSON");

  AnalyzeArgs analyze;
  CLI::App* analyze_cmd = app.add_subcommand(
      "analyze", "Export routing paths and execution statistics");
  analyze_cmd
      ->add_option("--checkpoint", analyze.checkpoint, "Checkpoint file")
      ->required();
  analyze_cmd->add_option("--data", analyze.data, "Dataset directory")
      ->required();
  analyze_cmd->add_option("--split", analyze.split, "Split subdirectory",
                          true);
  analyze_cmd->add_option("--out", analyze.out, "Output directory")
      ->required();

  SaliencyArgs sal;
  CLI::App* sal_cmd = app.add_subcommand(
      "saliency", "Input-gradient saliency for one question");
  sal_cmd->add_option("--checkpoint", sal.checkpoint, "Checkpoint file")
      ->required();
  sal_cmd->add_option("--data", sal.data, "Dataset directory")->required();
  sal_cmd->add_option("--split", sal.split, "Split subdirectory", true);
  sal_cmd->add_option("--question", sal.question,
                      "Question row index within the split", true);
  sal_cmd->add_option("--out", sal.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
    if (gen_cmd->parsed()) cmd_gen_data(gen);
    if (train_cmd->parsed()) cmd_train(train);
    if (eval_cmd->parsed()) cmd_eval(eval_args);
    if (analyze_cmd->parsed()) cmd_analyze(analyze);
    if (sal_cmd->parsed()) cmd_saliency(sal);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
