// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>
#include <string>
#include <vector>

#include "qroute/config.hpp"
#include "qroute/errors.hpp"

using namespace qroute;

namespace {

template <typename Fn>
std::string config_error_of(Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config: key=value parsing with comments and whitespace") {
  const std::string text =
      "# toy run\n"
      "seed = 7\n"
      "  lr=3e-4  # peak\n"
      "\n"
      "name = branch run\n"
      "depths = 1, 2,2 ,1\n"
      "flag = true\n";
  KeyValueConfig kv = KeyValueConfig::parse(text, "test.cfg");

  CHECK(kv.has("seed"));
  CHECK_FALSE(kv.has("missing"));
  CHECK(kv.get_int("seed", 0) == 7);
  CHECK(kv.get_double("lr", 0.0) == 3e-4);
  CHECK(kv.get_string("name", "") == "branch run");
  CHECK(kv.get_int_list("depths", {}) ==
        std::vector<std::int64_t>{1, 2, 2, 1});
  CHECK(kv.get_bool("flag", false));
  CHECK(kv.get_int("missing", 42) == 42);
  CHECK(kv.get_bool("missing", true));
  CHECK(kv.text() == text);
  CHECK(kv.unread_keys().empty());
}

TEST_CASE("config: malformed lines and values are rejected with location") {
  CHECK(config_error_of([] {
          KeyValueConfig::parse("a = 1\nbroken line\n", "x.cfg");
        }).find("x.cfg:2") != std::string::npos);
  CHECK(config_error_of([] { KeyValueConfig::parse("= 3\n", "x.cfg"); })
            .find("empty key") != std::string::npos);
  CHECK(config_error_of([] {
          KeyValueConfig::parse("a = 1\na = 2\n", "x.cfg");
        }).find("duplicate key 'a'") != std::string::npos);

  KeyValueConfig kv = KeyValueConfig::parse(
      "n = twelve\nf = 1.2.3\nb = maybe\nl = 1,,2\n");
  CHECK_THROWS_AS(kv.get_int("n", 0), ConfigError);
  CHECK_THROWS_AS(kv.get_double("f", 0.0), ConfigError);
  CHECK_THROWS_AS(kv.get_bool("b", false), ConfigError);
  CHECK_THROWS_AS(kv.get_int_list("l", {}), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::load("/nonexistent/path.cfg"), ConfigError);
}

TEST_CASE("config: unread keys are reported") {
  KeyValueConfig kv = KeyValueConfig::parse("a = 1\nb = 2\nc = 3\n");
  kv.get_int("b", 0);
  const std::vector<std::string> unread = kv.unread_keys();
  CHECK(unread == std::vector<std::string>{"a", "c"});
}

TEST_CASE("config: experiment defaults describe the toy branch model") {
  ExperimentConfig cfg = ExperimentConfig::from_text("");
  CHECK(cfg.seed == 1);
  CHECK(cfg.embed_dim == 48);
  CHECK(cfg.text_hidden == 96);
  CHECK(cfg.backbone.granularity == Granularity::Branch);
  CHECK(cfg.backbone.depths == std::vector<std::int64_t>{1, 1, 1, 1});
  CHECK(cfg.backbone.widths == std::vector<std::int64_t>{16, 32, 32, 32});
  CHECK(cfg.backbone.stage_strides == std::vector<int>{1, 2, 2, 2});
  CHECK(cfg.backbone.cardinality == 8);
  CHECK(cfg.backbone.branch_width == 4);
  CHECK(cfg.fusion.attention);
  CHECK(cfg.fusion.with_q);
  CHECK(cfg.fusion.d_t == 128);
  CHECK(cfg.fusion.heads == 4);
  CHECK(cfg.fusion.classifier_hidden == 256);
  CHECK(cfg.tau == 1.0);
  CHECK(cfg.lambda == 0.01);
  CHECK(cfg.batch_size == 64);
  CHECK(cfg.epochs == 20);
  CHECK(cfg.lr == 3e-4);
  CHECK(cfg.warmup_start_lr == 3e-6);
  CHECK(cfg.warmup_steps == 500);
  CHECK(cfg.adam_beta1 == 0.9);
  CHECK(cfg.adam_beta2 == 0.999);
  CHECK(cfg.adam_eps == 1e-8);
  CHECK(cfg.log_every == 50);
  CHECK(cfg.early_stop_acc == 0.0);
}

TEST_CASE("config: experiment overrides and strictness") {
  ExperimentConfig cfg = ExperimentConfig::from_text(
      "granularity = filter\n"
      "depths = 1,1\n"
      "widths = 8,8\n"
      "strides = 1,2\n"
      "stem_channels = 8\n"
      "attention = false\n"
      "with_q = 0\n"
      "tau = 0.5\n"
      "lambda = 0\n"
      "epochs = 3\n"
      "early_stop_acc = 0.9\n");
  CHECK(cfg.backbone.granularity == Granularity::Filter);
  CHECK(cfg.backbone.depths == std::vector<std::int64_t>{1, 1});
  CHECK(cfg.backbone.stage_strides == std::vector<int>{1, 2});
  CHECK_FALSE(cfg.fusion.attention);
  CHECK_FALSE(cfg.fusion.with_q);
  CHECK(cfg.tau == 0.5);
  CHECK(cfg.lambda == 0.0);
  CHECK(cfg.epochs == 3);
  CHECK(cfg.early_stop_acc == 0.9);

  CHECK(config_error_of([] {
          ExperimentConfig::from_text("granulrity = filter\n");
        }).find("unknown configuration keys: granulrity") !=
        std::string::npos);
  CHECK(config_error_of([] {
          ExperimentConfig::from_text("granularity = fine\n");
        }).find("granularity") != std::string::npos);
  CHECK_THROWS_AS(ExperimentConfig::from_text("tau = 0\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_text("lambda = -0.5\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_text("batch_size = 0\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_text("early_stop_acc = 1.5\n"),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_text("adam_beta1 = 1.0\n"),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_text("depths = 1,1\n"), ConfigError);

  const std::string path = "/tmp/qroute_test_config.cfg";
  std::ofstream(path) << "seed = 9\nepochs = 2\n";
  ExperimentConfig from_file = ExperimentConfig::load(path);
  CHECK(from_file.seed == 9);
  CHECK(from_file.epochs == 2);
}
