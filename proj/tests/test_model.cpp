// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "qroute/checkpoint.hpp"
#include "qroute/errors.hpp"
#include "qroute/model.hpp"
#include "qroute/ops.hpp"
#include "qroute/tape.hpp"

using namespace qroute;

namespace {

// A model small enough for fast forward/backward in tests.
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
      "batch_size = 4\n");
}

Tensor random_images(std::int64_t n, std::int64_t hw, RngStream& rng) {
  Tensor t = Tensor::zeros({n, 3, hw, hw});
  auto v = t.data();
  for (auto& x : v) x = rng.uniform(0.0, 1.0);
  return t;
}

std::vector<std::vector<std::int64_t>> some_questions(std::int64_t n) {
  std::vector<std::vector<std::int64_t>> qs;
  for (std::int64_t i = 0; i < n; ++i)
    qs.push_back({1 + i % 5, 2, 3 + i % 3, 4});
  return qs;
}

bool bits_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  const auto va = a.data();
  const auto vb = b.data();
  return std::memcmp(va.data(), vb.data(), va.size() * sizeof(double)) == 0;
}

double grad_norm(const Tensor& t) {
  double s = 0.0;
  for (double g : t.grad()) s += g * g;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("model: assembly wires encoder, routing, backbone and fusion") {
  ExperimentConfig cfg = tiny_config();
  VqaModel model(cfg, /*vocab_size=*/33, /*answers=*/21);

  // One registry, canonical prefixes.
  ParamRegistry& reg = model.registry();
  CHECK(reg.find("text.embedding.weight").shape() == Shape{33, 8});
  CHECK(reg.find("visual.stem.conv.weight").dim(0) == 8);
  CHECK(reg.find("routing.fc.weight").shape() == Shape{8, 12});
  // Fusion sees the feature channels plus two coordinate maps (10),
  // concatenated with the question encoding (12).
  CHECK(reg.find("fusion.in_proj.weight").shape() == Shape{8, 22});
  CHECK(reg.find("classifier.fc2.weight").shape() == Shape{21, 16});

  // Routing covers the backbone's gate layout.
  CHECK(model.routing().module_counts() ==
        model.backbone().module_counts());
  CHECK(model.routing().total_gates() == 8);

  const std::int64_t n = 3;
  RngStream data_rng(5, "images");
  Tensor images = random_images(n, 32, data_rng);
  auto questions = some_questions(n);

  RngStream noise(9, "routing-noise");
  ModelOutput out = model.forward_train(images, questions, noise);
  CHECK(out.logits.shape() == Shape{n, 21});
  CHECK(out.paths.shape() == Shape{n, 8});
  CHECK(out.q.shape() == Shape{n, 12});
  for (double g : out.paths.data()) CHECK((g == 0.0 || g == 1.0));

  ModelOutput eval1 = model.forward_eval(images, questions);
  ModelOutput eval2 = model.forward_eval(images, questions);
  CHECK(bits_equal(eval1.logits, eval2.logits));
  CHECK(bits_equal(eval1.paths, eval2.paths));

  // Evaluation paths are exactly the thresholded routing logits.
  Tensor logits = model.routing().logits(eval1.q);
  const auto lv = logits.data();
  const auto pv = eval1.paths.data();
  for (std::size_t i = 0; i < lv.size(); ++i)
    CHECK(pv[i] == (lv[i] > 0.0 ? 1.0 : 0.0));
}

TEST_CASE("model: initialization is a pure function of the seed") {
  ExperimentConfig cfg = tiny_config();
  VqaModel a(cfg, 33, 21);
  VqaModel b(cfg, 33, 21);
  REQUIRE(a.registry().params().size() == b.registry().params().size());
  for (std::size_t i = 0; i < a.registry().params().size(); ++i) {
    const auto& pa = a.registry().params()[i];
    const auto& pb = b.registry().params()[i];
    CHECK(pa.name == pb.name);
    CHECK(bits_equal(pa.tensor, pb.tensor));
  }

  ExperimentConfig other = cfg;
  other.seed = 12;
  VqaModel c(other, 33, 21);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.registry().params().size(); ++i)
    if (!bits_equal(a.registry().params()[i].tensor,
                    c.registry().params()[i].tensor))
      any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("model: question gradients flow through the routing path alone") {
  // With the question stripped from the fusion head, routing is the only
  // channel from the text encoder to the logits.
  ExperimentConfig cfg = tiny_config();
  cfg.fusion.attention = false;
  cfg.fusion.with_q = false;
  VqaModel model(cfg, 33, 21);

  RngStream data_rng(6, "images");
  Tensor images = random_images(2, 32, data_rng);
  auto questions = some_questions(2);

  Tape tape;
  {
    TapeScope scope(tape);
    RngStream noise(4, "noise");
    ModelOutput out = model.forward_train(images, questions, noise);
    model.registry().zero_grad();
    tape.backward(sum(out.logits));
  }
  const Tensor embed = model.registry().find("text.embedding.weight");
  const Tensor routing_w = model.registry().find("routing.fc.weight");
  CHECK(grad_norm(routing_w) > 0.0);
  CHECK(grad_norm(embed) > 0.0);
}

TEST_CASE("model: checkpoints restore the whole assembly") {
  ExperimentConfig cfg = tiny_config();
  VqaModel a(cfg, 33, 21);

  RngStream data_rng(7, "images");
  Tensor images = random_images(2, 32, data_rng);
  auto questions = some_questions(2);

  Checkpoint ck = make_checkpoint(a.registry(), "cfg-text", 17, nullptr);
  CHECK(ck.step == 17);
  CHECK(ck.config_text == "cfg-text");

  VqaModel b(cfg, 33, 21);
  VqaModel c(cfg, 33, 21);
  // Perturb b so the restore visibly overwrites it.
  {
    Tensor w = b.registry().find("classifier.fc2.bias");
    auto v = w.data();
    v[0] = 7.5;
  }
  apply_checkpoint(ck, b.registry(), nullptr);
  apply_checkpoint(ck, c.registry(), nullptr);

  ModelOutput ob = b.forward_eval(images, questions);
  ModelOutput oc = c.forward_eval(images, questions);
  CHECK(bits_equal(ob.logits, oc.logits));
  CHECK(bits_equal(ob.paths, oc.paths));

  // Restored values are the float32 rounding of the originals.
  const Tensor wa = a.registry().find("classifier.fc2.bias");
  const Tensor wb = b.registry().find("classifier.fc2.bias");
  const auto va = wa.data();
  const auto vb = wb.data();
  for (std::size_t i = 0; i < va.size(); ++i)
    CHECK(vb[i] == static_cast<double>(static_cast<float>(va[i])));
}

TEST_CASE("model: contract violations are rejected") {
  ExperimentConfig cfg = tiny_config();
  CHECK_THROWS_AS(VqaModel(cfg, 0, 21), ConfigError);
  CHECK_THROWS_AS(VqaModel(cfg, 33, 0), ConfigError);

  VqaModel model(cfg, 33, 21);
  RngStream rng(3, "images");
  Tensor images = random_images(2, 32, rng);
  CHECK_THROWS_AS(model.forward_eval(images, some_questions(3)), ShapeError);
  CHECK_THROWS_AS(model.forward_eval(Tensor::zeros({2, 3, 32}),
                                     some_questions(2)),
                  ShapeError);
}
