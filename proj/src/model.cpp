// SPDX-License-Identifier: Apache-2.0
#include "qroute/model.hpp"

#include "qroute/errors.hpp"

namespace qroute {
namespace {

const ExperimentConfig& validated(const ExperimentConfig& cfg) {
  cfg.validate();
  return cfg;
}

void check_batch(const Tensor& images,
                 const std::vector<std::vector<std::int64_t>>& questions) {
  if (images.shape().size() != 4)
    throw ShapeError("model expects images [N, C, H, W]");
  if (images.dim(0) != static_cast<std::int64_t>(questions.size()))
    throw ShapeError("image batch and question batch differ in size");
}

}  // namespace

VqaModel::VqaModel(const ExperimentConfig& cfg, std::int64_t vocab_size,
                   std::int64_t answers)
    : cfg_(validated(cfg)),
      vocab_size_(vocab_size),
      answers_(answers),
      init_rng_(cfg.seed, "init"),
      text_(reg_, "text", vocab_size, cfg.embed_dim, cfg.text_hidden,
            init_rng_),
      visual_(reg_, cfg.backbone, init_rng_),
      routing_(reg_, "routing", cfg.text_hidden, visual_.module_counts(),
               init_rng_),
      fusion_(reg_, "fusion", "classifier", cfg.fusion, visual_.out_channels(),
              cfg.text_hidden, answers, init_rng_) {
  if (vocab_size <= 0 || answers <= 0)
    throw ConfigError("vocabulary and answer sizes must be positive");
}

ModelOutput VqaModel::forward_train(
    const Tensor& images, const std::vector<std::vector<std::int64_t>>& questions,
    RngStream& noise_rng) {
  check_batch(images, questions);
  ModelOutput out;
  out.q = text_.encode(questions);
  out.paths = routing_.route(out.q, cfg_.tau, noise_rng);
  const Tensor features = visual_.forward(images, out.paths, /*train=*/true);
  out.logits = fusion_.forward(features, out.q);
  return out;
}

ModelOutput VqaModel::forward_eval(
    const Tensor& images,
    const std::vector<std::vector<std::int64_t>>& questions) {
  check_batch(images, questions);
  ModelOutput out;
  out.q = text_.encode(questions);
  out.paths = routing_.deterministic_route(out.q);
  const Tensor features = visual_.forward(images, out.paths, /*train=*/false);
  out.logits = fusion_.forward(features, out.q);
  return out;
}

}  // namespace qroute
