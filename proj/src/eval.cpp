// SPDX-License-Identifier: Apache-2.0
#include "qroute/eval.hpp"

#include <algorithm>
#include <numeric>

#include "qroute/errors.hpp"
#include "qroute/ops.hpp"

namespace qroute {

Batch make_batch(const LoadedDataset& ds,
                 std::span<const std::int64_t> indices) {
  if (ds.resolution <= 0)
    throw ConfigError("dataset carries no images; load it with images");
  const std::int64_t n = static_cast<std::int64_t>(indices.size());
  const std::int64_t hw = static_cast<std::int64_t>(ds.resolution);
  const std::int64_t chw = 3 * hw * hw;

  Batch b;
  b.images = Tensor::zeros({n, 3, hw, hw});
  auto dst = b.images.data();
  b.questions.reserve(indices.size());
  b.answers.reserve(indices.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const std::size_t row = static_cast<std::size_t>(indices[i]);
    if (row >= ds.questions.size())
      throw ConfigError("question index " + std::to_string(indices[i]) +
                        " outside the dataset");
    const QAInstance& q = ds.questions[row];
    const Tensor img = ds.image(q.scene_id);
    const auto src = img.data();
    std::copy(src.begin(), src.end(),
              dst.begin() + static_cast<std::size_t>(i * chw));
    b.questions.push_back(q.tokens);
    b.answers.push_back(q.answer);
  }
  return b;
}

EvalReport evaluate(VqaModel& model, const LoadedDataset& ds,
                    std::int64_t batch_size) {
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");

  EvalReport rep;
  const auto& counts = model.backbone().module_counts();
  const std::int64_t gates = model.backbone().total_gates();
  rep.gate_open_counts.assign(static_cast<std::size_t>(gates), 0);
  rep.layer_execution_ratio.assign(counts.size(), 0.0);
  rep.questions = static_cast<std::int64_t>(ds.questions.size());
  if (rep.questions == 0) return rep;

  for (std::int64_t start = 0; start < rep.questions; start += batch_size) {
    const std::int64_t stop = std::min(rep.questions, start + batch_size);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    Batch b = make_batch(ds, idx);

    // No tape is installed, so the forward pass records nothing.
    ModelOutput out = model.forward_eval(b.images, b.questions);
    const std::vector<std::int64_t> pred = argmax_rows(out.logits);
    for (std::size_t r = 0; r < pred.size(); ++r) {
      const QAInstance& q =
          ds.questions[static_cast<std::size_t>(start) + r];
      const bool hit = pred[r] == q.answer;
      ++rep.overall.total;
      rep.overall.correct += hit;
      Accuracy& by_type = rep.per_type[type_name(q.type)];
      ++by_type.total;
      by_type.correct += hit;
      Accuracy& by_sub = rep.per_subtype[q.subtype];
      ++by_sub.total;
      by_sub.correct += hit;
    }

    const auto path = out.paths.data();
    for (std::int64_t r = 0; r < stop - start; ++r)
      for (std::int64_t g = 0; g < gates; ++g)
        if (path[static_cast<std::size_t>(r * gates + g)] != 0.0)
          ++rep.gate_open_counts[static_cast<std::size_t>(g)];
  }

  std::int64_t offset = 0;
  std::int64_t open_total = 0;
  for (std::size_t l = 0; l < counts.size(); ++l) {
    std::int64_t open = 0;
    for (std::int64_t g = 0; g < counts[l]; ++g)
      open += rep.gate_open_counts[static_cast<std::size_t>(offset + g)];
    rep.layer_execution_ratio[l] =
        static_cast<double>(open) /
        static_cast<double>(rep.questions * counts[l]);
    offset += counts[l];
    open_total += open;
  }
  rep.mean_execution_ratio =
      static_cast<double>(open_total) /
      static_cast<double>(rep.questions * gates);
  return rep;
}

}  // namespace qroute
