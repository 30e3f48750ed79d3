// SPDX-License-Identifier: Apache-2.0
#include "qroute/analysis.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <utility>

#include "qroute/errors.hpp"
#include "qroute/eval.hpp"
#include "qroute/ops.hpp"
#include "qroute/tape.hpp"

namespace qroute {
namespace {

double quantile_sorted(const std::vector<double>& v, double p) {
  const std::size_t n = v.size();
  if (n == 1) return v[0];
  const double h = static_cast<double>(n - 1) * p;
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= n) return v[n - 1];
  const double frac = h - static_cast<double>(lo);
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

/// Runs the deterministic forward pass over the dataset in batches and
/// hands each batch's 0/1 paths to `consume(first_row, paths)`.
template <typename Fn>
void for_each_path_batch(VqaModel& model, const LoadedDataset& ds,
                         std::int64_t batch_size, Fn&& consume) {
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  const std::int64_t n = static_cast<std::int64_t>(ds.questions.size());
  for (std::int64_t start = 0; start < n; start += batch_size) {
    const std::int64_t stop = std::min(n, start + batch_size);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    const Batch b = make_batch(ds, idx);
    const ModelOutput out = model.forward_eval(b.images, b.questions);
    consume(start, out.paths);
  }
}

}  // namespace

QuantileSummary five_number_summary(std::vector<double> values) {
  if (values.empty())
    throw ConfigError("cannot summarize an empty sample");
  std::sort(values.begin(), values.end());
  QuantileSummary s;
  s.min = values.front();
  s.q1 = quantile_sorted(values, 0.25);
  s.median = quantile_sorted(values, 0.5);
  s.q3 = quantile_sorted(values, 0.75);
  s.max = values.back();
  return s;
}

void export_routing_paths(VqaModel& model, const LoadedDataset& ds,
                          std::int64_t batch_size, std::ostream& out) {
  const auto& counts = model.backbone().module_counts();
  const auto& stages = model.backbone().layer_stage();
  out << "question_id,type,subtype,stage,bits\n";

  for_each_path_batch(
      model, ds, batch_size,
      [&](std::int64_t first_row, const Tensor& paths) {
        const auto pv = paths.data();
        const std::int64_t gates = paths.dim(1);
        for (std::int64_t r = 0; r < paths.dim(0); ++r) {
          const std::int64_t row = first_row + r;
          const QAInstance& q =
              ds.questions[static_cast<std::size_t>(row)];
          std::int64_t offset = 0;
          std::size_t layer = 0;
          while (layer < counts.size()) {
            const std::int64_t stage = stages[layer];
            std::string bits;
            // All consecutive layers of this stage contribute bits.
            while (layer < counts.size() && stages[layer] == stage) {
              for (std::int64_t g = 0; g < counts[layer]; ++g) {
                const double v =
                    pv[static_cast<std::size_t>(r * gates + offset + g)];
                bits.push_back(v != 0.0 ? '1' : '0');
              }
              offset += counts[layer];
              ++layer;
            }
            out << row << ',' << type_name(q.type) << ',' << q.subtype
                << ',' << stage + 1 << ',' << bits << '\n';
          }
        }
      });
}

void export_routing_paths(VqaModel& model, const LoadedDataset& ds,
                          std::int64_t batch_size, const std::string& path) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  export_routing_paths(model, ds, batch_size, f);
}

ExecutionRatioReport execution_ratio_report(VqaModel& model,
                                            const LoadedDataset& ds,
                                            std::int64_t batch_size) {
  if (ds.questions.empty())
    throw ConfigError("cannot analyze an empty dataset");

  const auto& counts = model.backbone().module_counts();
  const auto& stages = model.backbone().layer_stage();
  const std::int64_t questions =
      static_cast<std::int64_t>(ds.questions.size());

  // Per-layer, per-question fraction of executed modules.
  std::vector<std::vector<double>> ratios(counts.size());
  for (auto& r : ratios) r.reserve(static_cast<std::size_t>(questions));

  for_each_path_batch(
      model, ds, batch_size,
      [&](std::int64_t, const Tensor& paths) {
        const auto pv = paths.data();
        const std::int64_t gates = paths.dim(1);
        for (std::int64_t r = 0; r < paths.dim(0); ++r) {
          std::int64_t offset = 0;
          for (std::size_t l = 0; l < counts.size(); ++l) {
            std::int64_t open = 0;
            for (std::int64_t g = 0; g < counts[l]; ++g)
              open += pv[static_cast<std::size_t>(r * gates + offset + g)]
                          != 0.0;
            ratios[l].push_back(static_cast<double>(open) /
                                static_cast<double>(counts[l]));
            offset += counts[l];
          }
        }
      });

  ExecutionRatioReport rep;
  rep.questions = questions;
  double weighted_open = 0.0;
  std::int64_t total_gates = 0;
  for (std::size_t l = 0; l < counts.size(); ++l) {
    LayerExecutionSummary s;
    s.layer = static_cast<std::int64_t>(l) + 1;
    s.stage = stages[l] + 1;
    s.modules = counts[l];
    s.ratio = five_number_summary(ratios[l]);
    s.mean_ratio =
        std::accumulate(ratios[l].begin(), ratios[l].end(), 0.0) /
        static_cast<double>(questions);
    rep.layers.push_back(s);
    weighted_open += s.mean_ratio * static_cast<double>(counts[l]);
    total_gates += counts[l];
  }
  rep.mean_execution_ratio = weighted_open / static_cast<double>(total_gates);
  rep.compute_reduction = 1.0 - rep.mean_execution_ratio;
  return rep;
}

std::string to_json(const ExecutionRatioReport& report) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerExecutionSummary& s : report.layers) {
    layers.push_back({{"layer", s.layer},
                      {"stage", s.stage},
                      {"modules", s.modules},
                      {"mean_ratio", s.mean_ratio},
                      {"ratio", {{"min", s.ratio.min},
                                 {"q1", s.ratio.q1},
                                 {"median", s.ratio.median},
                                 {"q3", s.ratio.q3},
                                 {"max", s.ratio.max}}}});
  }
  nlohmann::json j = {{"questions", report.questions},
                      {"layers", layers},
                      {"mean_execution_ratio", report.mean_execution_ratio},
                      {"compute_reduction", report.compute_reduction}};
  return j.dump(2);
}

SaliencyResult saliency_map(VqaModel& model, const Tensor& image,
                            const std::vector<std::int64_t>& tokens) {
  Shape shape = image.shape();
  if (shape.size() == 3) shape.insert(shape.begin(), 1);
  if (shape.size() != 4 || shape[0] != 1 || shape[1] != 3)
    throw ShapeError("saliency_map expects one [3,H,W] image");
  const std::int64_t h = shape[2];
  const std::int64_t w = shape[3];

  Tensor x = Tensor::zeros(shape, /*requires_grad=*/true);
  {
    const auto src = image.data();
    auto dst = x.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }

  SaliencyResult res;
  Tape tape;
  {
    TapeScope scope(tape);
    ModelOutput out = model.forward_eval(x, {tokens});
    res.answer = argmax_rows(out.logits)[0];
    // d(winning logit) / d(pixels)
    tape.backward(select(out.logits, 1, res.answer));
  }

  res.map = Tensor::zeros({h, w});
  auto mv = res.map.data();
  const auto gv = x.grad();
  if (!gv.empty())
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t i = 0; i < h * w; ++i) {
        const double g =
            std::abs(gv[static_cast<std::size_t>(c * h * w + i)]);
        mv[static_cast<std::size_t>(i)] =
            std::max(mv[static_cast<std::size_t>(i)], g);
      }
  res.peak = *std::max_element(mv.begin(), mv.end());
  if (res.peak > 0.0)
    for (auto& v : mv) v /= res.peak;
  return res;
}

ImageRgb8 saliency_to_image(const Tensor& map) {
  if (map.ndim() != 2) throw ShapeError("saliency map must be [H,W]");
  ImageRgb8 img;
  img.height = map.dim(0);
  img.width = map.dim(1);
  img.pixels.assign(
      static_cast<std::size_t>(img.height * img.width * 3), 0);
  const auto mv = map.data();
  for (std::int64_t i = 0; i < img.height * img.width; ++i) {
    const double v = std::clamp(mv[static_cast<std::size_t>(i)], 0.0, 1.0);
    const auto byte = static_cast<unsigned char>(std::lround(255.0 * v));
    img.pixels[static_cast<std::size_t>(3 * i) + 0] = byte;
    img.pixels[static_cast<std::size_t>(3 * i) + 1] = byte;
    img.pixels[static_cast<std::size_t>(3 * i) + 2] = byte;
  }
  return img;
}

SaliencyMaskStats saliency_mask_stats(const Tensor& map,
                                      const SceneGraph& scene) {
  if (map.ndim() != 2 || map.dim(0) != map.dim(1))
    throw ShapeError("saliency map must be square [H,W]");
  const int res = static_cast<int>(map.dim(0));

  const ImageRgb8 full = render_scene_rgb8(scene, res);
  SceneGraph empty = scene;
  empty.objects.clear();
  const ImageRgb8 bare = render_scene_rgb8(empty, res);

  SaliencyMaskStats st;
  double in_sum = 0.0, out_sum = 0.0;
  const auto mv = map.data();
  for (std::int64_t y = 0; y < res; ++y)
    for (std::int64_t x = 0; x < res; ++x) {
      const bool in = full.at(y, x, 0) != bare.at(y, x, 0) ||
                      full.at(y, x, 1) != bare.at(y, x, 1) ||
                      full.at(y, x, 2) != bare.at(y, x, 2);
      const double v = mv[static_cast<std::size_t>(y * res + x)];
      if (in) {
        ++st.in_pixels;
        in_sum += v;
      } else {
        ++st.out_pixels;
        out_sum += v;
      }
    }
  st.in_mean = st.in_pixels == 0 ? 0.0
                                 : in_sum / static_cast<double>(st.in_pixels);
  st.out_mean =
      st.out_pixels == 0 ? 0.0 : out_sum / static_cast<double>(st.out_pixels);
  if (st.out_mean > 0.0)
    st.ratio = st.in_mean / st.out_mean;
  else
    st.ratio = st.in_mean > 0.0
                   ? std::numeric_limits<double>::infinity()
                   : 0.0;
  return st;
}

}  // namespace qroute
