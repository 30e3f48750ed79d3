// SPDX-License-Identifier: Apache-2.0
#include "qroute/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qroute/errors.hpp"

namespace qroute {
namespace {

const std::vector<std::string> kShapeWords = {"square", "circle", "triangle"};
const std::vector<std::string> kColorWords = {"red", "green", "blue", "yellow"};
const std::vector<std::string> kSizeWords = {"small", "large"};

// Fill colors (RGB) and the background.
constexpr unsigned char kBackground[3] = {40, 40, 40};
constexpr unsigned char kFill[4][3] = {
    {220, 60, 50},   // red
    {70, 180, 75},   // green
    {55, 110, 220},  // blue
    {230, 200, 60},  // yellow
};

// Shape extent as a fraction of the cell side.
constexpr double kSmallFill = 0.5;
constexpr double kLargeFill = 0.9;

}  // namespace

const std::string& word_of(ShapeKind s) {
  return kShapeWords[static_cast<std::size_t>(s)];
}
const std::string& word_of(ColorName c) {
  return kColorWords[static_cast<std::size_t>(c)];
}
const std::string& word_of(SizeName z) {
  return kSizeWords[static_cast<std::size_t>(z)];
}

std::optional<ShapeKind> shape_from_word(const std::string& w) {
  for (int i = 0; i < 3; ++i)
    if (kShapeWords[std::size_t(i)] == w) return static_cast<ShapeKind>(i);
  return std::nullopt;
}
std::optional<ColorName> color_from_word(const std::string& w) {
  for (int i = 0; i < 4; ++i)
    if (kColorWords[std::size_t(i)] == w) return static_cast<ColorName>(i);
  return std::nullopt;
}
std::optional<SizeName> size_from_word(const std::string& w) {
  for (int i = 0; i < 2; ++i)
    if (kSizeWords[std::size_t(i)] == w) return static_cast<SizeName>(i);
  return std::nullopt;
}

const std::string& type_name(QuestionType t) {
  static const std::vector<std::string> names = {
      "Count", "Exist", "CompareNumbers", "QueryAttribute",
      "CompareAttribute"};
  return names[static_cast<std::size_t>(t)];
}

QuestionType type_from_name(const std::string& name) {
  for (int t = 0; t < 5; ++t) {
    if (type_name(static_cast<QuestionType>(t)) == name)
      return static_cast<QuestionType>(t);
  }
  throw ConfigError("unknown question type '" + name + "'");
}

Vocab minishapes_vocab() {
  std::vector<std::string> tokens = {
      Vocab::kPad, "how",  "many",   "are",    "there", "is",     "a",
      "what",      "do",   "the",    "and",    "have",  "same",   "number",
      "of",        "as",   "more",   "fewer",  "than",  "objects", "object",
      "color",     "shape", "size"};
  for (const auto& w : kSizeWords) tokens.push_back(w);
  for (const auto& w : kColorWords) tokens.push_back(w);
  for (const auto& w : kShapeWords) tokens.push_back(w);
  return Vocab::from_tokens(std::move(tokens));
}

const std::vector<std::string>& minishapes_answers() {
  static const std::vector<std::string> answers = [] {
    std::vector<std::string> a;
    for (int d = 0; d <= 9; ++d) a.push_back(std::to_string(d));
    a.push_back("yes");
    a.push_back("no");
    for (const auto& w : kColorWords) a.push_back(w);
    for (const auto& w : kShapeWords) a.push_back(w);
    for (const auto& w : kSizeWords) a.push_back(w);
    return a;
  }();
  return answers;
}

std::int64_t answer_id(const std::string& word) {
  const auto& answers = minishapes_answers();
  for (std::size_t i = 0; i < answers.size(); ++i) {
    if (answers[i] == word) return static_cast<std::int64_t>(i);
  }
  throw ConfigError("'" + word + "' is not in the answer vocabulary");
}

bool Selector::matches(const SceneObject& o) const {
  if (size && *size != o.size) return false;
  if (color && *color != o.color) return false;
  if (shape && *shape != o.shape) return false;
  return true;
}

std::vector<std::string> Selector::words() const {
  std::vector<std::string> w;
  if (size) w.push_back(word_of(*size));
  if (color) w.push_back(word_of(*color));
  if (shape) w.push_back(word_of(*shape));
  return w;
}

std::int64_t count_matches(const SceneGraph& scene, const Selector& sel) {
  std::int64_t n = 0;
  for (const auto& o : scene.objects)
    if (sel.matches(o)) ++n;
  return n;
}

void MiniShapesConfig::validate() const {
  if (grid < 2) throw ConfigError("grid must be at least 2");
  if (resolution < 8 * grid)
    throw ConfigError("resolution must give every cell at least 8 pixels");
  if (resolution % grid != 0)
    throw ConfigError("resolution must be a multiple of the grid size");
  if (train_questions < 0 || val_questions < 0)
    throw ConfigError("question counts must be non-negative");
  if (questions_per_scene < 1)
    throw ConfigError("questions_per_scene must be positive");
  const double mix[] = {p_count, p_exist, p_query, p_compare_attr,
                        p_compare_num};
  double total = 0.0;
  for (double p : mix) {
    if (p < 0.0) throw ConfigError("question type proportions must be >= 0");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-9)
    throw ConfigError("question type proportions must sum to 1");
}

SceneGraph generate_scene(const MiniShapesConfig& cfg, std::int64_t scene_id,
                          RngStream& rng) {
  cfg.validate();
  SceneGraph scene;
  scene.id = scene_id;
  scene.grid = cfg.grid;

  const std::int64_t cells = std::int64_t(cfg.grid) * cfg.grid;
  // Counts are capped at 9 so every possible count is a digit answer.
  const std::int64_t max_objects = std::min<std::int64_t>(9, cells);
  const std::int64_t count =
      2 + std::int64_t(rng.uniform_int(std::uint64_t(max_objects - 1)));

  std::vector<std::int64_t> order(static_cast<std::size_t>(cells));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  for (std::int64_t i = 0; i < count; ++i) {
    SceneObject o;
    o.row = int(order[std::size_t(i)] / cfg.grid);
    o.col = int(order[std::size_t(i)] % cfg.grid);
    o.shape = static_cast<ShapeKind>(rng.uniform_int(3));
    o.color = static_cast<ColorName>(rng.uniform_int(4));
    o.size = static_cast<SizeName>(rng.uniform_int(2));
    scene.objects.push_back(o);
  }
  return scene;
}

ImageRgb8 render_scene_rgb8(const SceneGraph& scene, int resolution) {
  if (scene.grid < 2) throw ConfigError("grid must be at least 2");
  if (resolution < 8 * scene.grid)
    throw ConfigError("resolution must give every cell at least 8 pixels");
  if (resolution % scene.grid != 0)
    throw ConfigError("resolution must be a multiple of the grid size");

  ImageRgb8 img;
  img.width = resolution;
  img.height = resolution;
  img.pixels.assign(std::size_t(resolution) * std::size_t(resolution) * 3, 0);
  for (std::int64_t y = 0; y < resolution; ++y)
    for (std::int64_t x = 0; x < resolution; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = kBackground[c];

  const int cs = resolution / scene.grid;
  for (const auto& o : scene.objects) {
    if (o.row < 0 || o.row >= scene.grid || o.col < 0 || o.col >= scene.grid)
      throw ConfigError("scene object lies outside the grid");
    const double frac = (o.size == SizeName::Large) ? kLargeFill : kSmallFill;
    const double extent = frac * cs;  // shape width and height in pixels
    const double cx = o.col * cs + cs / 2.0;
    const double cy = o.row * cs + cs / 2.0;
    const unsigned char* fill = kFill[static_cast<std::size_t>(o.color)];

    for (int py = o.row * cs; py < (o.row + 1) * cs; ++py) {
      for (int px = o.col * cs; px < (o.col + 1) * cs; ++px) {
        const double dx = px + 0.5 - cx;
        const double dy = py + 0.5 - cy;
        bool inside = false;
        switch (o.shape) {
          case ShapeKind::Square:
            inside = std::fabs(dx) <= extent / 2 && std::fabs(dy) <= extent / 2;
            break;
          case ShapeKind::Circle:
            inside = dx * dx + dy * dy <= (extent / 2) * (extent / 2);
            break;
          case ShapeKind::Triangle: {
            // Upward-pointing isoceles triangle: apex at the top of the
            // extent, full width at the bottom.
            const double t = (dy + extent / 2) / extent;
            inside = t >= 0.0 && t <= 1.0 && std::fabs(dx) <= t * extent / 2;
            break;
          }
        }
        if (inside)
          for (int c = 0; c < 3; ++c) img.at(py, px, c) = fill[c];
      }
    }
  }
  return img;
}

Tensor image_to_tensor(const ImageRgb8& image) {
  Tensor t = Tensor::zeros({3, image.height, image.width});
  auto d = t.data();
  const std::int64_t hw = image.height * image.width;
  for (std::int64_t y = 0; y < image.height; ++y)
    for (std::int64_t x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c)
        d[std::size_t(c * hw + y * image.width + x)] =
            image.at(y, x, c) / 255.0;
  return t;
}

Tensor render_scene(const SceneGraph& scene, int resolution) {
  return image_to_tensor(render_scene_rgb8(scene, resolution));
}

AnswerStats majority_stats(const std::vector<QAInstance>& questions) {
  AnswerStats s;
  s.questions = static_cast<std::int64_t>(questions.size());
  if (questions.empty()) return s;
  std::map<std::int64_t, std::int64_t> freq;
  for (const auto& q : questions) ++freq[q.answer];
  std::int64_t best = -1, best_count = -1;
  for (const auto& [ans, count] : freq) {
    if (count > best_count) {
      best = ans;
      best_count = count;
    }
  }
  s.majority_answer = minishapes_answers()[static_cast<std::size_t>(best)];
  s.majority_rate = double(best_count) / double(s.questions);
  return s;
}

std::map<std::string, AnswerStats> per_type_stats(
    const std::vector<QAInstance>& questions) {
  std::map<std::string, std::vector<QAInstance>> groups;
  for (const auto& q : questions) groups[type_name(q.type)].push_back(q);
  std::map<std::string, AnswerStats> out;
  for (const auto& [name, group] : groups) out[name] = majority_stats(group);
  return out;
}

}  // namespace qroute
