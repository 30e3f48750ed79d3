// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "qroute/png_io.hpp"
#include "qroute/rng.hpp"
#include "qroute/tensor.hpp"
#include "qroute/text_encoder.hpp"

namespace qroute {

// MiniShapes: procedurally generated grid scenes of colored shapes with
// templated questions in five types, answered symbolically from the
// scene graph. The fixed question vocabulary and answer list below are
// part of the dataset format.

enum class ShapeKind { Square, Circle, Triangle };
enum class ColorName { Red, Green, Blue, Yellow };
enum class SizeName { Small, Large };

const std::string& word_of(ShapeKind s);
const std::string& word_of(ColorName c);
const std::string& word_of(SizeName z);

std::optional<ShapeKind> shape_from_word(const std::string& w);
std::optional<ColorName> color_from_word(const std::string& w);
std::optional<SizeName> size_from_word(const std::string& w);

struct SceneObject {
  ShapeKind shape = ShapeKind::Square;
  ColorName color = ColorName::Red;
  SizeName size = SizeName::Small;
  int row = 0;
  int col = 0;

  bool operator==(const SceneObject&) const = default;
};

struct SceneGraph {
  std::int64_t id = 0;
  int grid = 4;
  std::vector<SceneObject> objects;

  bool operator==(const SceneGraph&) const = default;
};

enum class QuestionType {
  Count,
  Exist,
  CompareNumbers,
  QueryAttribute,
  CompareAttribute
};

const std::string& type_name(QuestionType t);
QuestionType type_from_name(const std::string& name);

struct QAInstance {
  std::int64_t scene_id = 0;
  std::vector<std::int64_t> tokens;  // question vocabulary ids
  QuestionType type = QuestionType::Count;
  std::string subtype;
  std::int64_t answer = 0;  // answer vocabulary id

  bool operator==(const QAInstance&) const = default;
};

/// The fixed ~30-word question vocabulary (padding token first).
Vocab minishapes_vocab();
/// The fixed answer list: digits 0-9, yes/no, colors, shapes, sizes.
const std::vector<std::string>& minishapes_answers();
/// Index of an answer word in minishapes_answers(); ConfigError if absent.
std::int64_t answer_id(const std::string& word);

/// A conjunction of optional attribute constraints; an empty selector
/// matches every object.
struct Selector {
  std::optional<SizeName> size;
  std::optional<ColorName> color;
  std::optional<ShapeKind> shape;

  bool empty() const { return !size && !color && !shape; }
  bool matches(const SceneObject& o) const;
  /// Attribute words in size-color-shape order.
  std::vector<std::string> words() const;

  bool operator==(const Selector&) const = default;
};

std::int64_t count_matches(const SceneGraph& scene, const Selector& sel);

struct MiniShapesConfig {
  int grid = 4;
  int resolution = 64;
  std::int64_t train_questions = 10000;
  std::int64_t val_questions = 2000;
  int questions_per_scene = 5;
  // Question type mix; must sum to 1.
  double p_count = 0.25;
  double p_exist = 0.25;
  double p_query = 0.25;
  double p_compare_attr = 0.15;
  double p_compare_num = 0.10;

  /// Throws ConfigError: grid >= 2, resolution a multiple of grid and
  /// at least 8 pixels per cell, positive counts, mix summing to 1.
  void validate() const;
};

/// Samples object count, cells and attributes; at most one object per
/// cell, between 2 and min(9, grid^2) objects (counts stay answerable
/// with digit answers).
SceneGraph generate_scene(const MiniShapesConfig& cfg, std::int64_t scene_id,
                          RngStream& rng);

/// Rasterizes the scene: fixed background, one filled shape per object
/// centered in its cell, sized as a fraction of the cell. Deterministic.
ImageRgb8 render_scene_rgb8(const SceneGraph& scene, int resolution);
/// Same image as a [3,H,W] tensor scaled to [0,1].
Tensor render_scene(const SceneGraph& scene, int resolution);
Tensor image_to_tensor(const ImageRgb8& image);

/// Builds one templated question of the given type, or nullopt when the
/// scene cannot satisfy the template (caller resamples the scene). The
/// stored answer always equals answer_oracle on the emitted tokens.
std::optional<QAInstance> generate_question(const SceneGraph& scene,
                                            QuestionType type, RngStream& rng);

/// Evaluates a templated question symbolically against the scene graph
/// and returns the answer id. Malformed token sequences throw
/// ConfigError.
std::int64_t answer_oracle(const SceneGraph& scene,
                           const std::vector<std::int64_t>& tokens);

struct DatasetSplit {
  std::vector<SceneGraph> scenes;
  std::vector<QAInstance> questions;
};

/// Deterministically generates `question_count` questions over fresh
/// scenes (scene ids counting up from `first_scene_id`), grouping up to
/// questions_per_scene questions on each scene. Each scene draws from
/// its own rng label, so the result is independent of generation order.
DatasetSplit build_split(const MiniShapesConfig& cfg,
                         std::int64_t question_count,
                         std::int64_t first_scene_id, std::uint64_t seed);

struct AnswerStats {
  std::int64_t questions = 0;
  std::string majority_answer;
  double majority_rate = 0.0;
};

AnswerStats majority_stats(const std::vector<QAInstance>& questions);
std::map<std::string, AnswerStats> per_type_stats(
    const std::vector<QAInstance>& questions);

/// Writes images/, questions.jsonl, scenes.jsonl, vocab.txt,
/// answers.txt and stats.json under `dir` (created if needed). All text
/// files are UTF-8 and newline-terminated.
void write_dataset(const DatasetSplit& split, const MiniShapesConfig& cfg,
                   const std::string& dir);

struct LoadedDataset {
  int grid = 0;
  int resolution = 0;
  Vocab vocab;
  std::vector<std::string> answers;
  std::vector<SceneGraph> scenes;
  std::vector<QAInstance> questions;
  std::unordered_map<std::int64_t, std::size_t> scene_index;
  std::unordered_map<std::int64_t, ImageRgb8> images;  // by scene id

  const SceneGraph& scene(std::int64_t id) const;
  /// [3,H,W] tensor of the stored image; requires load_images=true.
  Tensor image(std::int64_t scene_id) const;
};

/// Reads a dataset directory written by write_dataset, validating
/// cross-references. Corrupt files raise ConfigError naming the file
/// and line.
LoadedDataset read_dataset(const std::string& dir, bool load_images = true);

}  // namespace qroute
