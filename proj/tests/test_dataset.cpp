// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qroute/dataset.hpp"
#include "qroute/errors.hpp"
#include "qroute/rng.hpp"

using namespace qroute;

namespace {

std::vector<std::int64_t> toks(const std::string& text) {
  static const Vocab vocab = minishapes_vocab();
  return vocab.encode(text);
}

std::string answer_of(const SceneGraph& scene, const std::string& text) {
  const std::int64_t id = answer_oracle(scene, toks(text));
  return minishapes_answers()[static_cast<std::size_t>(id)];
}

SceneObject obj(ShapeKind sh, ColorName co, SizeName sz, int row, int col) {
  SceneObject o;
  o.shape = sh;
  o.color = co;
  o.size = sz;
  o.row = row;
  o.col = col;
  return o;
}

// Scene used by the hand-checked question tests: one large red square,
// one small blue circle, one small green triangle.
SceneGraph three_object_scene() {
  SceneGraph s;
  s.id = 5;
  s.grid = 4;
  s.objects = {obj(ShapeKind::Square, ColorName::Red, SizeName::Large, 0, 0),
               obj(ShapeKind::Circle, ColorName::Blue, SizeName::Small, 1, 1),
               obj(ShapeKind::Triangle, ColorName::Green, SizeName::Small, 2, 3)};
  return s;
}

// Fresh directory under /tmp, wiped on construction and destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag)
      : path(std::filesystem::temp_directory_path() /
             ("qroute_dataset_" + tag)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string str() const { return path.string(); }
};

template <typename Fn>
std::string config_error_of(Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

bool pixel_is(const ImageRgb8& img, std::int64_t y, std::int64_t x, int r,
              int g, int b) {
  return img.at(y, x, 0) == r && img.at(y, x, 1) == g && img.at(y, x, 2) == b;
}

// Count of pixels in a grid cell that exactly match a fill color.
std::int64_t cell_fill_count(const ImageRgb8& img, int cell_size, int row,
                             int col, int r, int g, int b) {
  std::int64_t n = 0;
  for (int y = row * cell_size; y < (row + 1) * cell_size; ++y)
    for (int x = col * cell_size; x < (col + 1) * cell_size; ++x)
      if (pixel_is(img, y, x, r, g, b)) ++n;
  return n;
}

// Independent re-statement of the question semantics, used to audit the
// generator's stored answers. Shares no parsing or counting code with
// the library: it works on decoded words and its own attribute tables.
namespace audit {

bool is_size_word(const std::string& w) { return w == "small" || w == "large"; }
bool is_color_word(const std::string& w) {
  return w == "red" || w == "green" || w == "blue" || w == "yellow";
}
bool is_shape_word(const std::string& w) {
  return w == "square" || w == "circle" || w == "triangle";
}

std::string shape_word(ShapeKind s) {
  if (s == ShapeKind::Square) return "square";
  if (s == ShapeKind::Circle) return "circle";
  return "triangle";
}
std::string color_word(ColorName c) {
  if (c == ColorName::Red) return "red";
  if (c == ColorName::Green) return "green";
  if (c == ColorName::Blue) return "blue";
  return "yellow";
}
std::string size_word(SizeName z) {
  return z == SizeName::Small ? "small" : "large";
}

struct Sel {
  std::optional<std::string> size, color, shape;
};

Sel read_selector(const std::vector<std::string>& w, std::size_t& i) {
  Sel s;
  while (i < w.size()) {
    if (is_size_word(w[i]) && !s.size)
      s.size = w[i];
    else if (is_color_word(w[i]) && !s.color)
      s.color = w[i];
    else if (is_shape_word(w[i]) && !s.shape)
      s.shape = w[i];
    else
      break;
    ++i;
  }
  return s;
}

bool sel_matches(const Sel& s, const SceneObject& o) {
  if (s.size && *s.size != size_word(o.size)) return false;
  if (s.color && *s.color != color_word(o.color)) return false;
  if (s.shape && *s.shape != shape_word(o.shape)) return false;
  return true;
}

int count(const SceneGraph& scene, const Sel& s) {
  int n = 0;
  for (const auto& o : scene.objects)
    if (sel_matches(s, o)) ++n;
  return n;
}

const SceneObject* unique_match(const SceneGraph& scene, const Sel& s) {
  const SceneObject* found = nullptr;
  for (const auto& o : scene.objects) {
    if (!sel_matches(s, o)) continue;
    if (found) return nullptr;
    found = &o;
  }
  return found;
}

std::string attr_value(const SceneObject& o, const std::string& attr) {
  if (attr == "size") return size_word(o.size);
  if (attr == "color") return color_word(o.color);
  if (attr == "shape") return shape_word(o.shape);
  return "";
}

// Answers a decoded question word sequence; returns "" when it cannot
// parse or answer, which the caller treats as an audit failure.
std::string answer(const SceneGraph& scene, const std::vector<std::string>& w) {
  std::size_t i = 0;
  auto next = [&]() -> std::string {
    return i < w.size() ? w[i++] : std::string();
  };
  auto match = [&](std::initializer_list<const char*> expect) {
    for (const char* e : expect)
      if (next() != e) return false;
    return true;
  };
  auto yes_no = [](bool b) -> std::string { return b ? "yes" : "no"; };

  const std::string head = next();
  if (head == "how") {
    if (!match({"many"})) return "";
    Sel s = read_selector(w, i);
    if (!match({"objects", "are", "there"}) || i != w.size()) return "";
    const int n = count(scene, s);
    return n <= 9 ? std::to_string(n) : "";
  }
  if (head == "is") {
    if (!match({"there", "a"})) return "";
    Sel s = read_selector(w, i);
    if (!match({"object"}) || i != w.size()) return "";
    return yes_no(count(scene, s) > 0);
  }
  if (head == "are") {
    if (!match({"there"})) return "";
    const std::string mode = next();
    if (mode == "more" || mode == "fewer") {
      Sel a = read_selector(w, i);
      if (!match({"objects", "than"})) return "";
      Sel b = read_selector(w, i);
      if (!match({"objects"}) || i != w.size()) return "";
      const int ca = count(scene, a), cb = count(scene, b);
      return yes_no(mode == "more" ? ca > cb : ca < cb);
    }
    if (mode == "the") {
      if (!match({"same", "number", "of"})) return "";
      Sel a = read_selector(w, i);
      if (!match({"objects", "as"})) return "";
      Sel b = read_selector(w, i);
      if (!match({"objects"}) || i != w.size()) return "";
      return yes_no(count(scene, a) == count(scene, b));
    }
    return "";
  }
  if (head == "what") {
    const std::string attr = next();
    if (attr != "size" && attr != "color" && attr != "shape") return "";
    if (!match({"is", "the"})) return "";
    Sel s = read_selector(w, i);
    if (!match({"object"}) || i != w.size()) return "";
    const SceneObject* o = unique_match(scene, s);
    return o ? attr_value(*o, attr) : "";
  }
  if (head == "do") {
    if (!match({"the"})) return "";
    Sel a = read_selector(w, i);
    if (!match({"object", "and", "the"})) return "";
    Sel b = read_selector(w, i);
    if (!match({"object", "have", "the", "same"})) return "";
    const std::string attr = next();
    if (attr != "size" && attr != "color" && attr != "shape") return "";
    if (i != w.size()) return "";
    const SceneObject* oa = unique_match(scene, a);
    const SceneObject* ob = unique_match(scene, b);
    if (!oa || !ob) return "";
    return yes_no(attr_value(*oa, attr) == attr_value(*ob, attr));
  }
  return "";
}

}  // namespace audit
}  // namespace

TEST_CASE("dataset: vocabulary and answer list are fixed") {
  Vocab v = minishapes_vocab();
  CHECK(v.size() == 33);
  CHECK(v.id("<pad>") == 0);
  for (const char* word :
       {"how", "many", "are", "there", "is", "a", "what", "do", "the", "and",
        "have", "same", "number", "of", "as", "more", "fewer", "than",
        "objects", "object", "color", "shape", "size", "small", "large", "red",
        "green", "blue", "yellow", "square", "circle", "triangle"})
    CHECK(v.contains(word));

  const auto& answers = minishapes_answers();
  CHECK(answers.size() == 21);
  CHECK(answers[0] == "0");
  CHECK(answers[9] == "9");
  CHECK(answer_id("yes") == 10);
  CHECK(answer_id("no") == 11);
  for (const char* word : {"red", "green", "blue", "yellow", "square",
                           "circle", "triangle", "small", "large"})
    CHECK(answers[static_cast<std::size_t>(answer_id(word))] == word);
  CHECK_THROWS_AS(answer_id("purple"), ConfigError);
  CHECK_THROWS_AS(type_from_name("Bogus"), ConfigError);
}

TEST_CASE("dataset: selectors match by conjunction of attributes") {
  SceneGraph scene = three_object_scene();
  Selector all;
  CHECK(all.empty());
  CHECK(count_matches(scene, all) == 3);

  Selector small;
  small.size = SizeName::Small;
  CHECK(count_matches(scene, small) == 2);

  Selector red_square;
  red_square.color = ColorName::Red;
  red_square.shape = ShapeKind::Square;
  CHECK(count_matches(scene, red_square) == 1);

  Selector absent;
  absent.color = ColorName::Yellow;
  CHECK(count_matches(scene, absent) == 0);

  Selector full;
  full.size = SizeName::Large;
  full.color = ColorName::Red;
  full.shape = ShapeKind::Square;
  CHECK(full.words() == std::vector<std::string>{"large", "red", "square"});
}

TEST_CASE("dataset: scene generation is deterministic and in contract") {
  MiniShapesConfig cfg;
  bool seen[2][4][3] = {};
  for (int i = 0; i < 300; ++i) {
    RngStream rng(5000, "scene-" + std::to_string(i) + "-0");
    SceneGraph s = generate_scene(cfg, i, rng);
    CHECK(s.id == i);
    CHECK(s.grid == 4);
    REQUIRE(s.objects.size() >= 2);
    REQUIRE(s.objects.size() <= 9);
    std::set<std::pair<int, int>> cells;
    for (const auto& o : s.objects) {
      CHECK(o.row >= 0);
      CHECK(o.row < 4);
      CHECK(o.col >= 0);
      CHECK(o.col < 4);
      CHECK(cells.insert({o.row, o.col}).second);
      seen[static_cast<int>(o.size)][static_cast<int>(o.color)]
          [static_cast<int>(o.shape)] = true;
    }
  }
  // Every size-color-shape combination appears across 300 scenes.
  for (int z = 0; z < 2; ++z)
    for (int c = 0; c < 4; ++c)
      for (int h = 0; h < 3; ++h) CHECK(seen[z][c][h]);

  RngStream a(5000, "scene-7-0");
  RngStream b(5000, "scene-7-0");
  CHECK(generate_scene(cfg, 7, a) == generate_scene(cfg, 7, b));
}

TEST_CASE("dataset: rasterizer fills exact cell-centered shapes") {
  SceneGraph scene;
  scene.grid = 4;
  scene.objects = {obj(ShapeKind::Square, ColorName::Red, SizeName::Large, 1, 2),
                   obj(ShapeKind::Square, ColorName::Blue, SizeName::Small, 0, 0),
                   obj(ShapeKind::Circle, ColorName::Green, SizeName::Large, 2, 2),
                   obj(ShapeKind::Triangle, ColorName::Yellow, SizeName::Large, 3, 1)};
  ImageRgb8 img = render_scene_rgb8(scene, 64);
  REQUIRE(img.width == 64);
  REQUIRE(img.height == 64);
  const int cs = 16;

  // A large square covers 0.9 of the 16-pixel cell: pixel centers within
  // +-7.2 of the cell center leave a 14x14 block of exact fill color.
  CHECK(cell_fill_count(img, cs, 1, 2, 220, 60, 50) == 196);
  // A small square covers half the cell: an 8x8 block.
  CHECK(cell_fill_count(img, cs, 0, 0, 55, 110, 220) == 64);
  // Everything in an occupied cell that is not fill is background.
  std::int64_t other = 0;
  for (int y = 16; y < 32; ++y)
    for (int x = 32; x < 48; ++x)
      if (!pixel_is(img, y, x, 220, 60, 50) && !pixel_is(img, y, x, 40, 40, 40))
        ++other;
  CHECK(other == 0);
  // Empty cells are pure background.
  for (int y = 48; y < 64; ++y)
    for (int x = 48; x < 64; ++x) CHECK(pixel_is(img, y, x, 40, 40, 40));

  // The circle's pixel count approximates its area (pi * 7.2^2 ~ 163)
  // and the raster is mirror-symmetric in both axes.
  const std::int64_t circle = cell_fill_count(img, cs, 2, 2, 70, 180, 75);
  CHECK(circle > 140);
  CHECK(circle < 190);
  for (int y = 32; y < 48; ++y) {
    for (int x = 32; x < 48; ++x) {
      const bool fill = pixel_is(img, y, x, 70, 180, 75);
      CHECK(fill == pixel_is(img, y, 32 + 47 - x, 70, 180, 75));
      CHECK(fill == pixel_is(img, 32 + 47 - y, x, 70, 180, 75));
    }
  }

  // The triangle points up: row widths grow monotonically downward and
  // the raster is mirror-symmetric in x only.
  const std::int64_t triangle = cell_fill_count(img, cs, 3, 1, 230, 200, 60);
  CHECK(triangle > 60);
  CHECK(triangle < 150);
  std::vector<int> widths;
  for (int y = 48; y < 64; ++y) {
    int width = 0;
    for (int x = 16; x < 32; ++x) {
      if (pixel_is(img, y, x, 230, 200, 60)) ++width;
      CHECK(pixel_is(img, y, x, 230, 200, 60) ==
            pixel_is(img, y, 16 + 31 - x, 230, 200, 60));
    }
    widths.push_back(width);
  }
  while (!widths.empty() && widths.back() == 0) widths.pop_back();
  REQUIRE(!widths.empty());
  CHECK(widths.back() > 0);
  CHECK(std::is_sorted(widths.begin(), widths.end()));

  // Rendering is deterministic down to the byte.
  CHECK(render_scene_rgb8(scene, 64).pixels == img.pixels);

  // The tensor view is the same image scaled to [0,1], channels first.
  Tensor t = render_scene(scene, 64);
  REQUIRE(t.shape() == Shape{3, 64, 64});
  CHECK(t.at({0, 24, 40}) == 220.0 / 255.0);
  CHECK(t.at({1, 24, 40}) == 60.0 / 255.0);
  CHECK(t.at({2, 24, 40}) == 50.0 / 255.0);
  CHECK(t.at({0, 60, 60}) == 40.0 / 255.0);

  CHECK_THROWS_AS(render_scene_rgb8(scene, 63), ConfigError);
  CHECK_THROWS_AS(render_scene_rgb8(scene, 16), ConfigError);
  SceneGraph bad = scene;
  bad.objects[0].col = 7;
  CHECK_THROWS_AS(render_scene_rgb8(bad, 64), ConfigError);
}

TEST_CASE("dataset: the answer oracle resolves hand-checked questions") {
  SceneGraph scene = three_object_scene();

  CHECK(answer_of(scene, "how many objects are there") == "3");
  CHECK(answer_of(scene, "how many small objects are there") == "2");
  CHECK(answer_of(scene, "how many yellow objects are there") == "0");
  CHECK(answer_of(scene, "is there a red square object") == "yes");
  CHECK(answer_of(scene, "is there a yellow object") == "no");
  CHECK(answer_of(scene, "is there a large red square object") == "yes");
  CHECK(answer_of(scene, "are there more small objects than large objects") ==
        "yes");
  CHECK(answer_of(scene, "are there fewer small objects than large objects") ==
        "no");
  CHECK(answer_of(scene,
                  "are there the same number of red objects as blue objects") ==
        "yes");
  CHECK(answer_of(
            scene,
            "are there the same number of small objects as large objects") ==
        "no");
  CHECK(answer_of(scene, "what color is the square object") == "red");
  CHECK(answer_of(scene, "what shape is the green object") == "triangle");
  CHECK(answer_of(scene, "what size is the blue circle object") == "small");
  CHECK(answer_of(scene,
                  "do the red object and the blue object have the same size") ==
        "no");
  CHECK(
      answer_of(scene,
                "do the blue object and the green object have the same size") ==
      "yes");
  CHECK(answer_of(
            scene,
            "do the square object and the circle object have the same color") ==
        "no");

  // Selector words are accepted in any order.
  CHECK(answer_of(scene, "is there a square red object") == "yes");
}

TEST_CASE("dataset: the answer oracle rejects malformed questions") {
  SceneGraph scene = three_object_scene();

  CHECK_THROWS_AS(answer_oracle(scene, {}), ConfigError);
  CHECK_THROWS_AS(answer_oracle(scene, {0}), ConfigError);
  CHECK_THROWS_AS(answer_oracle(scene, toks("how many objects are")),
                  ConfigError);
  CHECK_THROWS_AS(answer_oracle(scene, toks("how many red red objects are there")),
                  ConfigError);
  CHECK_THROWS_AS(answer_oracle(scene, toks("what is the red object")),
                  ConfigError);
  CHECK_THROWS_AS(answer_oracle(scene, toks("is there a red square")),
                  ConfigError);
  CHECK_THROWS_AS(answer_oracle(scene, toks("objects objects objects")),
                  ConfigError);

  // Attribute queries insist on a unique referent.
  const std::string several =
      config_error_of([&] { answer_of(scene, "what color is the small object"); });
  CHECK(several.find("several") != std::string::npos);
  const std::string none =
      config_error_of([&] { answer_of(scene, "what color is the yellow object"); });
  CHECK(none.find("no object") != std::string::npos);

  // Counts past nine cannot be expressed in the answer list.
  SceneGraph crowded;
  crowded.grid = 4;
  for (int i = 0; i < 10; ++i)
    crowded.objects.push_back(obj(ShapeKind::Square, ColorName::Red,
                                  SizeName::Small, i / 4, i % 4));
  CHECK_THROWS_AS(answer_oracle(crowded, toks("how many objects are there")),
                  ConfigError);
}

TEST_CASE("dataset: split generation hits the configured question mix") {
  MiniShapesConfig cfg;
  const std::int64_t n = 10000;
  DatasetSplit split = build_split(cfg, n, 100, 4242);
  REQUIRE(split.questions.size() == static_cast<std::size_t>(n));
  REQUIRE(split.scenes.size() == 2000);

  std::map<std::string, std::int64_t> by_type;
  for (const auto& q : split.questions) ++by_type[type_name(q.type)];
  auto frac = [&](const char* t) {
    return static_cast<double>(by_type[t]) / static_cast<double>(n);
  };
  CHECK(std::fabs(frac("Count") - 0.25) < 0.02);
  CHECK(std::fabs(frac("Exist") - 0.25) < 0.02);
  CHECK(std::fabs(frac("QueryAttribute") - 0.25) < 0.02);
  CHECK(std::fabs(frac("CompareAttribute") - 0.15) < 0.02);
  CHECK(std::fabs(frac("CompareNumbers") - 0.10) < 0.02);

  // Scene ids count up from the base and every scene carries its full
  // share of questions.
  CHECK(split.scenes.front().id == 100);
  CHECK(split.scenes.back().id == 2099);
  std::map<std::int64_t, int> per_scene;
  for (const auto& q : split.questions) ++per_scene[q.scene_id];
  CHECK(per_scene.size() == split.scenes.size());
  for (const auto& [sid, cnt] : per_scene) {
    CHECK(cnt == cfg.questions_per_scene);
    CHECK(sid >= 100);
    CHECK(sid <= 2099);
  }

  // Each scene draws from its own stream, so a shorter build reproduces
  // a prefix of a longer one, and a different seed diverges.
  DatasetSplit prefix = build_split(cfg, 200, 100, 4242);
  REQUIRE(prefix.scenes.size() == 40);
  CHECK(std::equal(prefix.scenes.begin(), prefix.scenes.end(),
                   split.scenes.begin()));
  CHECK(std::equal(prefix.questions.begin(), prefix.questions.end(),
                   split.questions.begin()));
  DatasetSplit other = build_split(cfg, 200, 100, 4243);
  CHECK(!(other.scenes == prefix.scenes));

  // A question count that is not a multiple of the per-scene share gives
  // the last scene the remainder.
  DatasetSplit ragged = build_split(cfg, 13, 0, 9);
  CHECK(ragged.scenes.size() == 3);
  CHECK(ragged.questions.size() == 13);
  std::int64_t last = ragged.scenes.back().id;
  CHECK(std::count_if(ragged.questions.begin(), ragged.questions.end(),
                      [&](const QAInstance& q) { return q.scene_id == last; }) ==
        3);
}

TEST_CASE("dataset: stored answers survive an independent audit") {
  MiniShapesConfig cfg;
  DatasetSplit split = build_split(cfg, 1000, 0, 777);
  const Vocab vocab = minishapes_vocab();
  const auto& answers = minishapes_answers();

  std::unordered_map<std::int64_t, const SceneGraph*> by_id;
  for (const auto& s : split.scenes) by_id[s.id] = &s;

  std::int64_t checked = 0;
  for (const auto& q : split.questions) {
    REQUIRE(by_id.count(q.scene_id) == 1);
    std::vector<std::string> words;
    words.reserve(q.tokens.size());
    for (std::int64_t id : q.tokens) {
      REQUIRE(id > 0);
      REQUIRE(id < vocab.size());
      words.push_back(vocab.token(id));
    }
    const std::string expected = audit::answer(*by_id[q.scene_id], words);
    REQUIRE(expected != "");
    REQUIRE(expected == answers[static_cast<std::size_t>(q.answer)]);
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("dataset: png files round-trip bitwise") {
  TempDir dir("png");
  SceneGraph scene = three_object_scene();
  ImageRgb8 img = render_scene_rgb8(scene, 64);

  const std::string path = (dir.path / "scene.png").string();
  write_png_rgb8(path, img);
  ImageRgb8 back = read_png_rgb8(path);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.pixels == img.pixels);

  CHECK_THROWS_AS(read_png_rgb8((dir.path / "missing.png").string()),
                  ConfigError);
  const std::string text_path = (dir.path / "not_a_png.png").string();
  std::ofstream(text_path) << "plain text\n";
  CHECK_THROWS_AS(read_png_rgb8(text_path), ConfigError);
  CHECK_THROWS_AS(
      write_png_rgb8((dir.path / "no_such_dir" / "a.png").string(), img),
      ConfigError);
}

TEST_CASE("dataset: directories round-trip through write and read") {
  TempDir dir("roundtrip");
  MiniShapesConfig cfg;
  DatasetSplit split = build_split(cfg, 60, 0, 99);
  write_dataset(split, cfg, dir.str());

  LoadedDataset loaded = read_dataset(dir.str());
  CHECK(loaded.grid == 4);
  CHECK(loaded.resolution == 64);
  CHECK(loaded.scenes == split.scenes);
  CHECK(loaded.questions == split.questions);
  CHECK(loaded.answers == minishapes_answers());
  Vocab expect_vocab = minishapes_vocab();
  REQUIRE(loaded.vocab.size() == expect_vocab.size());
  for (std::int64_t i = 0; i < expect_vocab.size(); ++i)
    CHECK(loaded.vocab.token(i) == expect_vocab.token(i));

  for (const auto& scene : split.scenes) {
    const ImageRgb8& img = loaded.images.at(scene.id);
    CHECK(img.pixels == render_scene_rgb8(scene, cfg.resolution).pixels);
  }

  const std::int64_t sid = split.scenes.front().id;
  CHECK(loaded.scene(sid) == split.scenes.front());
  CHECK_THROWS_AS(loaded.scene(999999), ConfigError);

  Tensor img = loaded.image(sid);
  Tensor direct = render_scene(split.scenes.front(), cfg.resolution);
  REQUIRE(img.shape() == Shape{3, 64, 64});
  auto a = img.data();
  auto b = direct.data();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
  CHECK_THROWS_AS(loaded.image(999999), ConfigError);

  // Loading without images skips the PNGs entirely.
  LoadedDataset light = read_dataset(dir.str(), false);
  CHECK(light.images.empty());
  CHECK(light.questions == split.questions);
  CHECK_THROWS_AS(light.image(sid), ConfigError);

  // The stats file carries counts and majority rates.
  nlohmann::json stats;
  std::ifstream(dir.path / "stats.json") >> stats;
  CHECK(stats.at("questions") == 60);
  CHECK(stats.at("scenes") == 12);
  CHECK(stats.at("grid") == 4);
  CHECK(stats.at("resolution") == 64);
  AnswerStats overall = majority_stats(split.questions);
  CHECK(stats.at("overall").at("questions") == 60);
  CHECK(stats.at("overall").at("majority_answer") == overall.majority_answer);
  CHECK(stats.at("overall").at("majority_rate") == overall.majority_rate);
  CHECK(stats.at("per_type").size() == per_type_stats(split.questions).size());
}

TEST_CASE("dataset: corrupt files report the file and line") {
  MiniShapesConfig cfg;
  DatasetSplit split = build_split(cfg, 5, 0, 3);
  REQUIRE(split.scenes.size() == 1);
  const std::int64_t sid = split.scenes.front().id;

  auto fresh = [&](const TempDir& dir) { write_dataset(split, cfg, dir.str()); };
  auto append = [](const std::filesystem::path& p, const std::string& line) {
    std::ofstream(p, std::ios::app) << line << "\n";
  };

  {
    TempDir dir("bad_json");
    fresh(dir);
    append(dir.path / "questions.jsonl", "{\"answer\": 0, ");
    const std::string msg =
        config_error_of([&] { read_dataset(dir.str(), false); });
    CHECK(msg.find("questions.jsonl:6:") != std::string::npos);
  }
  {
    TempDir dir("bad_scene_ref");
    fresh(dir);
    append(dir.path / "questions.jsonl",
           "{\"answer\":0,\"scene_id\":4242,\"subtype\":\"count\","
           "\"tokens\":[1],\"type\":\"Count\"}");
    const std::string msg =
        config_error_of([&] { read_dataset(dir.str(), false); });
    CHECK(msg.find("questions.jsonl:6:") != std::string::npos);
    CHECK(msg.find("4242") != std::string::npos);
  }
  {
    TempDir dir("bad_token");
    fresh(dir);
    append(dir.path / "questions.jsonl",
           "{\"answer\":0,\"scene_id\":" + std::to_string(sid) +
               ",\"subtype\":\"count\",\"tokens\":[0],\"type\":\"Count\"}");
    const std::string msg =
        config_error_of([&] { read_dataset(dir.str(), false); });
    CHECK(msg.find("token id 0") != std::string::npos);
  }
  {
    TempDir dir("bad_answer");
    fresh(dir);
    append(dir.path / "questions.jsonl",
           "{\"answer\":99,\"scene_id\":" + std::to_string(sid) +
               ",\"subtype\":\"count\",\"tokens\":[1],\"type\":\"Count\"}");
    const std::string msg =
        config_error_of([&] { read_dataset(dir.str(), false); });
    CHECK(msg.find("answer id 99") != std::string::npos);
  }
  {
    TempDir dir("bad_dup_scene");
    fresh(dir);
    std::ifstream in(dir.path / "scenes.jsonl");
    std::string first;
    std::getline(in, first);
    append(dir.path / "scenes.jsonl", first);
    const std::string msg =
        config_error_of([&] { read_dataset(dir.str(), false); });
    CHECK(msg.find("scenes.jsonl:2:") != std::string::npos);
    CHECK(msg.find("duplicate scene id") != std::string::npos);
  }
  {
    TempDir dir("bad_cell");
    fresh(dir);
    append(dir.path / "scenes.jsonl",
           "{\"grid\":4,\"id\":77,\"objects\":[{\"color\":\"red\",\"col\":0,"
           "\"row\":0,\"shape\":\"square\",\"size\":\"small\"},{\"color\":"
           "\"blue\",\"col\":0,\"row\":0,\"shape\":\"circle\",\"size\":"
           "\"large\"}]}");
    const std::string msg =
        config_error_of([&] { read_dataset(dir.str(), false); });
    CHECK(msg.find("share a grid cell") != std::string::npos);
  }
  {
    TempDir dir("bad_missing");
    fresh(dir);
    std::filesystem::remove(dir.path / "questions.jsonl");
    const std::string msg =
        config_error_of([&] { read_dataset(dir.str(), false); });
    CHECK(msg.find("cannot open") != std::string::npos);
    CHECK(msg.find("questions.jsonl") != std::string::npos);
  }
  {
    TempDir dir("bad_answers");
    fresh(dir);
    append(dir.path / "answers.txt", "yes");
    const std::string msg =
        config_error_of([&] { read_dataset(dir.str(), false); });
    CHECK(msg.find("answers.txt:22:") != std::string::npos);
    CHECK(msg.find("duplicate answer") != std::string::npos);
  }
}

TEST_CASE("dataset: configuration contract violations are rejected") {
  MiniShapesConfig ok;
  ok.validate();

  MiniShapesConfig bad = ok;
  bad.grid = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ok;
  bad.resolution = 62;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ok;
  bad.resolution = 24;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ok;
  bad.questions_per_scene = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ok;
  bad.train_questions = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ok;
  bad.p_count = 0.5;  // mix no longer sums to one
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ok;
  bad.p_exist = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("dataset: an empty split round-trips") {
  TempDir dir("empty");
  MiniShapesConfig cfg;
  write_dataset(DatasetSplit{}, cfg, dir.str());
  LoadedDataset loaded = read_dataset(dir.str());
  CHECK(loaded.scenes.empty());
  CHECK(loaded.questions.empty());
  CHECK(loaded.images.empty());
  CHECK(loaded.vocab.size() == 33);
  CHECK(loaded.answers.size() == 21);

  AnswerStats st = majority_stats(loaded.questions);
  CHECK(st.questions == 0);
  CHECK(st.majority_rate == 0.0);
  CHECK(per_type_stats(loaded.questions).empty());
}

TEST_CASE("dataset: majority statistics pick the most common answer") {
  auto q = [](const char* answer, QuestionType t) {
    QAInstance i;
    i.answer = answer_id(answer);
    i.type = t;
    return i;
  };
  std::vector<QAInstance> qs = {
      q("yes", QuestionType::Exist), q("yes", QuestionType::Exist),
      q("no", QuestionType::Exist), q("2", QuestionType::Count)};

  AnswerStats st = majority_stats(qs);
  CHECK(st.questions == 4);
  CHECK(st.majority_answer == "yes");
  CHECK(st.majority_rate == 0.5);

  auto per = per_type_stats(qs);
  REQUIRE(per.size() == 2);
  CHECK(per.at("Exist").questions == 3);
  CHECK(per.at("Exist").majority_answer == "yes");
  CHECK(per.at("Exist").majority_rate == 2.0 / 3.0);
  CHECK(per.at("Count").questions == 1);
  CHECK(per.at("Count").majority_answer == "2");
  CHECK(per.at("Count").majority_rate == 1.0);

  // Ties resolve to the lowest answer id, keeping reruns stable.
  std::vector<QAInstance> tie = {q("no", QuestionType::Exist),
                                 q("yes", QuestionType::Exist)};
  CHECK(majority_stats(tie).majority_answer == "yes");
}

TEST_CASE("dataset: separate splits use disjoint scenes") {
  MiniShapesConfig cfg;
  DatasetSplit train = build_split(cfg, 50, 0, 1);
  DatasetSplit val = build_split(
      cfg, 25, train.scenes.back().id + 1, 2);

  std::set<std::int64_t> train_ids, val_ids;
  for (const auto& s : train.scenes) train_ids.insert(s.id);
  for (const auto& s : val.scenes) val_ids.insert(s.id);
  for (std::int64_t id : val_ids) CHECK(train_ids.count(id) == 0);
  for (const auto& q : train.questions) CHECK(train_ids.count(q.scene_id) == 1);
  for (const auto& q : val.questions) CHECK(val_ids.count(q.scene_id) == 1);
}
