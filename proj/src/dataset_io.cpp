// SPDX-License-Identifier: Apache-2.0
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "qroute/dataset.hpp"
#include "qroute/errors.hpp"

namespace qroute {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string image_name(std::int64_t scene_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06lld.png",
                static_cast<long long>(scene_id));
  return buf;
}

std::ofstream open_for_write(const fs::path& path) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  return f;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

[[noreturn]] void line_error(const fs::path& path, std::size_t line_no,
                             const std::string& what) {
  throw ConfigError(path.string() + ":" + std::to_string(line_no + 1) + ": " +
                    what);
}

json scene_to_json(const SceneGraph& scene) {
  json objects = json::array();
  for (const auto& o : scene.objects) {
    objects.push_back({{"shape", word_of(o.shape)},
                       {"color", word_of(o.color)},
                       {"size", word_of(o.size)},
                       {"row", o.row},
                       {"col", o.col}});
  }
  return {{"id", scene.id}, {"grid", scene.grid}, {"objects", objects}};
}

SceneGraph scene_from_json(const json& j) {
  SceneGraph scene;
  scene.id = j.at("id").get<std::int64_t>();
  scene.grid = j.at("grid").get<int>();
  if (scene.grid < 2) throw ConfigError("grid must be at least 2");
  std::set<std::pair<int, int>> used;
  for (const auto& jo : j.at("objects")) {
    SceneObject o;
    const std::string shape = jo.at("shape").get<std::string>();
    const std::string color = jo.at("color").get<std::string>();
    const std::string size = jo.at("size").get<std::string>();
    auto sh = shape_from_word(shape);
    auto co = color_from_word(color);
    auto sz = size_from_word(size);
    if (!sh) throw ConfigError("unknown shape '" + shape + "'");
    if (!co) throw ConfigError("unknown color '" + color + "'");
    if (!sz) throw ConfigError("unknown size '" + size + "'");
    o.shape = *sh;
    o.color = *co;
    o.size = *sz;
    o.row = jo.at("row").get<int>();
    o.col = jo.at("col").get<int>();
    if (o.row < 0 || o.row >= scene.grid || o.col < 0 || o.col >= scene.grid)
      throw ConfigError("object lies outside the grid");
    if (!used.insert({o.row, o.col}).second)
      throw ConfigError("two objects share a grid cell");
    scene.objects.push_back(o);
  }
  return scene;
}

json question_to_json(const QAInstance& q) {
  return {{"scene_id", q.scene_id},
          {"tokens", q.tokens},
          {"type", type_name(q.type)},
          {"subtype", q.subtype},
          {"answer", q.answer}};
}

json stats_to_json(const AnswerStats& s) {
  return {{"questions", s.questions},
          {"majority_answer", s.majority_answer},
          {"majority_rate", s.majority_rate}};
}

}  // namespace

void write_dataset(const DatasetSplit& split, const MiniShapesConfig& cfg,
                   const std::string& dir) {
  cfg.validate();
  const fs::path root(dir);
  fs::create_directories(root / "images");

  for (const auto& scene : split.scenes) {
    write_png_rgb8((root / "images" / image_name(scene.id)).string(),
                   render_scene_rgb8(scene, cfg.resolution));
  }

  {
    std::ofstream f = open_for_write(root / "scenes.jsonl");
    for (const auto& scene : split.scenes)
      f << scene_to_json(scene).dump() << "\n";
  }
  {
    std::ofstream f = open_for_write(root / "questions.jsonl");
    for (const auto& q : split.questions)
      f << question_to_json(q).dump() << "\n";
  }
  minishapes_vocab().save((root / "vocab.txt").string());
  {
    std::ofstream f = open_for_write(root / "answers.txt");
    for (const auto& a : minishapes_answers()) f << a << "\n";
  }
  {
    json per_type = json::object();
    for (const auto& [name, stats] : per_type_stats(split.questions))
      per_type[name] = stats_to_json(stats);
    json stats = {{"grid", cfg.grid},
                  {"resolution", cfg.resolution},
                  {"scenes", split.scenes.size()},
                  {"questions", split.questions.size()},
                  {"overall", stats_to_json(majority_stats(split.questions))},
                  {"per_type", per_type}};
    std::ofstream f = open_for_write(root / "stats.json");
    f << stats.dump(2) << "\n";
  }
}

const SceneGraph& LoadedDataset::scene(std::int64_t id) const {
  auto it = scene_index.find(id);
  if (it == scene_index.end())
    throw ConfigError("unknown scene id " + std::to_string(id));
  return scenes[it->second];
}

Tensor LoadedDataset::image(std::int64_t scene_id) const {
  auto it = images.find(scene_id);
  if (it == images.end())
    throw ConfigError("no image loaded for scene " + std::to_string(scene_id));
  return image_to_tensor(it->second);
}

LoadedDataset read_dataset(const std::string& dir, bool load_images) {
  const fs::path root(dir);
  LoadedDataset ds;
  ds.vocab = Vocab::load((root / "vocab.txt").string());

  {
    const fs::path path = root / "answers.txt";
    std::size_t line_no = 0;
    std::set<std::string> seen;
    for (const auto& line : read_lines(path)) {
      if (line.empty()) line_error(path, line_no, "empty answer");
      if (!seen.insert(line).second)
        line_error(path, line_no, "duplicate answer '" + line + "'");
      ds.answers.push_back(line);
      ++line_no;
    }
  }

  {
    const fs::path path = root / "scenes.jsonl";
    std::size_t line_no = 0;
    for (const auto& line : read_lines(path)) {
      try {
        SceneGraph scene = scene_from_json(json::parse(line));
        if (!ds.scene_index.emplace(scene.id, ds.scenes.size()).second)
          throw ConfigError("duplicate scene id " + std::to_string(scene.id));
        if (!ds.scenes.empty() && ds.scenes.front().grid != scene.grid)
          throw ConfigError("scenes disagree on the grid size");
        ds.scenes.push_back(std::move(scene));
      } catch (const json::exception& e) {
        line_error(path, line_no, e.what());
      } catch (const ConfigError& e) {
        line_error(path, line_no, e.what());
      }
      ++line_no;
    }
    if (!ds.scenes.empty()) ds.grid = ds.scenes.front().grid;
  }

  {
    const fs::path path = root / "questions.jsonl";
    std::size_t line_no = 0;
    for (const auto& line : read_lines(path)) {
      try {
        const json j = json::parse(line);
        QAInstance q;
        q.scene_id = j.at("scene_id").get<std::int64_t>();
        if (!ds.scene_index.count(q.scene_id))
          throw ConfigError("unknown scene id " + std::to_string(q.scene_id));
        q.tokens = j.at("tokens").get<std::vector<std::int64_t>>();
        for (std::int64_t t : q.tokens) {
          if (t <= 0 || t >= ds.vocab.size())
            throw ConfigError("token id " + std::to_string(t) +
                              " outside the vocabulary");
        }
        q.type = type_from_name(j.at("type").get<std::string>());
        q.subtype = j.at("subtype").get<std::string>();
        q.answer = j.at("answer").get<std::int64_t>();
        if (q.answer < 0 ||
            q.answer >= static_cast<std::int64_t>(ds.answers.size()))
          throw ConfigError("answer id " + std::to_string(q.answer) +
                            " outside the answer vocabulary");
        ds.questions.push_back(std::move(q));
      } catch (const json::exception& e) {
        line_error(path, line_no, e.what());
      } catch (const ConfigError& e) {
        line_error(path, line_no, e.what());
      }
      ++line_no;
    }
  }

  if (load_images) {
    for (const auto& scene : ds.scenes) {
      const fs::path path = root / "images" / image_name(scene.id);
      ImageRgb8 img = read_png_rgb8(path.string());
      if (img.width != img.height)
        throw ConfigError(path.string() + ": image is not square");
      if (ds.resolution == 0) {
        ds.resolution = static_cast<int>(img.width);
      } else if (ds.resolution != img.width) {
        throw ConfigError(path.string() + ": image size differs from the rest");
      }
      ds.images.emplace(scene.id, std::move(img));
    }
  }
  return ds;
}

}  // namespace qroute
