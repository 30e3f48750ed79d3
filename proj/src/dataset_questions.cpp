// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "qroute/dataset.hpp"
#include "qroute/errors.hpp"

namespace qroute {
namespace {

constexpr int kTemplateTries = 20;

enum class Attr { Size, Color, Shape };

const std::string& attr_word(Attr a) {
  static const std::vector<std::string> names = {"size", "color", "shape"};
  return names[static_cast<std::size_t>(a)];
}

std::vector<Attr> attrs_except(std::optional<Attr> excluded) {
  std::vector<Attr> out;
  for (Attr a : {Attr::Size, Attr::Color, Attr::Shape})
    if (!excluded || a != *excluded) out.push_back(a);
  return out;
}

void set_from_object(Selector& sel, Attr a, const SceneObject& o) {
  switch (a) {
    case Attr::Size: sel.size = o.size; break;
    case Attr::Color: sel.color = o.color; break;
    case Attr::Shape: sel.shape = o.shape; break;
  }
}

void set_random(Selector& sel, Attr a, RngStream& rng) {
  switch (a) {
    case Attr::Size:
      sel.size = static_cast<SizeName>(rng.uniform_int(2));
      break;
    case Attr::Color:
      sel.color = static_cast<ColorName>(rng.uniform_int(4));
      break;
    case Attr::Shape:
      sel.shape = static_cast<ShapeKind>(rng.uniform_int(3));
      break;
  }
}

/// Non-empty selector whose constraints are copied from `o` (so `o`
/// matches it by construction), over a random subset of `allowed`.
Selector selector_from_object(const SceneObject& o,
                              const std::vector<Attr>& allowed,
                              RngStream& rng) {
  for (int t = 0; t < 10; ++t) {
    Selector sel;
    for (Attr a : allowed)
      if (rng.uniform_open01() < 0.5) set_from_object(sel, a, o);
    if (!sel.empty()) return sel;
  }
  Selector sel;
  set_from_object(sel, allowed[rng.uniform_int(allowed.size())], o);
  return sel;
}

/// Non-empty selector with uniformly random constraint values.
Selector random_selector(const std::vector<Attr>& allowed, RngStream& rng) {
  for (int t = 0; t < 10; ++t) {
    Selector sel;
    for (Attr a : allowed)
      if (rng.uniform_open01() < 0.5) set_random(sel, a, rng);
    if (!sel.empty()) return sel;
  }
  Selector sel;
  set_random(sel, allowed[rng.uniform_int(allowed.size())], rng);
  return sel;
}

/// Half object-derived (counts at least 1), half fully random: keeps
/// comparison and counting questions off the all-zeros regime without
/// making them trivial.
Selector mixed_selector(const SceneGraph& scene, RngStream& rng) {
  const std::vector<Attr> all = attrs_except(std::nullopt);
  if (!scene.objects.empty() && rng.uniform_open01() < 0.5) {
    const auto& o = scene.objects[rng.uniform_int(scene.objects.size())];
    return selector_from_object(o, all, rng);
  }
  return random_selector(all, rng);
}

const SceneObject& random_object(const SceneGraph& scene, RngStream& rng) {
  return scene.objects[rng.uniform_int(scene.objects.size())];
}

void append(std::vector<std::string>& words, const std::vector<std::string>& w) {
  words.insert(words.end(), w.begin(), w.end());
}

std::vector<std::int64_t> encode_words(const std::vector<std::string>& words) {
  static const Vocab vocab = minishapes_vocab();
  std::vector<std::int64_t> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(vocab.id(w));
  return ids;
}

// ---- the token-level question parser the oracle evaluates ----

struct Cursor {
  std::vector<std::string> words;
  std::size_t i = 0;

  bool done() const { return i >= words.size(); }
  const std::string& peek() const {
    if (done()) throw ConfigError("malformed question: ends unexpectedly");
    return words[i];
  }
  std::string next() {
    std::string w = peek();
    ++i;
    return w;
  }
  void expect(const std::string& want) {
    if (done() || words[i] != want)
      throw ConfigError("malformed question: expected '" + want + "'");
    ++i;
  }
  void expect_end() const {
    if (!done())
      throw ConfigError("malformed question: trailing token '" + words[i] + "'");
  }
};

Selector parse_selector(Cursor& c) {
  Selector sel;
  while (!c.done()) {
    const std::string& w = c.peek();
    if (auto z = size_from_word(w)) {
      if (sel.size)
        throw ConfigError("malformed question: duplicate size constraint");
      sel.size = *z;
    } else if (auto col = color_from_word(w)) {
      if (sel.color)
        throw ConfigError("malformed question: duplicate color constraint");
      sel.color = *col;
    } else if (auto sh = shape_from_word(w)) {
      if (sel.shape)
        throw ConfigError("malformed question: duplicate shape constraint");
      sel.shape = *sh;
    } else {
      break;
    }
    c.next();
  }
  return sel;
}

std::optional<Attr> attr_of_word(const std::string& w) {
  for (Attr a : {Attr::Size, Attr::Color, Attr::Shape})
    if (attr_word(a) == w) return a;
  return std::nullopt;
}

const std::string& attr_value_word(const SceneObject& o, Attr a) {
  switch (a) {
    case Attr::Size: return word_of(o.size);
    case Attr::Color: return word_of(o.color);
    default: return word_of(o.shape);
  }
}

std::int64_t yes_no(bool yes) { return answer_id(yes ? "yes" : "no"); }

std::int64_t digit_answer(std::int64_t n) {
  if (n < 0 || n > 9)
    throw ConfigError("count " + std::to_string(n) +
                      " exceeds the digit answers");
  return answer_id(std::to_string(n));
}

/// The selector of a query must pick out exactly one object.
const SceneObject& unique_match(const SceneGraph& scene, const Selector& sel) {
  const SceneObject* found = nullptr;
  for (const auto& o : scene.objects) {
    if (!sel.matches(o)) continue;
    if (found)
      throw ConfigError("malformed question: selector matches several objects");
    found = &o;
  }
  if (!found)
    throw ConfigError("malformed question: selector matches no object");
  return *found;
}

}  // namespace

std::int64_t answer_oracle(const SceneGraph& scene,
                           const std::vector<std::int64_t>& tokens) {
  static const Vocab vocab = minishapes_vocab();
  Cursor c;
  c.words.reserve(tokens.size());
  for (std::int64_t id : tokens) {
    if (id == 0)
      throw ConfigError("malformed question: contains the padding token");
    c.words.push_back(vocab.token(id));
  }

  const std::string head = c.next();
  if (head == "how") {
    c.expect("many");
    Selector sel = parse_selector(c);
    c.expect("objects");
    c.expect("are");
    c.expect("there");
    c.expect_end();
    return digit_answer(count_matches(scene, sel));
  }
  if (head == "is") {
    c.expect("there");
    c.expect("a");
    Selector sel = parse_selector(c);
    c.expect("object");
    c.expect_end();
    return yes_no(count_matches(scene, sel) > 0);
  }
  if (head == "are") {
    c.expect("there");
    const std::string mode = c.next();
    if (mode == "more" || mode == "fewer") {
      Selector a = parse_selector(c);
      c.expect("objects");
      c.expect("than");
      Selector b = parse_selector(c);
      c.expect("objects");
      c.expect_end();
      const std::int64_t ca = count_matches(scene, a);
      const std::int64_t cb = count_matches(scene, b);
      return yes_no(mode == "more" ? ca > cb : ca < cb);
    }
    if (mode == "the") {
      c.expect("same");
      c.expect("number");
      c.expect("of");
      Selector a = parse_selector(c);
      c.expect("objects");
      c.expect("as");
      Selector b = parse_selector(c);
      c.expect("objects");
      c.expect_end();
      return yes_no(count_matches(scene, a) == count_matches(scene, b));
    }
    throw ConfigError("malformed question: expected a comparison after 'are there'");
  }
  if (head == "what") {
    const auto attr = attr_of_word(c.next());
    if (!attr)
      throw ConfigError("malformed question: expected an attribute after 'what'");
    c.expect("is");
    c.expect("the");
    Selector sel = parse_selector(c);
    c.expect("object");
    c.expect_end();
    return answer_id(attr_value_word(unique_match(scene, sel), *attr));
  }
  if (head == "do") {
    c.expect("the");
    Selector a = parse_selector(c);
    c.expect("object");
    c.expect("and");
    c.expect("the");
    Selector b = parse_selector(c);
    c.expect("object");
    c.expect("have");
    c.expect("the");
    c.expect("same");
    const auto attr = attr_of_word(c.next());
    if (!attr)
      throw ConfigError("malformed question: expected an attribute after 'same'");
    c.expect_end();
    const SceneObject& oa = unique_match(scene, a);
    const SceneObject& ob = unique_match(scene, b);
    return yes_no(attr_value_word(oa, *attr) == attr_value_word(ob, *attr));
  }
  throw ConfigError("malformed question: unrecognized opening '" + head + "'");
}

std::optional<QAInstance> generate_question(const SceneGraph& scene,
                                            QuestionType type,
                                            RngStream& rng) {
  if (scene.objects.empty()) return std::nullopt;

  QAInstance inst;
  inst.scene_id = scene.id;
  inst.type = type;
  std::vector<std::string> words;

  switch (type) {
    case QuestionType::Count: {
      Selector sel;
      const double u = rng.uniform_open01();
      if (u < 0.15) {
        // empty selector: "how many objects are there"
      } else if (u < 0.65) {
        sel = selector_from_object(random_object(scene, rng),
                                   attrs_except(std::nullopt), rng);
      } else {
        sel = random_selector(attrs_except(std::nullopt), rng);
      }
      words = {"how", "many"};
      append(words, sel.words());
      append(words, {"objects", "are", "there"});
      inst.subtype = "count";
      break;
    }
    case QuestionType::Exist: {
      Selector sel;
      bool have = false;
      if (rng.uniform_open01() >= 0.5) {
        // Aim for a "no": look for a combination absent from the scene.
        for (int t = 0; t < kTemplateTries && !have; ++t) {
          Selector s = random_selector(attrs_except(std::nullopt), rng);
          if (count_matches(scene, s) == 0) {
            sel = s;
            have = true;
          }
        }
      }
      if (!have) {
        sel = selector_from_object(random_object(scene, rng),
                                   attrs_except(std::nullopt), rng);
      }
      words = {"is", "there", "a"};
      append(words, sel.words());
      words.push_back("object");
      inst.subtype = "exist";
      break;
    }
    case QuestionType::CompareNumbers: {
      const std::uint64_t sub = rng.uniform_int(3);
      Selector a = mixed_selector(scene, rng);
      Selector b;
      bool distinct = false;
      for (int t = 0; t < kTemplateTries && !distinct; ++t) {
        b = mixed_selector(scene, rng);
        distinct = !(b == a);
      }
      if (!distinct) return std::nullopt;
      if (sub == 2) {
        words = {"are", "there", "the", "same", "number", "of"};
        append(words, a.words());
        append(words, {"objects", "as"});
        append(words, b.words());
        words.push_back("objects");
        inst.subtype = "equal_number";
      } else {
        words = {"are", "there", sub == 0 ? "more" : "fewer"};
        append(words, a.words());
        append(words, {"objects", "than"});
        append(words, b.words());
        words.push_back("objects");
        inst.subtype = (sub == 0) ? "greater_than" : "less_than";
      }
      break;
    }
    case QuestionType::QueryAttribute: {
      const Attr attr = static_cast<Attr>(rng.uniform_int(3));
      Selector sel;
      bool unique = false;
      for (int t = 0; t < kTemplateTries && !unique; ++t) {
        const SceneObject& o = random_object(scene, rng);
        Selector s = selector_from_object(o, attrs_except(attr), rng);
        if (count_matches(scene, s) == 1) {
          sel = s;
          unique = true;
        }
      }
      if (!unique) return std::nullopt;
      words = {"what", attr_word(attr), "is", "the"};
      append(words, sel.words());
      words.push_back("object");
      inst.subtype = "query_" + attr_word(attr);
      break;
    }
    case QuestionType::CompareAttribute: {
      if (scene.objects.size() < 2) return std::nullopt;
      const Attr attr = static_cast<Attr>(rng.uniform_int(3));
      Selector a, b;
      bool found = false;
      for (int t = 0; t < kTemplateTries && !found; ++t) {
        const std::size_t n = scene.objects.size();
        const std::size_t i = rng.uniform_int(n);
        std::size_t j = rng.uniform_int(n - 1);
        if (j >= i) ++j;
        Selector sa =
            selector_from_object(scene.objects[i], attrs_except(attr), rng);
        Selector sb =
            selector_from_object(scene.objects[j], attrs_except(attr), rng);
        // Both selectors matching exactly one object each forces the
        // matches onto the two distinct source objects.
        if (count_matches(scene, sa) == 1 && count_matches(scene, sb) == 1) {
          a = sa;
          b = sb;
          found = true;
        }
      }
      if (!found) return std::nullopt;
      words = {"do", "the"};
      append(words, a.words());
      append(words, {"object", "and", "the"});
      append(words, b.words());
      append(words, {"object", "have", "the", "same", attr_word(attr)});
      inst.subtype = "equal_" + attr_word(attr);
      break;
    }
  }

  inst.tokens = encode_words(words);
  inst.answer = answer_oracle(scene, inst.tokens);
  return inst;
}

namespace {

QuestionType sample_type(const MiniShapesConfig& cfg, RngStream& rng) {
  const double u = rng.uniform_open01();
  double acc = cfg.p_count;
  if (u < acc) return QuestionType::Count;
  acc += cfg.p_exist;
  if (u < acc) return QuestionType::Exist;
  acc += cfg.p_query;
  if (u < acc) return QuestionType::QueryAttribute;
  acc += cfg.p_compare_attr;
  if (u < acc) return QuestionType::CompareAttribute;
  return QuestionType::CompareNumbers;
}

}  // namespace

DatasetSplit build_split(const MiniShapesConfig& cfg,
                         std::int64_t question_count,
                         std::int64_t first_scene_id, std::uint64_t seed) {
  cfg.validate();
  DatasetSplit out;
  std::int64_t remaining = question_count;
  std::int64_t sid = first_scene_id;
  while (remaining > 0) {
    const std::int64_t want =
        std::min<std::int64_t>(cfg.questions_per_scene, remaining);
    // The question types for this scene are drawn once, up front;
    // scenes are then resampled until every drawn template can be
    // satisfied. Re-drawing the types per attempt would bias the mix
    // away from types whose templates fail on more scenes.
    RngStream type_rng(seed, "types-" + std::to_string(sid));
    std::vector<QuestionType> types;
    types.reserve(static_cast<std::size_t>(want));
    for (std::int64_t k = 0; k < want; ++k)
      types.push_back(sample_type(cfg, type_rng));
    bool accepted = false;
    for (int attempt = 0; attempt < 100 && !accepted; ++attempt) {
      RngStream rng(seed, "scene-" + std::to_string(sid) + "-" +
                              std::to_string(attempt));
      SceneGraph scene = generate_scene(cfg, sid, rng);
      std::vector<QAInstance> qs;
      bool ok = true;
      for (QuestionType type : types) {
        auto inst = generate_question(scene, type, rng);
        if (!inst) {
          ok = false;
          break;
        }
        qs.push_back(std::move(*inst));
      }
      if (!ok) continue;
      out.scenes.push_back(std::move(scene));
      for (auto& q : qs) out.questions.push_back(std::move(q));
      accepted = true;
    }
    if (!accepted) {
      throw ConfigError(
          "could not satisfy the question templates after 100 scene attempts");
    }
    remaining -= want;
    ++sid;
  }
  return out;
}

}  // namespace qroute
