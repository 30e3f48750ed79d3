// SPDX-License-Identifier: Apache-2.0
#include "qroute/config.hpp"

#include <fstream>
#include <sstream>
#include <utility>

#include "qroute/errors.hpp"

namespace qroute {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void value_error(const std::string& key, const std::string& value,
                              const std::string& wanted) {
  throw ConfigError("key '" + key + "': '" + value + "' is not " + wanted);
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const std::int64_t v = std::stoll(value, &used);
    if (used != value.size()) value_error(key, value, "an integer");
    return v;
  } catch (const std::logic_error&) {
    value_error(key, value, "an integer");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) value_error(key, value, "a number");
    return v;
  } catch (const std::logic_error&) {
    value_error(key, value, "a number");
  }
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text,
                                     const std::string& source) {
  KeyValueConfig kv;
  kv.source_ = source;
  kv.text_ = text;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty())
      throw ConfigError(source + ":" + std::to_string(line_no) +
                        ": empty key");
    if (!kv.values_.emplace(key, value).second)
      throw ConfigError(source + ":" + std::to_string(line_no) +
                        ": duplicate key '" + key + "'");
  }
  return kv;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse(buf.str(), path);
}

bool KeyValueConfig::has(const std::string& key) const {
  return values_.count(key) != 0;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  read_.insert(key);
  return it->second;
}

std::int64_t KeyValueConfig::get_int(const std::string& key,
                                     std::int64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  read_.insert(key);
  return parse_int(key, it->second);
}

double KeyValueConfig::get_double(const std::string& key,
                                  double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  read_.insert(key);
  return parse_double(key, it->second);
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  read_.insert(key);
  const std::string& v = it->second;
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  value_error(key, v, "a boolean (true/false/1/0)");
}

std::vector<std::int64_t> KeyValueConfig::get_int_list(
    const std::string& key, std::vector<std::int64_t> fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  read_.insert(key);
  std::vector<std::int64_t> out;
  std::string item;
  std::istringstream in(it->second);
  while (std::getline(in, item, ',')) out.push_back(parse_int(key, trim(item)));
  if (out.empty()) value_error(key, it->second, "a comma-separated list");
  return out;
}

std::vector<std::string> KeyValueConfig::unread_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, value] : values_)
    if (!read_.count(key)) out.push_back(key);
  return out;
}

void ExperimentConfig::validate() const {
  backbone.validate();
  fusion.validate();
  if (embed_dim <= 0 || text_hidden <= 0)
    throw ConfigError("text encoder dimensions must be positive");
  if (tau <= 0.0) throw ConfigError("tau must be positive");
  if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (lr <= 0.0 || warmup_start_lr <= 0.0)
    throw ConfigError("learning rates must be positive");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be non-negative");
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 ||
      adam_beta2 >= 1.0)
    throw ConfigError("adam betas must lie in [0, 1)");
  if (adam_eps <= 0.0) throw ConfigError("adam_eps must be positive");
  if (log_every <= 0) throw ConfigError("log_every must be positive");
  if (early_stop_acc < 0.0 || early_stop_acc > 1.0)
    throw ConfigError("early_stop_acc must lie in [0, 1]");
}

ExperimentConfig ExperimentConfig::from_kv(const KeyValueConfig& kv) {
  ExperimentConfig c;
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 1));
  c.embed_dim = kv.get_int("embed_dim", c.embed_dim);
  c.text_hidden = kv.get_int("text_hidden", c.text_hidden);

  const std::string gran = kv.get_string("granularity", "branch");
  if (gran == "branch") {
    c.backbone.granularity = Granularity::Branch;
  } else if (gran == "filter") {
    c.backbone.granularity = Granularity::Filter;
  } else {
    throw ConfigError("key 'granularity': '" + gran +
                      "' is not 'branch' or 'filter'");
  }
  c.backbone.stem_channels = kv.get_int("stem_channels", c.backbone.stem_channels);
  c.backbone.depths = kv.get_int_list("depths", c.backbone.depths);
  c.backbone.widths = kv.get_int_list("widths", c.backbone.widths);
  std::vector<std::int64_t> strides{c.backbone.stage_strides.begin(),
                                    c.backbone.stage_strides.end()};
  strides = kv.get_int_list("strides", strides);
  c.backbone.stage_strides.assign(strides.begin(), strides.end());
  c.backbone.cardinality = kv.get_int("cardinality", c.backbone.cardinality);
  c.backbone.branch_width = kv.get_int("branch_width", c.backbone.branch_width);
  c.backbone.group_norm_branch_output = kv.get_bool(
      "group_norm_branches", c.backbone.group_norm_branch_output);
  c.backbone.coord_maps = kv.get_bool("coord_maps", c.backbone.coord_maps);

  c.fusion.attention = kv.get_bool("attention", c.fusion.attention);
  c.fusion.with_q = kv.get_bool("with_q", c.fusion.with_q);
  c.fusion.d_t = kv.get_int("d_t", c.fusion.d_t);
  c.fusion.heads = kv.get_int("heads", c.fusion.heads);
  c.fusion.classifier_hidden =
      kv.get_int("classifier_hidden", c.fusion.classifier_hidden);

  c.tau = kv.get_double("tau", c.tau);
  c.lambda = kv.get_double("lambda", c.lambda);
  c.batch_size = kv.get_int("batch_size", c.batch_size);
  c.epochs = kv.get_int("epochs", c.epochs);
  c.lr = kv.get_double("lr", c.lr);
  c.warmup_start_lr = kv.get_double("warmup_start_lr", c.warmup_start_lr);
  c.warmup_steps = kv.get_int("warmup_steps", c.warmup_steps);
  c.adam_beta1 = kv.get_double("adam_beta1", c.adam_beta1);
  c.adam_beta2 = kv.get_double("adam_beta2", c.adam_beta2);
  c.adam_eps = kv.get_double("adam_eps", c.adam_eps);
  c.log_every = kv.get_int("log_every", c.log_every);
  c.early_stop_acc = kv.get_double("early_stop_acc", c.early_stop_acc);

  const std::vector<std::string> unknown = kv.unread_keys();
  if (!unknown.empty()) {
    std::string joined;
    for (const auto& k : unknown) {
      if (!joined.empty()) joined += ", ";
      joined += k;
    }
    throw ConfigError("unknown configuration keys: " + joined);
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text,
                                             const std::string& source) {
  return from_kv(KeyValueConfig::parse(text, source));
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return from_kv(KeyValueConfig::load(path));
}

}  // namespace qroute
