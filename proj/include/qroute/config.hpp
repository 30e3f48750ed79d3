// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "qroute/fusion.hpp"
#include "qroute/modular_net.hpp"

namespace qroute {

/// Flat key=value configuration text: one `key = value` pair per line,
/// `#` starts a comment, blank lines are skipped, and whitespace around
/// keys and values is trimmed. Duplicate keys are rejected, and every
/// parse error names the source and line.
class KeyValueConfig {
public:
  static KeyValueConfig parse(const std::string& text,
                              const std::string& source = "<config>");
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const;

  // Typed accessors return the fallback when the key is absent and
  // throw ConfigError when the stored value does not parse. Reading a
  // key marks it as consumed (see unread_keys).
  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated integers, e.g. "1,2,2,2".
  std::vector<std::int64_t> get_int_list(
      const std::string& key, std::vector<std::int64_t> fallback) const;

  /// Keys present in the text that no accessor has read; a non-empty
  /// result after typed extraction means a misspelled or unknown key.
  std::vector<std::string> unread_keys() const;

  /// The original text, verbatim (checkpoints embed it).
  const std::string& text() const { return text_; }

private:
  std::string source_;
  std::string text_;
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> read_;
};

/// Everything one training run needs. Defaults describe the toy
/// branch-granularity experiment; any subset can be overridden from a
/// key=value file.
struct ExperimentConfig {
  std::uint64_t seed = 1;

  // Question encoder.
  std::int64_t embed_dim = 48;
  std::int64_t text_hidden = 96;

  // Visual backbone and fusion head.
  BackboneConfig backbone;
  FusionConfig fusion;

  // Routing temperature and load-balance weight.
  double tau = 1.0;
  double lambda = 0.01;

  // Optimization.
  std::int64_t batch_size = 64;
  std::int64_t epochs = 20;
  double lr = 3e-4;
  double warmup_start_lr = 3e-6;
  std::int64_t warmup_steps = 500;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // Bookkeeping.
  std::int64_t log_every = 50;
  /// Stop once validation accuracy reaches this value; 0 disables.
  double early_stop_acc = 0.0;

  void validate() const;

  /// Reads every recognized key and rejects the rest.
  static ExperimentConfig from_kv(const KeyValueConfig& kv);
  static ExperimentConfig from_text(const std::string& text,
                                    const std::string& source = "<config>");
  static ExperimentConfig load(const std::string& path);
};

}  // namespace qroute
