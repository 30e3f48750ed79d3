// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qroute/adam.hpp"
#include "qroute/nn.hpp"

namespace qroute {

/// Versioned binary training checkpoint.
///
/// Layout (all integers little-endian, payloads float32 little-endian):
///   magic "QRCK" | u32 version | u64 config_len | config bytes
///   | u64 step | u32 n_entries
///   | per entry: u32 name_len | name | u32 ndim | u64 dims[ndim] | f32 data[]
///   | u8 has_optimizer
///   | if set: u64 adam_t | per trainable entry, in order: f32 m[] | f32 v[]
///
/// Entries cover parameters first (registry order), then buffers, each
/// flagged by a leading u8 kind (0 = param, 1 = buffer) before name_len.
struct Checkpoint {
  std::string config_text;
  std::uint64_t step = 0;
  struct Entry {
    bool is_buffer = false;
    std::string name;
    Shape shape;
    std::vector<float> data;
  };
  std::vector<Entry> entries;
  bool has_optimizer = false;
  std::uint64_t adam_t = 0;
  std::vector<std::vector<float>> adam_m, adam_v;  // per param entry
};

/// Snapshot of the registry (params then buffers) plus optional
/// optimizer state. Values are rounded to float32.
Checkpoint make_checkpoint(const ParamRegistry& reg,
                           const std::string& config_text, std::uint64_t step,
                           const Adam* opt);

void save_checkpoint(const std::string& path, const Checkpoint& ck);
/// Throws ConfigError on malformed files (bad magic, wrong version,
/// truncation), naming the path and the offending field.
Checkpoint load_checkpoint(const std::string& path);

/// Copies checkpoint values into the registry's tensors and, when both
/// sides carry optimizer state, into the optimizer. Name or shape
/// mismatches throw ConfigError listing every missing and unexpected
/// entry.
void apply_checkpoint(const Checkpoint& ck, ParamRegistry& reg, Adam* opt);

}  // namespace qroute
