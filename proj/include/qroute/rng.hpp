// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace qroute {

/// Deterministic random stream addressed by (seed, label).
///
/// The engine is mt19937_64, whose output sequence is fixed by the
/// standard, and every derived quantity below is computed from raw
/// engine words with explicit arithmetic. Standard-library
/// distributions (uniform_real_distribution, normal_distribution,
/// std::shuffle, ...) are implementation-defined and must not be used
/// anywhere results have to reproduce across toolchains.
///
/// Distinct labels give statistically independent streams for the same
/// seed, so consumers (init, routing noise, data generation, ...) can
/// draw in any relative order without perturbing each other.
class RngStream {
public:
  RngStream(std::uint64_t seed, std::string_view label);

  std::uint64_t next_u64();

  /// Uniform on the open interval (0, 1); never returns 0 or 1, so the
  /// result is always a valid argument to log().
  double uniform_open01();

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n), n >= 1. Unbiased via rejection.
  std::uint64_t uniform_int(std::uint64_t n);

  /// Standard normal via Box-Muller; pairs are generated at once and
  /// the spare is cached.
  double normal();

  /// Fisher-Yates shuffle driven by uniform_int.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace qroute
