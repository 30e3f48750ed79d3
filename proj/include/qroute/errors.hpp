// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace qroute {

/// Error for malformed user input: config files, datasets, checkpoints,
/// CLI arguments. Carries a message meant to be shown verbatim.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Error for violated internal preconditions (shape mismatches and the
/// like). Indicates a bug in calling code, not bad user input.
class ShapeError : public std::logic_error {
public:
  explicit ShapeError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace qroute
