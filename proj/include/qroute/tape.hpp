// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "qroute/tensor.hpp"

namespace qroute {

/// Gradient tape: an ordered log of backward closures.
///
/// Ops append one closure per executed primitive, so the log is already
/// topologically sorted and backward() is a single reverse sweep. Each
/// closure holds shared_ptrs to the nodes it needs; clearing the tape
/// releases them.
///
/// Recording is opt-in via TapeScope. With no scope installed (the
/// default, and the evaluation path) ops run pure and keep nothing.
class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Seeds d(loss)/d(loss) = 1 and runs recorded closures newest-first.
  /// `loss` must be scalar. Gradients accumulate into .grad storage of
  /// every requires_grad node reached; call zero_grad between steps.
  void backward(const Tensor& loss);

  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

  void push(std::function<void()> fn) { records_.push_back(std::move(fn)); }

  /// Innermost installed tape, or nullptr when not recording.
  static Tape* current();

private:
  std::vector<std::function<void()>> records_;
};

/// RAII installer: makes `t` the current tape for the enclosing scope.
class TapeScope {
public:
  explicit TapeScope(Tape& t);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

private:
  Tape* prev_;
};

/// True when a tape is installed and any input requires grad; ops call
/// this to decide whether to record.
bool tracing(std::initializer_list<const Tensor*> inputs);

}  // namespace qroute
