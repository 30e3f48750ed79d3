// SPDX-License-Identifier: Apache-2.0
#include "qroute/tape.hpp"

#include "qroute/errors.hpp"

namespace qroute {
namespace {
thread_local Tape* g_current = nullptr;
}

Tape* Tape::current() { return g_current; }

TapeScope::TapeScope(Tape& t) : prev_(g_current) { g_current = &t; }
TapeScope::~TapeScope() { g_current = prev_; }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ShapeError("backward() expects a scalar loss");
  ensure_grad(*loss.node());
  loss.node()->grad[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

bool tracing(std::initializer_list<const Tensor*> inputs) {
  if (Tape::current() == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

}  // namespace qroute
