#pragma once

#include <cstdint>

namespace seqfuse {

struct FlopCounter {
  long long flops = 0;
};

namespace detail {
inline FlopCounter*& flop_slot() {
  thread_local FlopCounter* slot = nullptr;
  return slot;
}
}  // namespace detail

// Adds n FLOPs to the innermost active FlopScope, if any. Primitive ops call
// this; the conventions (2 FLOPs per multiply-add, 5 per softmax element,
// 8 per layer-norm element, 1 per other elementwise op) live in tensor.hpp.
inline void tally_flops(long long n) {
  if (FlopCounter* c = detail::flop_slot()) c->flops += n;
}

// RAII window that captures the FLOP tally of everything executed inside it.
// Scopes nest; each scope counts only its own window.
class FlopScope {
 public:
  FlopScope() : prev_(detail::flop_slot()) { detail::flop_slot() = &counter_; }
  ~FlopScope() { detail::flop_slot() = prev_; }
  FlopScope(const FlopScope&) = delete;
  FlopScope& operator=(const FlopScope&) = delete;
  long long flops() const { return counter_.flops; }

 private:
  FlopCounter counter_;
  FlopCounter* prev_;
};

// Counts full encoder forward passes, so callers can observe how many encoder
// invocations a request cost (m for per-candidate inference, 1 for packed).
inline long long& encoder_pass_count() {
  thread_local long long count = 0;
  return count;
}

inline void reset_encoder_pass_count() { encoder_pass_count() = 0; }

}  // namespace seqfuse
