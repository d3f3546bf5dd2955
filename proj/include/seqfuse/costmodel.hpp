#pragma once

#include <string>

#include "seqfuse/encoder.hpp"

namespace seqfuse {

enum class InferenceMode { Regular, Amortized };

inline const char* to_string(InferenceMode m) {
  return m == InferenceMode::Regular ? "regular" : "amortized";
}

inline InferenceMode parse_inference_mode(const std::string& s) {
  if (s == "regular") return InferenceMode::Regular;
  if (s == "amortized") return InferenceMode::Amortized;
  throw ContractError("unknown inference mode '" + s + "' (expected regular or amortized)");
}

struct FlopInputs {
  long long l = 0, n = 0, m = 0, d = 0;
};

struct FlopReport {
  std::string mode;                    // regular | amortized
  long long projection_term = 0;       // leading l*seq*d^2 family
  long long attention_term = 0;        // leading l*seq^2*d family
  long long leading_total = 0;         // sum of the two leading terms
  long long exact_total = 0;           // full primitive-op walk; 0 for leading-only reports
  FlopInputs inputs;
};

struct LeadingFlops {
  FlopReport regular;
  FlopReport amortized;
  double ratio = 0.0;  // regular / amortized
};

// Leading-term cost of scoring one request: per-candidate inference costs
// l*m*n*d^2 + l*m*n^2*d; packed single-pass inference costs
// l*(n+m)*d^2 + l*(n+m)^2*d. Exact integer arithmetic throughout.
LeadingFlops flops_leading(long long l, long long n, long long m, long long d);

// Exact FLOP count of the encoder forward passes a request costs, walking the
// same primitive sequence the instrumented implementation executes: 2 FLOPs
// per multiply-add, 1 per other elementwise op, 5 per softmax element, 8 per
// layer-norm element. `n` is the history capacity; config.token_dim must be
// the actual sequence width (already doubled for concat fusion).
FlopReport flops_exact(const EncoderConfig& cfg, long long n, long long m, FusionMode fusion,
                       InferenceMode inference);

}  // namespace seqfuse
