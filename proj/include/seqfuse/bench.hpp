#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "seqfuse/amortized.hpp"
#include "seqfuse/costmodel.hpp"
#include "seqfuse/csv.hpp"
#include "seqfuse/fusion.hpp"

namespace seqfuse {

struct BenchRequest {
  EncoderConfig config;       // token_dim is the full token width
  FusionMode fusion = FusionMode::AppendCross;
  InferenceMode inference = InferenceMode::Regular;
  int history_len = 16;       // history capacity n (all slots valid)
  int num_candidates = 8;     // m
  int passes = 5;             // timed passes
  int warmup = 1;             // untimed passes
  Precision precision = Precision::f32;
  unsigned long long seed = 1;
};

struct BenchRecord {
  std::string inference;
  int num_layers = 0;
  int history_len = 0;
  int num_candidates = 0;
  int token_dim = 0;
  int key_dim = 0;
  int ffwd_dim = 0;
  int num_heads = 0;
  std::string precision;
  int passes = 0;
  int warmup = 0;
  double total_seconds = 0;
  double seconds_per_pass = 0;
};

inline std::vector<std::string> bench_csv_header() {
  return {"inference", "l", "n", "m", "d_tok", "k", "f", "h", "precision",
          "passes", "warmup", "total_seconds", "seconds_per_pass"};
}

inline std::vector<std::string> bench_csv_row(const BenchRecord& r) {
  return {r.inference,
          std::to_string(r.num_layers),
          std::to_string(r.history_len),
          std::to_string(r.num_candidates),
          std::to_string(r.token_dim),
          std::to_string(r.key_dim),
          std::to_string(r.ffwd_dim),
          std::to_string(r.num_heads),
          r.precision,
          std::to_string(r.passes),
          std::to_string(r.warmup),
          format_double(r.total_seconds),
          format_double(r.seconds_per_pass)};
}

namespace detail {

// Accumulator defeats dead-code elimination of the timed passes.
template <class S>
S run_benchmark_passes(const BenchRequest& req, double& total_seconds) {
  require(req.passes >= 1, "bench: passes must be >= 1");
  require(req.warmup >= 0, "bench: warmup must be >= 0");
  const int item_dim =
      req.fusion == FusionMode::Concat ? req.config.token_dim / 2 : req.config.token_dim;
  Rng rng(req.seed);
  auto history = random_history<S>(req.history_len, req.history_len, item_dim, rng);
  auto candidates = random_candidates<S>(req.num_candidates, item_dim, rng);
  auto weights = init_encoder_weights<S>(req.config, rng);

  S sink = 0;
  auto one_pass = [&]() {
    if (req.inference == InferenceMode::Amortized) {
      auto [out, trace] =
          encode_amortized(history, candidates, weights, req.config, req.fusion);
      sink += out.candidates.sum();
    } else {
      auto [out, trace] =
          encode_regular(history, candidates, req.fusion, weights, req.config, -1);
      sink += out.candidates.sum();
    }
  };

  for (int i = 0; i < req.warmup; ++i) one_pass();
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < req.passes; ++i) one_pass();
  const auto stop = std::chrono::steady_clock::now();
  total_seconds = std::chrono::duration<double>(stop - start).count();
  return sink;
}

}  // namespace detail

inline BenchRecord run_benchmark(const BenchRequest& req) {
  double total_seconds = 0;
  if (req.precision == Precision::f64) {
    detail::run_benchmark_passes<double>(req, total_seconds);
  } else {
    detail::run_benchmark_passes<float>(req, total_seconds);
  }
  BenchRecord r;
  r.inference = to_string(req.inference);
  r.num_layers = req.config.num_layers;
  r.history_len = req.history_len;
  r.num_candidates = req.num_candidates;
  r.token_dim = req.config.token_dim;
  r.key_dim = req.config.key_dim;
  r.ffwd_dim = req.config.ffwd_dim;
  r.num_heads = req.config.num_heads;
  r.precision = to_string(req.precision);
  r.passes = req.passes;
  r.warmup = req.warmup;
  r.total_seconds = total_seconds;
  r.seconds_per_pass = total_seconds / req.passes;
  return r;
}

}  // namespace seqfuse
