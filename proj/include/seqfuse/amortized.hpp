#pragma once

#include <utility>
#include <vector>

#include "seqfuse/fusion.hpp"

namespace seqfuse {

// All candidates of one request packed into a single sequence:
// rows [H_0 .. H_{n_max-1}, C_1 .. C_m], keys restricted to the history block.
template <class S>
struct PackedRequest {
  Mat<S> tokens;  // (n_max + m) x d
  int kv_begin = 0;
  int kv_count = 0;  // n_max
  AttentionMask mask;
  int n_max = 0;
  int m = 0;
};

template <class S>
PackedRequest<S> pack_amortized(const HistorySequence<S>& history,
                                const CandidateSet<S>& candidates) {
  validate(history);
  require(candidates.count() >= 1, "pack_amortized: need at least one candidate");
  require_dims(candidates.item_dim() == history.item_dim(),
               "pack_amortized: candidate width " +
                   shape_str(candidates.embeddings.rows(), candidates.embeddings.cols()) +
                   " does not match history " +
                   shape_str(history.embeddings.rows(), history.embeddings.cols()));
  const int n_max = history.capacity();
  const int m = candidates.count();
  PackedRequest<S> out;
  out.tokens.resize(n_max + m, history.item_dim());
  out.tokens.topRows(n_max) = history.embeddings;
  out.tokens.bottomRows(m) = candidates.embeddings;
  out.kv_begin = 0;
  out.kv_count = n_max;
  out.mask = make_column_mask(n_max + m, history.valid);
  out.n_max = n_max;
  out.m = m;
  return out;
}

// Single-pass scoring. Valid only for cross attention, where keys never
// include candidate rows, so candidates cannot see each other and history
// rows cannot see any candidate; the other fusion modes have no equivalent
// packing and are rejected.
template <class S>
std::pair<EncodedOutput<S>, AttentionActivations<S>> encode_amortized(
    const HistorySequence<S>& history, const CandidateSet<S>& candidates,
    const EncoderWeights<S>& w, const EncoderConfig& cfg,
    FusionMode mode = FusionMode::AppendCross, bool want_trace = false) {
  if (mode != FusionMode::AppendCross) {
    throw AmortizationUnsupported(
        std::string("amortized inference requires append-cross fusion, got ") +
        to_string(mode));
  }
  validate(cfg);
  require(history.capacity() <= cfg.max_seq_len,
          "encode_amortized: history capacity " + std::to_string(history.capacity()) +
              " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  PackedRequest<S> packed = pack_amortized(history, candidates);
  add_positional(packed.tokens, w, cfg, packed.n_max, packed.m);
  auto [encoded, trace] = encoder_forward(packed.tokens, packed.kv_begin, packed.kv_count,
                                          packed.mask, w, cfg, want_trace);
  EncodedOutput<S> out;
  out.mode = mode;
  out.candidates = encoded.bottomRows(packed.m);
  const Vec<S> mean_w = valid_mean_weights<S>(history.valid);
  out.history_summary = mean_w.transpose() * encoded.topRows(packed.n_max);
  return {std::move(out), std::move(trace)};
}

struct EquivalenceReport {
  double tolerance = 0.0;
  double max_abs_diff = 0.0;
  double max_rel_diff = 0.0;
  double history_summary_rel_diff = 0.0;
  std::vector<double> per_candidate_rel_diff;
  bool pass = false;
};

// Runs both inference paths on identical inputs and compares candidate
// outputs with scaled_diff: |a-b| normalized by max(1, overall magnitude).
// Encoder outputs are post-layernorm, so their scale is O(1) and a pure
// coordinatewise relative error would explode at zero crossings.
template <class S>
EquivalenceReport check_equivalence(const HistorySequence<S>& history,
                                    const CandidateSet<S>& candidates,
                                    const EncoderWeights<S>& w, const EncoderConfig& cfg,
                                    double tolerance,
                                    FusionMode mode = FusionMode::AppendCross) {
  auto [amortized, amortized_trace] = encode_amortized(history, candidates, w, cfg, mode);
  auto [regular, regular_trace] = encode_regular(history, candidates, mode, w, cfg, -1);

  EquivalenceReport rep;
  rep.tolerance = tolerance;
  rep.max_abs_diff = max_abs_diff(regular.candidates, amortized.candidates);
  rep.per_candidate_rel_diff.reserve(static_cast<size_t>(candidates.count()));
  for (int j = 0; j < candidates.count(); ++j) {
    const Mat<S> a = regular.candidates.row(j);
    const Mat<S> b = amortized.candidates.row(j);
    const double rel = scaled_diff(a, b);
    rep.per_candidate_rel_diff.push_back(rel);
    rep.max_rel_diff = std::max(rep.max_rel_diff, rel);
  }
  rep.history_summary_rel_diff = scaled_diff(regular.history_summary, amortized.history_summary);
  rep.pass = rep.max_rel_diff <= tolerance;
  return rep;
}

}  // namespace seqfuse
