#pragma once

#include <string>
#include <utility>
#include <vector>

#include "seqfuse/encoder.hpp"
#include "seqfuse/errors.hpp"
#include "seqfuse/rng.hpp"
#include "seqfuse/tensor.hpp"

namespace seqfuse {

// Fixed-capacity user history: n_max embedding rows plus a validity mask.
// Padding rows may hold arbitrary values and never influence any output.
template <class S>
struct HistorySequence {
  Mat<S> embeddings;        // n_max x d
  std::vector<bool> valid;  // length n_max

  int capacity() const { return static_cast<int>(embeddings.rows()); }
  int item_dim() const { return static_cast<int>(embeddings.cols()); }
  int valid_count() const {
    int n = 0;
    for (bool v : valid) n += v ? 1 : 0;
    return n;
  }
};

template <class S>
void validate(const HistorySequence<S>& h) {
  require(h.valid.size() == static_cast<size_t>(h.embeddings.rows()),
          "history: valid mask length " + std::to_string(h.valid.size()) +
              " does not match " + std::to_string(h.embeddings.rows()) + " rows");
}

template <class S>
struct CandidateSet {
  Mat<S> embeddings;  // m x d

  int count() const { return static_cast<int>(embeddings.rows()); }
  int item_dim() const { return static_cast<int>(embeddings.cols()); }
};

template <class S>
struct EncodedOutput {
  FusionMode mode = FusionMode::AppendCross;
  Mat<S> candidates;       // m x token width, one encoded row per candidate
  Mat<S> history_summary;  // 1 x token width; mean over valid history outputs,
                           // zero when the history is empty or mode is concat
};

// One candidate fused with the history into an encoder-ready sequence.
template <class S>
struct FusedInput {
  Mat<S> tokens;
  int kv_begin = 0;
  int kv_count = 0;
  AttentionMask mask;
};

// Key-column visibility induced by a history mask. For self attention the
// appended candidate column (index n_max) is visible to every query.
inline std::vector<bool> fusion_key_columns(const std::vector<bool>& valid, FusionMode mode) {
  std::vector<bool> cols = valid;
  if (mode == FusionMode::AppendSelf) cols.push_back(true);
  return cols;
}

// Lays out one candidate against the history at full capacity:
//  append modes: rows [H_0 .. H_{n_max-1}, C], candidate row index n_max;
//  concat: n_max rows of (H_i | C), token width doubled.
// Padding stays in place; the mask hides its key columns from every query.
template <class S>
FusedInput<S> fuse(const HistorySequence<S>& history, const Mat<S>& candidate_row,
                   FusionMode mode) {
  validate(history);
  require_dims(candidate_row.rows() == 1,
               "fuse: candidate must be a single row, got " +
                   shape_str(candidate_row.rows(), candidate_row.cols()));
  require_dims(candidate_row.cols() == history.embeddings.cols(),
               "fuse: candidate width " + shape_str(candidate_row.rows(), candidate_row.cols()) +
                   " does not match history " +
                   shape_str(history.embeddings.rows(), history.embeddings.cols()));
  const int n_max = history.capacity();
  const int d = history.item_dim();
  FusedInput<S> out;
  switch (mode) {
    case FusionMode::AppendSelf:
    case FusionMode::AppendCross: {
      out.tokens.resize(n_max + 1, d);
      out.tokens.topRows(n_max) = history.embeddings;
      out.tokens.row(n_max) = candidate_row.row(0);
      out.kv_begin = 0;
      out.kv_count = mode == FusionMode::AppendSelf ? n_max + 1 : n_max;
      out.mask = make_column_mask(n_max + 1, fusion_key_columns(history.valid, mode));
      break;
    }
    case FusionMode::Concat: {
      out.tokens.resize(n_max, 2 * d);
      for (int i = 0; i < n_max; ++i) {
        out.tokens.row(i).leftCols(d) = history.embeddings.row(i);
        out.tokens.row(i).rightCols(d) = candidate_row.row(0);
      }
      out.kv_begin = 0;
      out.kv_count = n_max;
      out.mask = make_column_mask(n_max, fusion_key_columns(history.valid, mode));
      break;
    }
  }
  return out;
}

// Per-row weights averaging the valid history positions; all zero when none.
template <class S>
Vec<S> valid_mean_weights(const std::vector<bool>& valid) {
  Vec<S> w = Vec<S>::Zero(static_cast<Eigen::Index>(valid.size()));
  int n = 0;
  for (bool v : valid) n += v ? 1 : 0;
  if (n == 0) return w;
  for (size_t i = 0; i < valid.size(); ++i) {
    if (valid[i]) w(static_cast<Eigen::Index>(i)) = S(1) / S(n);
  }
  return w;
}

// Adds the learned positional table: history row i gets slot i and every
// candidate row shares slot n_max, keeping candidates order-free.
template <class S>
void add_positional(Mat<S>& tokens, const EncoderWeights<S>& w, const EncoderConfig& cfg,
                    int n_history_rows, int n_candidate_rows) {
  if (!cfg.learned_positional) return;
  require(w.has_positional, "positional table enabled in config but missing from weights");
  require(n_history_rows <= cfg.max_seq_len,
          "positional: history rows exceed max_seq_len");
  require_dims(w.positional.cols() == tokens.cols(),
               "positional: table width " + shape_str(w.positional.rows(), w.positional.cols()) +
                   " does not match tokens " + shape_str(tokens.rows(), tokens.cols()));
  for (int i = 0; i < n_history_rows; ++i) tokens.row(i) += w.positional.row(i);
  for (int j = 0; j < n_candidate_rows; ++j) {
    tokens.row(n_history_rows + j) += w.positional.row(cfg.max_seq_len);
  }
}

// Scores every candidate against the history with one encoder pass per
// candidate. Attention traces are captured for `selected` (pass -1 to skip).
// The history summary is read from the selected pass (pass 0 when skipped);
// for cross attention it is identical across candidates by construction.
template <class S>
std::pair<EncodedOutput<S>, AttentionActivations<S>> encode_regular(
    const HistorySequence<S>& history, const CandidateSet<S>& candidates, FusionMode mode,
    const EncoderWeights<S>& w, const EncoderConfig& cfg, int selected = 0) {
  validate(history);
  validate(cfg);
  require(candidates.count() >= 1, "encode_regular: need at least one candidate");
  require_dims(candidates.item_dim() == history.item_dim(),
               "encode_regular: candidate width " +
                   shape_str(candidates.embeddings.rows(), candidates.embeddings.cols()) +
                   " does not match history " +
                   shape_str(history.embeddings.rows(), history.embeddings.cols()));
  require(history.capacity() <= cfg.max_seq_len,
          "encode_regular: history capacity " + std::to_string(history.capacity()) +
              " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  require(selected < candidates.count(), "encode_regular: selected candidate out of range");

  const int n_max = history.capacity();
  const int m = candidates.count();
  const int width = token_width(mode, history.item_dim());
  const int summary_pass = selected < 0 ? 0 : selected;

  EncodedOutput<S> out;
  out.mode = mode;
  out.candidates.resize(m, width);
  out.history_summary = Mat<S>::Zero(1, width);
  AttentionActivations<S> selected_trace;

  const Vec<S> mean_w = valid_mean_weights<S>(history.valid);
  for (int j = 0; j < m; ++j) {
    FusedInput<S> fused = fuse(history, Mat<S>(candidates.embeddings.row(j)), mode);
    add_positional(fused.tokens, w, cfg, n_max, mode == FusionMode::Concat ? 0 : 1);
    const bool want_trace = j == selected;
    auto [encoded, trace] = encoder_forward(fused.tokens, fused.kv_begin, fused.kv_count,
                                            fused.mask, w, cfg, want_trace);
    if (want_trace) selected_trace = std::move(trace);
    if (mode == FusionMode::Concat) {
      out.candidates.row(j) = mean_w.transpose() * encoded;
    } else {
      out.candidates.row(j) = encoded.row(n_max);
      if (j == summary_pass) {
        out.history_summary = mean_w.transpose() * encoded.topRows(n_max);
      }
    }
  }
  return {std::move(out), std::move(selected_trace)};
}

// Seeded standard-normal test tensors for benchmarks and equivalence checks.
template <class S>
Mat<S> random_matrix(int rows, int cols, Rng& rng) {
  Mat<S> m(rows, cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = static_cast<S>(rng.normal());
  }
  return m;
}

template <class S>
HistorySequence<S> random_history(int n_max, int n_valid, int d, Rng& rng) {
  require(n_valid <= n_max, "random_history: n_valid exceeds capacity");
  HistorySequence<S> h;
  h.embeddings = random_matrix<S>(n_max, d, rng);
  h.valid.assign(static_cast<size_t>(n_max), false);
  for (int i = 0; i < n_valid; ++i) h.valid[static_cast<size_t>(i)] = true;
  return h;
}

template <class S>
CandidateSet<S> random_candidates(int m, int d, Rng& rng) {
  return CandidateSet<S>{random_matrix<S>(m, d, rng)};
}

}  // namespace seqfuse
