#pragma once

#include <string>
#include <vector>

#include "seqfuse/csv.hpp"
#include "seqfuse/fusion.hpp"

namespace seqfuse {

struct AttentionDumpRow {
  int layer = 0;
  int head = 0;
  int query = 0;
  int key = 0;
  std::string query_role;  // history | candidate | fused | padded
  std::string key_role;
  double logit = 0;
  double prob = 0;
};

namespace detail {

inline std::string fused_row_role(FusionMode mode, int index, int n_max,
                                  const std::vector<bool>& valid) {
  if (mode == FusionMode::Concat) {
    return index < n_max && valid[index] ? "fused" : "padded";
  }
  if (index == n_max) return "candidate";
  return valid[index] ? "history" : "padded";
}

inline std::string fused_key_role(FusionMode mode, int index, int n_max,
                                  const std::vector<bool>& valid) {
  if (mode == FusionMode::AppendSelf && index == n_max) return "candidate";
  if (mode == FusionMode::Concat) return index < n_max && valid[index] ? "fused" : "padded";
  return index < n_max && valid[index] ? "history" : "padded";
}

}  // namespace detail

// Attention probabilities for one candidate's fused pass, every layer and head.
template <class S>
std::vector<AttentionDumpRow> dump_attention(const HistorySequence<S>& history,
                                             const CandidateSet<S>& candidates, FusionMode mode,
                                             const EncoderWeights<S>& w, const EncoderConfig& cfg,
                                             int selected = 0) {
  auto [out, trace] = encode_regular(history, candidates, mode, w, cfg, selected);
  (void)out;
  const int n_max = static_cast<int>(history.capacity());
  std::vector<AttentionDumpRow> rows;
  for (size_t layer = 0; layer < trace.size(); ++layer) {
    const auto& la = trace[layer];
    for (size_t head = 0; head < la.size(); ++head) {
      const auto& probs = la[head].probs;
      const auto& logits = la[head].logits;
      for (Eigen::Index q = 0; q < probs.rows(); ++q) {
        for (Eigen::Index k = 0; k < probs.cols(); ++k) {
          AttentionDumpRow row;
          row.layer = static_cast<int>(layer);
          row.head = static_cast<int>(head);
          row.query = static_cast<int>(q);
          row.key = static_cast<int>(k);
          row.query_role =
              detail::fused_row_role(mode, static_cast<int>(q), n_max, history.valid);
          row.key_role = detail::fused_key_role(mode, static_cast<int>(k), n_max, history.valid);
          row.logit = static_cast<double>(logits(q, k));
          row.prob = static_cast<double>(probs(q, k));
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

inline CsvTable attention_dump_to_csv(const std::vector<AttentionDumpRow>& rows) {
  CsvTable t;
  t.header = {"layer", "head", "query", "key", "query_role", "key_role", "logit", "prob"};
  for (const auto& r : rows) {
    t.rows.push_back({std::to_string(r.layer), std::to_string(r.head), std::to_string(r.query),
                      std::to_string(r.key), r.query_role, r.key_role, format_double(r.logit),
                      format_double(r.prob)});
  }
  return t;
}

}  // namespace seqfuse
