#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "seqfuse/errors.hpp"
#include "seqfuse/instrumentation.hpp"
#include "seqfuse/rng.hpp"
#include "seqfuse/tape.hpp"
#include "seqfuse/tensor.hpp"

namespace seqfuse {

struct EncoderConfig {
  int token_dim = 0;     // features per sequence position
  int key_dim = 0;       // per-head query/key/value width
  int ffwd_dim = 0;      // hidden width of the position-wise feedforward
  int num_heads = 1;
  int num_layers = 1;    // 0 is legal and yields the identity encoder
  int max_seq_len = 1;   // history capacity bound
  double eps = 1e-5;     // layer-norm variance floor
  bool learned_positional = false;
};

inline void validate(const EncoderConfig& c) {
  require(c.token_dim >= 1, "config: token_dim must be >= 1");
  require(c.key_dim >= 1, "config: key_dim must be >= 1");
  require(c.ffwd_dim >= 1, "config: ffwd_dim must be >= 1");
  require(c.num_heads >= 1, "config: num_heads must be >= 1");
  require(c.num_layers >= 0, "config: num_layers must be >= 0");
  require(c.max_seq_len >= 1, "config: max_seq_len must be >= 1");
  require(c.eps > 0.0, "config: eps must be positive");
}

// One attention block: per-head projections, output projection, feedforward,
// and the two layer norms. V may be Mat<S> (eager) or Tape<S>::Var (training).
template <class V>
struct AttentionLayerWeights {
  std::vector<V> w_q, b_q;  // per head: token_dim x key_dim, 1 x key_dim
  std::vector<V> w_k, b_k;
  std::vector<V> w_v, b_v;
  V w_o, b_o;               // (num_heads*key_dim) x token_dim, 1 x token_dim
  V ffwd_w1, ffwd_b1;       // token_dim x ffwd_dim, 1 x ffwd_dim
  V ffwd_w2, ffwd_b2;       // ffwd_dim x token_dim, 1 x token_dim
  V ln1_gamma, ln1_beta;    // 1 x token_dim
  V ln2_gamma, ln2_beta;
};

template <class V>
struct EncoderWeightsT {
  std::vector<AttentionLayerWeights<V>> layers;
  // Optional learned positional table, (max_seq_len + 1) x token_dim: history
  // slot i for position i, with the final slot shared by every candidate.
  // Not included in param_count, which covers the attention stack only.
  V positional;
  bool has_positional = false;
};

template <class S>
using EncoderWeights = EncoderWeightsT<Mat<S>>;

// Boolean visibility grid, query rows by key columns. True = may attend.
struct AttentionMask {
  BoolGrid visible;
  Eigen::Index n_q() const { return visible.rows(); }
  Eigen::Index n_kv() const { return visible.cols(); }
};

inline AttentionMask make_column_mask(int n_q, const std::vector<bool>& column_visible) {
  AttentionMask m;
  m.visible.resize(n_q, static_cast<Eigen::Index>(column_visible.size()));
  for (Eigen::Index q = 0; q < m.visible.rows(); ++q) {
    for (Eigen::Index c = 0; c < m.visible.cols(); ++c) {
      m.visible(q, c) = column_visible[static_cast<size_t>(c)];
    }
  }
  return m;
}

inline constexpr double kMaskBias = -1e9;

// Additive form of a mask: 0 for visible pairs, -1e9 for hidden ones, plus a
// 0/1 row indicator that zeroes queries with no visible key at all.
template <class S>
struct MaskOperands {
  Mat<S> bias;
  Vec<S> row_keep;
};

template <class S>
MaskOperands<S> make_mask_operands(const AttentionMask& mask) {
  MaskOperands<S> mo;
  mo.bias = Mat<S>::Zero(mask.n_q(), mask.n_kv());
  mo.row_keep = Vec<S>::Zero(mask.n_q());
  for (Eigen::Index q = 0; q < mask.n_q(); ++q) {
    bool any = false;
    for (Eigen::Index c = 0; c < mask.n_kv(); ++c) {
      if (mask.visible(q, c)) {
        any = true;
      } else {
        mo.bias(q, c) = S(kMaskBias);
      }
    }
    mo.row_keep(q) = any ? S(1) : S(0);
  }
  return mo;
}

template <class S>
struct HeadActivations {
  Mat<S> logits;  // scaled and mask-biased scores, n_q x n_kv
  Mat<S> probs;   // post-softmax, fully masked query rows zeroed
};

template <class S>
using LayerActivations = std::vector<HeadActivations<S>>;  // one per head

template <class S>
using AttentionActivations = std::vector<LayerActivations<S>>;  // one per layer

// Value backends for the shared forward definition. EagerOps computes on
// matrices directly; TapeOps records the same graph for backpropagation.
template <class S>
struct EagerOps {
  using Scalar = S;
  using Value = Mat<S>;
  Value matmul(const Value& a, const Value& b) { return seqfuse::matmul(a, b); }
  Value matmul_nt(const Value& a, const Value& b) { return seqfuse::matmul_nt(a, b); }
  Value add(const Value& a, const Value& b) { return seqfuse::add(a, b); }
  Value mul(const Value& a, const Value& b) { return seqfuse::mul(a, b); }
  Value add_rowvec(const Value& a, const Value& bias) { return add_row_broadcast(a, bias); }
  Value add_const(const Value& a, const Mat<S>& m) { return seqfuse::add(a, m); }
  Value scale(const Value& a, S s) { return seqfuse::scale(a, s); }
  Value rows_scale(const Value& a, const Vec<S>& keep) { return seqfuse::rows_scale(a, keep); }
  Value softmax_rows(const Value& a) { return seqfuse::softmax_rows(a); }
  Value layer_norm(const Value& a, const Value& gamma, const Value& beta, S eps) {
    return seqfuse::layer_norm(a, gamma, beta, eps);
  }
  Value relu(const Value& a) { return seqfuse::relu(a); }
  Value slice_rows(const Value& a, int first, int count) {
    return Value(a.middleRows(first, count));
  }
  Value slice_cols(const Value& a, int first, int count) {
    return Value(a.middleCols(first, count));
  }
  Value concat_rows(const std::vector<Value>& parts) {
    Eigen::Index rows = 0;
    for (const Value& p : parts) rows += p.rows();
    Value out(rows, parts.front().cols());
    Eigen::Index at = 0;
    for (const Value& p : parts) {
      out.middleRows(at, p.rows()) = p;
      at += p.rows();
    }
    return out;
  }
  Value concat_cols(const std::vector<Value>& parts) {
    Eigen::Index cols = 0;
    for (const Value& p : parts) cols += p.cols();
    Value out(parts.front().rows(), cols);
    Eigen::Index at = 0;
    for (const Value& p : parts) {
      out.middleCols(at, p.cols()) = p;
      at += p.cols();
    }
    return out;
  }
  Value repeat_row(const Value& a, int n) { return a.replicate(n, 1); }
  Value gather_rows(const Value& table, const std::vector<int>& ids) {
    Value out(static_cast<Eigen::Index>(ids.size()), table.cols());
    for (size_t i = 0; i < ids.size(); ++i) {
      out.row(static_cast<Eigen::Index>(i)) = table.row(ids[i]);
    }
    return out;
  }
  Value mean_rows_weighted(const Value& a, const Vec<S>& w) {
    tally_flops(2ll * a.rows() * a.cols());
    return w.transpose() * a;
  }
  Value constant(Mat<S> m) { return m; }
  const Mat<S>& value(const Value& v) const { return v; }
};

template <class S>
struct TapeOps {
  using Scalar = S;
  using Value = typename Tape<S>::Var;
  Tape<S>* tape;
  explicit TapeOps(Tape<S>& t) : tape(&t) {}
  Value matmul(Value a, Value b) { return tape->matmul(a, b); }
  Value matmul_nt(Value a, Value b) { return tape->matmul_nt(a, b); }
  Value add(Value a, Value b) { return tape->add(a, b); }
  Value mul(Value a, Value b) { return tape->mul(a, b); }
  Value add_rowvec(Value a, Value bias) { return tape->add_rowvec(a, bias); }
  Value add_const(Value a, const Mat<S>& m) { return tape->add_const(a, m); }
  Value scale(Value a, S s) { return tape->scale(a, s); }
  Value rows_scale(Value a, const Vec<S>& keep) { return tape->rows_scale(a, keep); }
  Value softmax_rows(Value a) { return tape->softmax_rows(a); }
  Value layer_norm(Value a, Value gamma, Value beta, S eps) {
    return tape->layer_norm(a, gamma, beta, eps);
  }
  Value relu(Value a) { return tape->relu(a); }
  Value slice_rows(Value a, int first, int count) { return tape->slice_rows(a, first, count); }
  Value slice_cols(Value a, int first, int count) { return tape->slice_cols(a, first, count); }
  Value concat_rows(const std::vector<Value>& parts) { return tape->concat_rows(parts); }
  Value concat_cols(const std::vector<Value>& parts) { return tape->concat_cols(parts); }
  Value repeat_row(Value a, int n) { return tape->repeat_row(a, n); }
  Value gather_rows(Value table, const std::vector<int>& ids) {
    return tape->gather_rows(table, ids);
  }
  Value mean_rows_weighted(Value a, const Vec<S>& w) { return tape->mean_rows_weighted(a, w); }
  Value constant(Mat<S> m) { return tape->constant(std::move(m)); }
  const Mat<S>& value(Value v) const { return tape->value(v); }
};

// Scaled dot-product attention over independent heads, concatenated and
// projected by w_o. Query rows whose keys are all hidden come out exactly
// zero, so the residual stream passes through them untouched.
template <class Ops>
typename Ops::Value multi_head_attention_core(Ops& ops, const typename Ops::Value& q_src,
                                              const typename Ops::Value& kv_src,
                                              const MaskOperands<typename Ops::Scalar>& mo,
                                              const AttentionLayerWeights<typename Ops::Value>& lw,
                                              const EncoderConfig& cfg,
                                              LayerActivations<typename Ops::Scalar>* trace) {
  using S = typename Ops::Scalar;
  using V = typename Ops::Value;
  const Eigen::Index n_q = ops.value(q_src).rows();
  const Eigen::Index n_kv = ops.value(kv_src).rows();
  if (n_kv == 0) {
    if (trace) {
      trace->assign(static_cast<size_t>(cfg.num_heads),
                    HeadActivations<S>{Mat<S>(n_q, 0), Mat<S>(n_q, 0)});
    }
    return ops.constant(Mat<S>::Zero(n_q, cfg.token_dim));
  }
  const S inv_sqrt_k = S(1) / std::sqrt(static_cast<S>(cfg.key_dim));
  std::vector<V> heads;
  heads.reserve(static_cast<size_t>(cfg.num_heads));
  if (trace) trace->clear();
  for (int h = 0; h < cfg.num_heads; ++h) {
    V q = ops.add_rowvec(ops.matmul(q_src, lw.w_q[h]), lw.b_q[h]);
    V k = ops.add_rowvec(ops.matmul(kv_src, lw.w_k[h]), lw.b_k[h]);
    V v = ops.add_rowvec(ops.matmul(kv_src, lw.w_v[h]), lw.b_v[h]);
    V logits = ops.add_const(ops.scale(ops.matmul_nt(q, k), inv_sqrt_k), mo.bias);
    V probs = ops.rows_scale(ops.softmax_rows(logits), mo.row_keep);
    if (trace) trace->push_back(HeadActivations<S>{ops.value(logits), ops.value(probs)});
    heads.push_back(ops.matmul(probs, v));
  }
  V cat = cfg.num_heads == 1 ? heads[0] : ops.concat_cols(heads);
  V out = ops.add_rowvec(ops.matmul(cat, lw.w_o), lw.b_o);
  return ops.rows_scale(out, mo.row_keep);
}

// Post-norm residual stack. Every layer reads its K/V source from the current
// layer input restricted to [kv_begin, kv_begin + kv_count).
template <class Ops>
typename Ops::Value encoder_forward_core(Ops& ops, typename Ops::Value x, int kv_begin,
                                         int kv_count, const AttentionMask& mask,
                                         const EncoderWeightsT<typename Ops::Value>& w,
                                         const EncoderConfig& cfg,
                                         AttentionActivations<typename Ops::Scalar>* trace) {
  using S = typename Ops::Scalar;
  using V = typename Ops::Value;
  const S eps = static_cast<S>(cfg.eps);
  MaskOperands<S> mo = make_mask_operands<S>(mask);
  if (trace) trace->clear();
  for (int l = 0; l < cfg.num_layers; ++l) {
    const AttentionLayerWeights<V>& lw = w.layers[static_cast<size_t>(l)];
    const bool full_range = kv_begin == 0 && kv_count == ops.value(x).rows();
    V kv = full_range ? x : ops.slice_rows(x, kv_begin, kv_count);
    LayerActivations<S> layer_trace;
    V attn = multi_head_attention_core(ops, x, kv, mo, lw, cfg, trace ? &layer_trace : nullptr);
    if (trace) trace->push_back(std::move(layer_trace));
    x = ops.layer_norm(ops.add(x, attn), lw.ln1_gamma, lw.ln1_beta, eps);
    V ff = ops.relu(ops.add_rowvec(ops.matmul(x, lw.ffwd_w1), lw.ffwd_b1));
    ff = ops.add_rowvec(ops.matmul(ff, lw.ffwd_w2), lw.ffwd_b2);
    x = ops.layer_norm(ops.add(x, ff), lw.ln2_gamma, lw.ln2_beta, eps);
  }
  ++encoder_pass_count();
  return x;
}

template <class S>
void validate_forward_inputs(const Mat<S>& tokens, int kv_begin, int kv_count,
                             const AttentionMask& mask, const EncoderWeightsT<Mat<S>>& w,
                             const EncoderConfig& cfg) {
  validate(cfg);
  require_dims(tokens.cols() == cfg.token_dim,
               "encoder_forward: tokens " + shape_str(tokens.rows(), tokens.cols()) +
                   " do not match token_dim " + std::to_string(cfg.token_dim));
  require(kv_begin >= 0 && kv_count >= 0 && kv_begin + kv_count <= tokens.rows(),
          "encoder_forward: kv range [" + std::to_string(kv_begin) + ", " +
              std::to_string(kv_begin + kv_count) + ") outside " +
              std::to_string(tokens.rows()) + " rows");
  require_dims(mask.n_q() == tokens.rows() && mask.n_kv() == kv_count,
               "encoder_forward: mask " + shape_str(mask.n_q(), mask.n_kv()) +
                   " does not match queries " + std::to_string(tokens.rows()) +
                   " and kv count " + std::to_string(kv_count));
  require(static_cast<int>(w.layers.size()) >= cfg.num_layers,
          "encoder_forward: weights hold " + std::to_string(w.layers.size()) +
              " layers, config needs " + std::to_string(cfg.num_layers));
}

// Eager full forward pass; returns outputs plus per-layer attention traces.
template <class S>
std::pair<Mat<S>, AttentionActivations<S>> encoder_forward(
    const Mat<S>& tokens, int kv_begin, int kv_count, const AttentionMask& mask,
    const EncoderWeights<S>& w, const EncoderConfig& cfg, bool want_trace = true) {
  validate_forward_inputs(tokens, kv_begin, kv_count, mask, w, cfg);
  EagerOps<S> ops;
  AttentionActivations<S> trace;
  Mat<S> out = encoder_forward_core(ops, tokens, kv_begin, kv_count, mask, w, cfg,
                                    want_trace ? &trace : nullptr);
  return {std::move(out), std::move(trace)};
}

// Standalone attention block with explicit query and key/value sources.
template <class S>
std::pair<Mat<S>, LayerActivations<S>> multi_head_attention(
    const Mat<S>& q_src, const Mat<S>& kv_src, const AttentionMask& mask,
    const AttentionLayerWeights<Mat<S>>& lw, const EncoderConfig& cfg) {
  validate(cfg);
  require_dims(q_src.cols() == cfg.token_dim && kv_src.cols() == cfg.token_dim,
               "multi_head_attention: sources " + shape_str(q_src.rows(), q_src.cols()) +
                   " and " + shape_str(kv_src.rows(), kv_src.cols()) +
                   " do not match token_dim " + std::to_string(cfg.token_dim));
  require_dims(mask.n_q() == q_src.rows() && mask.n_kv() == kv_src.rows(),
               "multi_head_attention: mask " + shape_str(mask.n_q(), mask.n_kv()) +
                   " does not match sources " + shape_str(q_src.rows(), kv_src.rows()));
  EagerOps<S> ops;
  MaskOperands<S> mo = make_mask_operands<S>(mask);
  LayerActivations<S> trace;
  Mat<S> out = multi_head_attention_core(ops, q_src, kv_src, mo, lw, cfg, &trace);
  return {std::move(out), std::move(trace)};
}

// Exact scalar count of the attention stack:
// l * [ 3h(dk + k) + (hkd + d) + (df + f) + (fd + d) + 4d ].
// The optional positional table is excluded.
inline long long param_count(const EncoderConfig& cfg) {
  validate(cfg);
  const long long d = cfg.token_dim;
  const long long k = cfg.key_dim;
  const long long f = cfg.ffwd_dim;
  const long long h = cfg.num_heads;
  const long long l = cfg.num_layers;
  return l * (3 * h * (d * k + k) + (h * k * d + d) + (d * f + f) + (f * d + d) + 4 * d);
}

enum class FusionMode { AppendSelf, AppendCross, Concat };

inline const char* to_string(FusionMode m) {
  switch (m) {
    case FusionMode::AppendSelf: return "append-self";
    case FusionMode::AppendCross: return "append-cross";
    case FusionMode::Concat: return "concat";
  }
  return "?";
}

inline FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "append-self") return FusionMode::AppendSelf;
  if (s == "append-cross") return FusionMode::AppendCross;
  if (s == "concat") return FusionMode::Concat;
  throw ContractError("unknown fusion mode '" + s +
                      "' (expected append-self, append-cross, or concat)");
}

// Sequence width a fusion mode induces from the per-item embedding width d:
// concatenation doubles the token, appending keeps it.
inline int token_width(FusionMode mode, int item_dim) {
  return mode == FusionMode::Concat ? 2 * item_dim : item_dim;
}

struct MatchResult {
  EncoderConfig config;  // target config; token_dim holds the per-item width
  int key_dim = 0;
  int ffwd_dim = 0;
  long long reference_count = 0;
  long long achieved_count = 0;
  double rel_gap = 0.0;
};

// Picks (key_dim, ffwd_dim) for target_mode whose parameter count lands
// closest to the reference budget. Configs carry the per-item embedding width
// in token_dim; the mode-induced sequence width is applied internally. Ties
// break toward the smaller key_dim, then the smaller ffwd_dim.
inline MatchResult match_params(const EncoderConfig& reference, FusionMode reference_mode,
                                FusionMode target_mode,
                                const std::vector<std::pair<int, int>>& grid,
                                std::optional<EncoderConfig> target = std::nullopt) {
  require(!grid.empty(), "match_params: empty search grid");
  EncoderConfig ref_actual = reference;
  ref_actual.token_dim = token_width(reference_mode, reference.token_dim);
  const long long want = param_count(ref_actual);

  EncoderConfig base = target.value_or(reference);
  EncoderConfig trial = base;
  trial.token_dim = token_width(target_mode, base.token_dim);

  MatchResult best;
  bool first = true;
  for (const auto& [k, f] : grid) {
    require(k >= 1 && f >= 1, "match_params: grid dims must be >= 1");
    trial.key_dim = k;
    trial.ffwd_dim = f;
    const long long got = param_count(trial);
    const long long gap = got > want ? got - want : want - got;
    const long long best_gap = best.achieved_count > want ? best.achieved_count - want
                                                          : want - best.achieved_count;
    if (first || gap < best_gap || (gap == best_gap && (k < best.key_dim ||
                                    (k == best.key_dim && f < best.ffwd_dim)))) {
      first = false;
      best.key_dim = k;
      best.ffwd_dim = f;
      best.achieved_count = got;
    }
  }
  best.reference_count = want;
  best.rel_gap = static_cast<double>(std::llabs(best.achieved_count - want)) /
                 static_cast<double>(want);
  best.config = base;
  best.config.key_dim = best.key_dim;
  best.config.ffwd_dim = best.ffwd_dim;
  return best;
}

inline std::vector<std::pair<int, int>> product_grid(int lo, int hi, int step) {
  require(lo >= 1 && hi >= lo && step >= 1, "product_grid: bad range");
  std::vector<std::pair<int, int>> g;
  for (int k = lo; k <= hi; k += step) {
    for (int f = lo; f <= hi; f += step) g.emplace_back(k, f);
  }
  return g;
}

inline std::vector<std::pair<int, int>> tied_grid(int lo, int hi, int step) {
  require(lo >= 1 && hi >= lo && step >= 1, "tied_grid: bad range");
  std::vector<std::pair<int, int>> g;
  for (int k = lo; k <= hi; k += step) g.emplace_back(k, k);
  return g;
}

// Xavier-uniform bound sqrt(6 / (fan_in + fan_out)).
template <class S>
Mat<S> glorot_uniform(int rows, int cols, int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Mat<S> m(rows, cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = static_cast<S>(rng.uniform(-bound, bound));
    }
  }
  return m;
}

// Deterministic initialization: weights Xavier-uniform from the seeded
// generator, biases zero, layer-norm gain one. Draw order is layer-major,
// then q/k/v per head, output projection, feedforward, positional last.
template <class S>
EncoderWeights<S> init_encoder_weights(const EncoderConfig& cfg, Rng& rng) {
  validate(cfg);
  const int d = cfg.token_dim, k = cfg.key_dim, f = cfg.ffwd_dim, h = cfg.num_heads;
  EncoderWeights<S> w;
  w.layers.resize(static_cast<size_t>(cfg.num_layers));
  for (auto& lw : w.layers) {
    for (int i = 0; i < h; ++i) {
      lw.w_q.push_back(glorot_uniform<S>(d, k, d, k, rng));
      lw.b_q.push_back(Mat<S>::Zero(1, k));
      lw.w_k.push_back(glorot_uniform<S>(d, k, d, k, rng));
      lw.b_k.push_back(Mat<S>::Zero(1, k));
      lw.w_v.push_back(glorot_uniform<S>(d, k, d, k, rng));
      lw.b_v.push_back(Mat<S>::Zero(1, k));
    }
    lw.w_o = glorot_uniform<S>(h * k, d, h * k, d, rng);
    lw.b_o = Mat<S>::Zero(1, d);
    lw.ffwd_w1 = glorot_uniform<S>(d, f, d, f, rng);
    lw.ffwd_b1 = Mat<S>::Zero(1, f);
    lw.ffwd_w2 = glorot_uniform<S>(f, d, f, d, rng);
    lw.ffwd_b2 = Mat<S>::Zero(1, d);
    lw.ln1_gamma = Mat<S>::Ones(1, d);
    lw.ln1_beta = Mat<S>::Zero(1, d);
    lw.ln2_gamma = Mat<S>::Ones(1, d);
    lw.ln2_beta = Mat<S>::Zero(1, d);
  }
  if (cfg.learned_positional) {
    w.positional = glorot_uniform<S>(cfg.max_seq_len + 1, d, cfg.max_seq_len + 1, d, rng);
    w.has_positional = true;
  }
  return w;
}

// Lifts eager weights onto a tape as leaves, preserving structure.
template <class S>
EncoderWeightsT<typename Tape<S>::Var> lift_weights(Tape<S>& tape, const EncoderWeights<S>& w) {
  using Var = typename Tape<S>::Var;
  EncoderWeightsT<Var> out;
  out.layers.resize(w.layers.size());
  for (size_t l = 0; l < w.layers.size(); ++l) {
    const auto& src = w.layers[l];
    auto& dst = out.layers[l];
    for (size_t h = 0; h < src.w_q.size(); ++h) {
      dst.w_q.push_back(tape.leaf(src.w_q[h]));
      dst.b_q.push_back(tape.leaf(src.b_q[h]));
      dst.w_k.push_back(tape.leaf(src.w_k[h]));
      dst.b_k.push_back(tape.leaf(src.b_k[h]));
      dst.w_v.push_back(tape.leaf(src.w_v[h]));
      dst.b_v.push_back(tape.leaf(src.b_v[h]));
    }
    dst.w_o = tape.leaf(src.w_o);
    dst.b_o = tape.leaf(src.b_o);
    dst.ffwd_w1 = tape.leaf(src.ffwd_w1);
    dst.ffwd_b1 = tape.leaf(src.ffwd_b1);
    dst.ffwd_w2 = tape.leaf(src.ffwd_w2);
    dst.ffwd_b2 = tape.leaf(src.ffwd_b2);
    dst.ln1_gamma = tape.leaf(src.ln1_gamma);
    dst.ln1_beta = tape.leaf(src.ln1_beta);
    dst.ln2_gamma = tape.leaf(src.ln2_gamma);
    dst.ln2_beta = tape.leaf(src.ln2_beta);
  }
  if (w.has_positional) {
    out.positional = tape.leaf(w.positional);
    out.has_positional = true;
  }
  return out;
}

}  // namespace seqfuse
