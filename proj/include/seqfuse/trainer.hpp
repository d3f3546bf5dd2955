#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "seqfuse/csv.hpp"
#include "seqfuse/fusion.hpp"
#include "seqfuse/weights_io.hpp"

namespace seqfuse {

// ---------------------------------------------------------------------------
// Synthetic interaction data. A hidden teacher scores a candidate item by its
// latent similarity to the recent history, plus a per-user bias and noise.
// ---------------------------------------------------------------------------

struct SyntheticSpec {
  int num_items = 200;
  int num_users = 50;
  int item_dim = 16;
  int user_dim = 8;          // model-side user embedding width
  int history_capacity = 12;
  int num_examples = 4000;
  int teacher_window = 8;    // most recent items the teacher averages over
  double latent_sd = 0.5;
  double user_bias_sd = 0.3;
  double noise_sd = 0.1;
  std::uint64_t seed = 7;
};

inline void validate(const SyntheticSpec& s) {
  require(s.num_items >= 1 && s.num_users >= 1, "spec: need items and users");
  require(s.item_dim >= 1 && s.user_dim >= 1, "spec: embedding dims must be >= 1");
  require(s.history_capacity >= 1, "spec: history_capacity must be >= 1");
  require(s.num_examples >= 10, "spec: need at least 10 examples");
  require(s.teacher_window >= 1, "spec: teacher_window must be >= 1");
  require(s.noise_sd >= 0.0, "spec: noise_sd must be >= 0");
}

struct Example {
  int user = 0;
  std::vector<int> items;  // item ids, most recent first; 1..capacity of them
  int candidate = 0;
  double rating = 0.0;     // in [1, 5]
};

struct SyntheticDataset {
  SyntheticSpec spec;
  Mat<double> item_vectors;       // num_items x item_dim, the teacher's latents,
                                  // exposed as pretrained item features
  std::vector<double> user_bias;  // teacher-side only; the model never sees it
  std::vector<Example> examples;

  int train_count() const { return static_cast<int>(examples.size()) * 8 / 10; }
  int val_count() const { return static_cast<int>(examples.size()) / 10; }
  int test_count() const {
    return static_cast<int>(examples.size()) - train_count() - val_count();
  }
  int val_begin() const { return train_count(); }
  int test_begin() const { return train_count() + val_count(); }
};

// Noise-free teacher score before clipping: 3 + 2 <cand, mean of the most
// recent `window` history latents> + user_bias. Histories list the most
// recent item first, so the window is the leading entries.
inline double teacher_mean_rating(const Mat<double>& latents, const std::vector<int>& items,
                                  int candidate, double user_bias, int window) {
  require(!items.empty(), "teacher: empty history");
  const int take = std::min<int>(window, static_cast<int>(items.size()));
  Vec<double> mean = Vec<double>::Zero(latents.cols());
  for (int i = 0; i < take; ++i) {
    mean += latents.row(items[static_cast<size_t>(i)]).transpose();
  }
  mean /= static_cast<double>(take);
  const double sim = latents.row(candidate) * mean;
  return 3.0 + 2.0 * sim + user_bias;
}

inline double clip_rating(double r) { return std::clamp(r, 1.0, 5.0); }

inline SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  SyntheticDataset data;
  data.spec = spec;

  Rng latent_rng(mix_seed(spec.seed, 1));
  data.item_vectors.resize(spec.num_items, spec.item_dim);
  for (Eigen::Index r = 0; r < data.item_vectors.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.item_vectors.cols(); ++c) {
      data.item_vectors(r, c) = latent_rng.normal(0.0, spec.latent_sd);
    }
  }

  Rng user_rng(mix_seed(spec.seed, 2));
  data.user_bias.resize(static_cast<size_t>(spec.num_users));
  for (double& b : data.user_bias) b = user_rng.normal(0.0, spec.user_bias_sd);

  Rng ex_rng(mix_seed(spec.seed, 3));
  data.examples.resize(static_cast<size_t>(spec.num_examples));
  for (Example& ex : data.examples) {
    ex.user = ex_rng.uniform_int(0, spec.num_users - 1);
    const int len = ex_rng.uniform_int(1, spec.history_capacity);
    ex.items.resize(static_cast<size_t>(len));
    for (int& id : ex.items) id = ex_rng.uniform_int(0, spec.num_items - 1);
    ex.candidate = ex_rng.uniform_int(0, spec.num_items - 1);
    const double mean = teacher_mean_rating(data.item_vectors, ex.items, ex.candidate,
                                            data.user_bias[static_cast<size_t>(ex.user)],
                                            spec.teacher_window);
    ex.rating = clip_rating(mean + ex_rng.normal(0.0, spec.noise_sd));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Rating model: item/user embedding tables, the sequence encoder, and a small
// MLP head on [candidate encoding | history summary | their elementwise
// product | user embedding] (concat fusion pools the fused rows and splits
// them into the same blocks, giving the same head width).
// ---------------------------------------------------------------------------

struct RatingModelConfig {
  FusionMode mode = FusionMode::AppendCross;
  EncoderConfig encoder;  // token_dim already holds the mode-induced width
  int item_dim = 16;
  int user_dim = 8;
  int num_items = 0;
  int num_users = 0;
  int history_capacity = 12;
  std::vector<int> head_dims = {64, 32};
};

inline void validate(const RatingModelConfig& mc) {
  validate(mc.encoder);
  require(mc.encoder.token_dim == token_width(mc.mode, mc.item_dim),
          "model: encoder token_dim " + std::to_string(mc.encoder.token_dim) +
              " does not match mode width " +
              std::to_string(token_width(mc.mode, mc.item_dim)));
  require(mc.num_items >= 1 && mc.num_users >= 1, "model: need items and users");
  require(mc.history_capacity >= 1, "model: history_capacity must be >= 1");
  require(mc.history_capacity <= mc.encoder.max_seq_len,
          "model: history_capacity exceeds encoder max_seq_len");
  require(!mc.head_dims.empty(), "model: head needs at least one hidden layer");
}

// Width of the MLP head input; identical across fusion modes.
inline int head_input_dim(const RatingModelConfig& mc) {
  return 3 * mc.item_dim + mc.user_dim;
}

template <class V>
struct RatingParamsT {
  V item_table;  // num_items x item_dim
  V user_table;  // num_users x user_dim
  EncoderWeightsT<V> encoder;
  std::vector<V> head_w, head_b;  // hidden layers then the final scalar layer
};

template <class S>
using RatingParams = RatingParamsT<Mat<S>>;

template <class S>
struct RatingModel {
  RatingModelConfig config;
  RatingParams<S> params;
};

// Visits every trainable tensor in a fixed order; training updates and
// gradient checks both rely on this order being identical across value types.
template <class V, class Fn>
void visit_params(RatingParamsT<V>& p, Fn&& fn) {
  fn("item_table", p.item_table);
  fn("user_table", p.user_table);
  for (size_t l = 0; l < p.encoder.layers.size(); ++l) {
    auto& lw = p.encoder.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    for (size_t h = 0; h < lw.w_q.size(); ++h) {
      const std::string hs = "[" + std::to_string(h) + "]";
      fn(pre + "w_q" + hs, lw.w_q[h]);
      fn(pre + "b_q" + hs, lw.b_q[h]);
      fn(pre + "w_k" + hs, lw.w_k[h]);
      fn(pre + "b_k" + hs, lw.b_k[h]);
      fn(pre + "w_v" + hs, lw.w_v[h]);
      fn(pre + "b_v" + hs, lw.b_v[h]);
    }
    fn(pre + "w_o", lw.w_o);
    fn(pre + "b_o", lw.b_o);
    fn(pre + "ffwd_w1", lw.ffwd_w1);
    fn(pre + "ffwd_b1", lw.ffwd_b1);
    fn(pre + "ffwd_w2", lw.ffwd_w2);
    fn(pre + "ffwd_b2", lw.ffwd_b2);
    fn(pre + "ln1_gamma", lw.ln1_gamma);
    fn(pre + "ln1_beta", lw.ln1_beta);
    fn(pre + "ln2_gamma", lw.ln2_gamma);
    fn(pre + "ln2_beta", lw.ln2_beta);
  }
  if (p.encoder.has_positional) fn("positional", p.encoder.positional);
  for (size_t i = 0; i < p.head_w.size(); ++i) {
    fn("head.w" + std::to_string(i), p.head_w[i]);
    fn("head.b" + std::to_string(i), p.head_b[i]);
  }
}

template <class V>
std::vector<V*> param_list(RatingParamsT<V>& p) {
  std::vector<V*> out;
  visit_params(p, [&](const std::string&, V& m) { out.push_back(&m); });
  return out;
}

template <class V>
std::vector<std::string> param_names(RatingParamsT<V>& p) {
  std::vector<std::string> out;
  visit_params(p, [&](const std::string& name, V&) { out.push_back(name); });
  return out;
}

// Item table warm-starts from the dataset's pretrained item vectors; pass an
// empty matrix to draw it randomly instead. Final head bias starts at the
// rating midpoint so early training corrects deviations, not the offset.
template <class S>
RatingModel<S> init_rating_model(const RatingModelConfig& mc, const Mat<double>& item_init,
                                 Rng& rng) {
  validate(mc);
  RatingModel<S> model;
  model.config = mc;
  auto& p = model.params;
  if (item_init.size() > 0) {
    require_dims(item_init.rows() == mc.num_items && item_init.cols() == mc.item_dim,
                 "model init: item vectors " + shape_str(item_init.rows(), item_init.cols()) +
                     " do not match table " + shape_str(mc.num_items, mc.item_dim));
    p.item_table = item_init.cast<S>();
  } else {
    p.item_table = random_matrix<S>(mc.num_items, mc.item_dim, rng) * S(0.1);
  }
  p.user_table = random_matrix<S>(mc.num_users, mc.user_dim, rng) * S(0.1);
  p.encoder = init_encoder_weights<S>(mc.encoder, rng);
  int in_dim = head_input_dim(mc);
  for (int hidden : mc.head_dims) {
    p.head_w.push_back(glorot_uniform<S>(in_dim, hidden, in_dim, hidden, rng));
    // Small positive bias, not zero: with zero biases a fully dead relu layer
    // parks the next layer's pre-activations exactly on the relu kink, where
    // finite differences and the subgradient legitimately disagree.
    p.head_b.push_back(Mat<S>::Constant(1, hidden, S(0.01)));
    in_dim = hidden;
  }
  p.head_w.push_back(glorot_uniform<S>(in_dim, 1, in_dim, 1, rng));
  Mat<S> final_b(1, 1);
  final_b(0, 0) = S(3);
  p.head_b.push_back(final_b);
  return model;
}

template <class S>
RatingParamsT<typename Tape<S>::Var> lift_params(Tape<S>& tape, const RatingParams<S>& p) {
  using Var = typename Tape<S>::Var;
  RatingParamsT<Var> out;
  out.item_table = tape.leaf(p.item_table);
  out.user_table = tape.leaf(p.user_table);
  out.encoder = lift_weights(tape, p.encoder);
  for (const auto& w : p.head_w) out.head_w.push_back(tape.leaf(w));
  for (const auto& b : p.head_b) out.head_b.push_back(tape.leaf(b));
  return out;
}

// ---------------------------------------------------------------------------
// Shared forward definition: one prediction per example, identical for the
// eager path (evaluation, finite differences) and the tape path (training).
// ---------------------------------------------------------------------------

template <class Ops>
typename Ops::Value rating_prediction(Ops& ops, const RatingParamsT<typename Ops::Value>& p,
                                      const RatingModelConfig& mc, const Example& ex) {
  using S = typename Ops::Scalar;
  using V = typename Ops::Value;
  const int n_cap = mc.history_capacity;
  require(!ex.items.empty() && static_cast<int>(ex.items.size()) <= n_cap,
          "prediction: history length " + std::to_string(ex.items.size()) +
              " outside [1, " + std::to_string(n_cap) + "]");

  std::vector<int> hist_ids(static_cast<size_t>(n_cap), 0);
  std::vector<bool> valid(static_cast<size_t>(n_cap), false);
  for (size_t i = 0; i < ex.items.size(); ++i) {
    hist_ids[i] = ex.items[i];
    valid[i] = true;
  }

  V hist = ops.gather_rows(p.item_table, hist_ids);
  V cand = ops.gather_rows(p.item_table, {ex.candidate});
  V user = ops.gather_rows(p.user_table, {ex.user});
  const Vec<S> mean_w = valid_mean_weights<S>(valid);

  V features;
  if (mc.mode == FusionMode::Concat) {
    V tokens = ops.concat_cols({hist, ops.repeat_row(cand, n_cap)});
    if (p.encoder.has_positional) {
      tokens = ops.add(tokens, ops.slice_rows(p.encoder.positional, 0, n_cap));
    }
    AttentionMask mask = make_column_mask(n_cap, fusion_key_columns(valid, mc.mode));
    V x = encoder_forward_core(ops, tokens, 0, n_cap, mask, p.encoder, mc.encoder, nullptr);
    V pooled = ops.mean_rows_weighted(x, mean_w);
    // Product of the pooled history half with the pooled candidate half: the
    // head sees the interaction directly instead of relearning it.
    V left = ops.slice_cols(pooled, 0, mc.item_dim);
    V right = ops.slice_cols(pooled, mc.item_dim, mc.item_dim);
    features = ops.concat_cols({pooled, ops.mul(left, right), user});
  } else {
    V tokens = ops.concat_rows({hist, cand});
    if (p.encoder.has_positional) {
      // Table rows [0, n_cap) are history slots; the last table row is the
      // shared candidate slot, lining up with the appended candidate row.
      tokens = ops.add(tokens, ops.concat_rows(
                                   {ops.slice_rows(p.encoder.positional, 0, n_cap),
                                    ops.slice_rows(p.encoder.positional,
                                                   mc.encoder.max_seq_len, 1)}));
    }
    const int kv_count = mc.mode == FusionMode::AppendSelf ? n_cap + 1 : n_cap;
    AttentionMask mask = make_column_mask(n_cap + 1, fusion_key_columns(valid, mc.mode));
    V x = encoder_forward_core(ops, tokens, 0, kv_count, mask, p.encoder, mc.encoder, nullptr);
    V cand_out = ops.slice_rows(x, n_cap, 1);
    V hist_summary = ops.mean_rows_weighted(ops.slice_rows(x, 0, n_cap), mean_w);
    // Elementwise candidate-summary product: the rating teacher is nearly
    // bilinear in (candidate, history mean), so expose that block directly.
    features = ops.concat_cols({cand_out, hist_summary, ops.mul(cand_out, hist_summary), user});
  }

  V h = features;
  for (size_t i = 0; i < p.head_w.size(); ++i) {
    h = ops.add_rowvec(ops.matmul(h, p.head_w[i]), p.head_b[i]);
    if (i + 1 < p.head_w.size()) h = ops.relu(h);
  }
  return h;  // 1 x 1
}

template <class Ops>
typename Ops::Value batch_predictions(Ops& ops, const RatingParamsT<typename Ops::Value>& p,
                                      const RatingModelConfig& mc, const SyntheticDataset& data,
                                      const std::vector<int>& indices) {
  require(!indices.empty(), "batch: no examples");
  std::vector<typename Ops::Value> preds;
  preds.reserve(indices.size());
  for (int idx : indices) {
    preds.push_back(rating_prediction(ops, p, mc, data.examples[static_cast<size_t>(idx)]));
  }
  return ops.concat_rows(preds);
}

template <class S>
Mat<S> batch_targets(const SyntheticDataset& data, const std::vector<int>& indices) {
  Mat<S> t(static_cast<Eigen::Index>(indices.size()), 1);
  for (size_t i = 0; i < indices.size(); ++i) {
    t(static_cast<Eigen::Index>(i), 0) =
        static_cast<S>(data.examples[static_cast<size_t>(indices[i])].rating);
  }
  return t;
}

template <class S>
double batch_loss_eager(const RatingModel<S>& model, const SyntheticDataset& data,
                        const std::vector<int>& indices) {
  EagerOps<S> ops;
  // visit_params takes a mutable reference; the eager pass never writes.
  auto& params = const_cast<RatingModel<S>&>(model).params;
  Mat<S> preds = batch_predictions(ops, params, model.config, data, indices);
  Mat<S> targets = batch_targets<S>(data, indices);
  return static_cast<double>((preds - targets).squaredNorm()) / static_cast<double>(preds.size());
}

// Single-example prediction, clipped into the rating range as served.
template <class S>
double predict_rating(const RatingModel<S>& model, const Example& ex) {
  EagerOps<S> ops;
  auto& params = const_cast<RatingModel<S>&>(model).params;
  Mat<S> out = rating_prediction(ops, params, model.config, ex);
  return clip_rating(static_cast<double>(out(0, 0)));
}

template <class S>
double evaluate_mae(const RatingModel<S>& model, const SyntheticDataset& data, int first,
                    int count) {
  require(count >= 1 && first >= 0 &&
              first + count <= static_cast<int>(data.examples.size()),
          "evaluate: range [" + std::to_string(first) + ", " + std::to_string(first + count) +
              ") outside dataset");
  double total = 0.0;
  for (int i = first; i < first + count; ++i) {
    const Example& ex = data.examples[static_cast<size_t>(i)];
    total += std::abs(predict_rating(model, ex) - ex.rating);
  }
  return total / count;
}

// MAE of always predicting the training-split mean rating.
inline double baseline_mae(const SyntheticDataset& data, int first, int count) {
  double mean = 0.0;
  for (int i = 0; i < data.train_count(); ++i) mean += data.examples[static_cast<size_t>(i)].rating;
  mean /= data.train_count();
  double total = 0.0;
  for (int i = first; i < first + count; ++i) {
    total += std::abs(mean - data.examples[static_cast<size_t>(i)].rating);
  }
  return total / count;
}

// ---------------------------------------------------------------------------
// Training: Adam on minibatch MSE, deterministic for a fixed seed.
// ---------------------------------------------------------------------------

struct TrainConfig {
  int steps = 2000;
  int batch_size = 64;
  double learning_rate = 1e-3;
  int eval_every = 100;        // validation cadence; also the metrics cadence
  double early_stop_mae = 0.0; // stop once val MAE falls to this; 0 disables
  std::uint64_t seed = 1;
};

struct StepMetrics {
  int step = 0;
  double train_mse = 0.0;  // mean batch loss since the previous metrics row
  double val_mae = 0.0;
};

inline CsvTable metrics_to_csv(const std::vector<StepMetrics>& metrics) {
  CsvTable t;
  t.header = {"step", "train_mse", "val_mae"};
  for (const auto& m : metrics) {
    t.rows.push_back({std::to_string(m.step), format_double(m.train_mse),
                      format_double(m.val_mae)});
  }
  return t;
}

template <class S>
struct AdamState {
  std::vector<Mat<S>> m, v;
  long long t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  template <class P>
  void init(const std::vector<P*>& params) {
    for (P* p : params) {
      m.push_back(Mat<S>::Zero(p->rows(), p->cols()));
      v.push_back(Mat<S>::Zero(p->rows(), p->cols()));
    }
  }

  void update(std::vector<Mat<S>*>& params, const std::vector<const Mat<S>*>& grads, double lr) {
    ++t;
    const S c1 = S(1.0 - std::pow(beta1, static_cast<double>(t)));
    const S c2 = S(1.0 - std::pow(beta2, static_cast<double>(t)));
    for (size_t i = 0; i < params.size(); ++i) {
      const Mat<S>& g = *grads[i];
      m[i] = S(beta1) * m[i] + S(1.0 - beta1) * g;
      v[i] = S(beta2) * v[i] + S(1.0 - beta2) * g.cwiseProduct(g);
      params[i]->array() -=
          S(lr) * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + S(eps));
    }
  }
};

template <class S>
struct TrainResult {
  RatingModel<S> model;
  std::vector<StepMetrics> metrics;
  double baseline_val_mae = 0.0;
  double baseline_test_mae = 0.0;
  double final_val_mae = 0.0;
  double test_mae = 0.0;
  int steps_run = 0;
};

template <class S>
TrainResult<S> train_model(const SyntheticDataset& data, const RatingModelConfig& mc,
                           const TrainConfig& tc) {
  validate(mc);
  require(tc.steps >= 1 && tc.batch_size >= 1, "train: steps and batch_size must be >= 1");
  require(tc.eval_every >= 1, "train: eval_every must be >= 1");
  require(data.train_count() >= tc.batch_size, "train: batch larger than the training split");

  Rng init_rng(mix_seed(tc.seed, 101));
  TrainResult<S> result;
  result.model = init_rating_model<S>(mc, data.item_vectors, init_rng);
  result.baseline_val_mae = baseline_mae(data, data.val_begin(), data.val_count());
  result.baseline_test_mae = baseline_mae(data, data.test_begin(), data.test_count());

  auto params = param_list(result.model.params);
  AdamState<S> adam;
  adam.init(params);

  Rng batch_rng(mix_seed(tc.seed, 102));
  double loss_accum = 0.0;
  int loss_count = 0;
  for (int step = 1; step <= tc.steps; ++step) {
    std::vector<int> indices(static_cast<size_t>(tc.batch_size));
    for (int& idx : indices) idx = batch_rng.uniform_int(0, data.train_count() - 1);

    Tape<S> tape;
    auto lifted = lift_params(tape, result.model.params);
    TapeOps<S> ops(tape);
    auto preds = batch_predictions(ops, lifted, mc, data, indices);
    auto loss = tape.mse(preds, batch_targets<S>(data, indices));
    tape.backward(loss);
    loss_accum += static_cast<double>(tape.value(loss)(0, 0));
    ++loss_count;

    auto lifted_list = param_list(lifted);
    std::vector<const Mat<S>*> grads;
    grads.reserve(lifted_list.size());
    for (auto* v : lifted_list) grads.push_back(&tape.grad(*v));
    adam.update(params, grads, tc.learning_rate);

    result.steps_run = step;
    if (step % tc.eval_every == 0 || step == tc.steps) {
      StepMetrics sm;
      sm.step = step;
      sm.train_mse = loss_accum / loss_count;
      sm.val_mae = evaluate_mae(result.model, data, data.val_begin(), data.val_count());
      result.metrics.push_back(sm);
      loss_accum = 0.0;
      loss_count = 0;
      result.final_val_mae = sm.val_mae;
      if (tc.early_stop_mae > 0.0 && sm.val_mae <= tc.early_stop_mae) break;
    }
  }
  result.test_mae = evaluate_mae(result.model, data, data.test_begin(), data.test_count());
  return result;
}

// ---------------------------------------------------------------------------
// Gradient verification: analytic gradients against central finite
// differences on the same batch loss. Relative error uses the denominator
// floor max(|analytic|, |numeric|, 1e-6) so near-zero gradients compare on an
// absolute scale instead of amplifying finite-difference noise.
// ---------------------------------------------------------------------------

struct GradCheckReport {
  int num_checked = 0;
  double max_rel_err = 0.0;
  std::string worst;  // "name(r,c)" of the largest relative error
  double tolerance = 0.0;
  bool pass = false;
};

inline GradCheckReport gradient_check(RatingModel<double>& model, const SyntheticDataset& data,
                                      const std::vector<int>& indices, int per_tensor,
                                      double h = 1e-5, double tolerance = 1e-4,
                                      std::uint64_t seed = 5) {
  require(per_tensor >= 1, "gradcheck: per_tensor must be >= 1");
  Tape<double> tape;
  auto lifted = lift_params(tape, model.params);
  TapeOps<double> ops(tape);
  auto preds = batch_predictions(ops, lifted, model.config, data, indices);
  auto loss = tape.mse(preds, batch_targets<double>(data, indices));
  tape.backward(loss);

  auto params = param_list(model.params);
  auto names = param_names(model.params);
  auto lifted_list = param_list(lifted);

  GradCheckReport rep;
  rep.tolerance = tolerance;
  Rng pick(mix_seed(seed, 303));
  for (size_t i = 0; i < params.size(); ++i) {
    Mat<double>& p = *params[i];
    const Mat<double>& g = tape.grad(*lifted_list[i]);
    const int checks = std::min<int>(per_tensor, static_cast<int>(p.size()));
    for (int c = 0; c < checks; ++c) {
      const int r = pick.uniform_int(0, static_cast<int>(p.rows()) - 1);
      const int col = pick.uniform_int(0, static_cast<int>(p.cols()) - 1);
      const double saved = p(r, col);
      p(r, col) = saved + h;
      const double up = batch_loss_eager(model, data, indices);
      p(r, col) = saved - h;
      const double down = batch_loss_eager(model, data, indices);
      p(r, col) = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = g(r, col);
      const double rel = std::abs(numeric - analytic) /
                         std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      ++rep.num_checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = names[i] + "(" + std::to_string(r) + "," + std::to_string(col) + ")";
      }
    }
  }
  rep.pass = rep.max_rel_err <= tolerance;
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization.
// ---------------------------------------------------------------------------

inline nlohmann::json spec_to_json(const SyntheticSpec& s) {
  return nlohmann::json{{"num_items", s.num_items},
                        {"num_users", s.num_users},
                        {"item_dim", s.item_dim},
                        {"user_dim", s.user_dim},
                        {"history_capacity", s.history_capacity},
                        {"num_examples", s.num_examples},
                        {"teacher_window", s.teacher_window},
                        {"latent_sd", s.latent_sd},
                        {"user_bias_sd", s.user_bias_sd},
                        {"noise_sd", s.noise_sd},
                        {"seed", s.seed}};
}

inline SyntheticSpec spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  s.num_items = j.at("num_items").get<int>();
  s.num_users = j.at("num_users").get<int>();
  s.item_dim = j.at("item_dim").get<int>();
  s.user_dim = j.at("user_dim").get<int>();
  s.history_capacity = j.at("history_capacity").get<int>();
  s.num_examples = j.at("num_examples").get<int>();
  s.teacher_window = j.at("teacher_window").get<int>();
  s.latent_sd = j.at("latent_sd").get<double>();
  s.user_bias_sd = j.at("user_bias_sd").get<double>();
  s.noise_sd = j.at("noise_sd").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

inline nlohmann::json dataset_to_json(const SyntheticDataset& d) {
  nlohmann::json examples = nlohmann::json::array();
  for (const Example& ex : d.examples) {
    examples.push_back(nlohmann::json{{"user", ex.user},
                                      {"items", ex.items},
                                      {"candidate", ex.candidate},
                                      {"rating", ex.rating}});
  }
  return nlohmann::json{{"format_version", kWeightsFormatVersion},
                        {"spec", spec_to_json(d.spec)},
                        {"item_vectors", mat_to_json(d.item_vectors)},
                        {"user_bias", d.user_bias},
                        {"examples", examples}};
}

inline SyntheticDataset dataset_from_json(const nlohmann::json& j) {
  check_format_version(j);
  SyntheticDataset d;
  d.spec = spec_from_json(j.at("spec"));
  d.item_vectors = mat_from_json<double>(j.at("item_vectors"));
  d.user_bias = j.at("user_bias").get<std::vector<double>>();
  for (const auto& ej : j.at("examples")) {
    Example ex;
    ex.user = ej.at("user").get<int>();
    ex.items = ej.at("items").get<std::vector<int>>();
    ex.candidate = ej.at("candidate").get<int>();
    ex.rating = ej.at("rating").get<double>();
    d.examples.push_back(std::move(ex));
  }
  return d;
}

inline nlohmann::json model_config_to_json(const RatingModelConfig& mc) {
  return nlohmann::json{{"mode", to_string(mc.mode)},
                        {"encoder", config_to_json(mc.encoder)},
                        {"item_dim", mc.item_dim},
                        {"user_dim", mc.user_dim},
                        {"num_items", mc.num_items},
                        {"num_users", mc.num_users},
                        {"history_capacity", mc.history_capacity},
                        {"head_dims", mc.head_dims}};
}

inline RatingModelConfig model_config_from_json(const nlohmann::json& j) {
  RatingModelConfig mc;
  mc.mode = parse_fusion_mode(j.at("mode").get<std::string>());
  mc.encoder = config_from_json(j.at("encoder"));
  mc.item_dim = j.at("item_dim").get<int>();
  mc.user_dim = j.at("user_dim").get<int>();
  mc.num_items = j.at("num_items").get<int>();
  mc.num_users = j.at("num_users").get<int>();
  mc.history_capacity = j.at("history_capacity").get<int>();
  mc.head_dims = j.at("head_dims").get<std::vector<int>>();
  return mc;
}

template <class S>
nlohmann::json model_to_json(const RatingModel<S>& model) {
  auto& params = const_cast<RatingModel<S>&>(model).params;
  nlohmann::json head_w = nlohmann::json::array(), head_b = nlohmann::json::array();
  for (const auto& w : params.head_w) head_w.push_back(mat_to_json(w));
  for (const auto& b : params.head_b) head_b.push_back(mat_to_json(b));
  return nlohmann::json{
      {"format_version", kWeightsFormatVersion},
      {"model_config", model_config_to_json(model.config)},
      {"item_table", mat_to_json(params.item_table)},
      {"user_table", mat_to_json(params.user_table)},
      {"encoder", encoder_weights_to_json(model.config.encoder, params.encoder)},
      {"head_w", head_w},
      {"head_b", head_b}};
}

template <class S>
RatingModel<S> model_from_json(const nlohmann::json& j) {
  check_format_version(j);
  RatingModel<S> model;
  model.config = model_config_from_json(j.at("model_config"));
  model.params.item_table = mat_from_json<S>(j.at("item_table"));
  model.params.user_table = mat_from_json<S>(j.at("user_table"));
  auto [ecfg, ew] = encoder_weights_from_json<S>(j.at("encoder"));
  (void)ecfg;
  model.params.encoder = std::move(ew);
  for (const auto& wj : j.at("head_w")) model.params.head_w.push_back(mat_from_json<S>(wj));
  for (const auto& bj : j.at("head_b")) model.params.head_b.push_back(mat_from_json<S>(bj));
  validate(model.config);
  return model;
}

// Pair of fusion configurations for the toy task: the concat encoder plus an
// append encoder whose (key_dim, ffwd_dim) are budget-matched to it.
inline RatingModelConfig toy_model_config(FusionMode mode, const SyntheticSpec& spec) {
  RatingModelConfig mc;
  mc.mode = mode;
  mc.item_dim = spec.item_dim;
  mc.user_dim = spec.user_dim;
  mc.num_items = spec.num_items;
  mc.num_users = spec.num_users;
  mc.history_capacity = spec.history_capacity;
  mc.encoder.token_dim = token_width(mode, spec.item_dim);
  mc.encoder.num_layers = 1;
  mc.encoder.num_heads = 1;
  mc.encoder.max_seq_len = spec.history_capacity;
  mc.encoder.learned_positional = true;  // the teacher window is positional
  if (mode == FusionMode::Concat) {
    mc.encoder.key_dim = 16;
    mc.encoder.ffwd_dim = 16;
  } else {
    mc.encoder.key_dim = 32;
    mc.encoder.ffwd_dim = 32;
  }
  return mc;
}

}  // namespace seqfuse
