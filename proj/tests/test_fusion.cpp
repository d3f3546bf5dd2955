#include <vector>

#include "doctest.h"
#include "seqfuse/fusion.hpp"

namespace {

using namespace seqfuse;

EncoderConfig small_config(int item_dim, FusionMode mode) {
  EncoderConfig cfg;
  cfg.token_dim = token_width(mode, item_dim);
  cfg.key_dim = 4;
  cfg.ffwd_dim = 6;
  cfg.num_heads = 2;
  cfg.num_layers = 2;
  cfg.max_seq_len = 8;
  return cfg;
}

TEST_SUITE("fusion") {

TEST_CASE("append layouts place the candidate after the history") {
  Rng rng(1);
  HistorySequence<double> h = random_history<double>(4, 3, 5, rng);
  Mat<double> cand = random_matrix<double>(1, 5, rng);

  for (FusionMode mode : {FusionMode::AppendSelf, FusionMode::AppendCross}) {
    FusedInput<double> f = fuse(h, cand, mode);
    REQUIRE(f.tokens.rows() == 5);
    REQUIRE(f.tokens.cols() == 5);
    CHECK(max_abs_diff(Mat<double>(f.tokens.topRows(4)), h.embeddings) == 0.0);
    CHECK(max_abs_diff(Mat<double>(f.tokens.row(4)), cand) == 0.0);
    CHECK(f.kv_begin == 0);
    CHECK(f.mask.n_q() == 5);
  }
  FusedInput<double> self = fuse(h, cand, FusionMode::AppendSelf);
  CHECK(self.kv_count == 5);
  CHECK(self.mask.n_kv() == 5);
  CHECK(self.mask.visible(0, 4));   // candidate key visible under self attention
  CHECK(!self.mask.visible(0, 3));  // padded history key hidden

  FusedInput<double> cross = fuse(h, cand, FusionMode::AppendCross);
  CHECK(cross.kv_count == 4);
  CHECK(cross.mask.n_kv() == 4);
  CHECK(!cross.mask.visible(2, 3));
}

TEST_CASE("concat layout pairs every history row with the candidate") {
  Rng rng(2);
  HistorySequence<double> h = random_history<double>(4, 2, 3, rng);
  Mat<double> cand = random_matrix<double>(1, 3, rng);
  FusedInput<double> f = fuse(h, cand, FusionMode::Concat);
  REQUIRE(f.tokens.rows() == 4);
  REQUIRE(f.tokens.cols() == 6);
  for (int i = 0; i < 4; ++i) {
    CHECK(max_abs_diff(Mat<double>(f.tokens.row(i).leftCols(3)),
                       Mat<double>(h.embeddings.row(i))) == 0.0);
    CHECK(max_abs_diff(Mat<double>(f.tokens.row(i).rightCols(3)), cand) == 0.0);
  }
  CHECK(f.kv_count == 4);
  CHECK(f.mask.n_q() == 4);
  CHECK(f.mask.n_kv() == 4);
  CHECK(f.mask.visible(3, 0));
  CHECK(!f.mask.visible(0, 2));
}

TEST_CASE("fuse rejects mismatched shapes") {
  Rng rng(3);
  HistorySequence<double> h = random_history<double>(4, 4, 5, rng);
  CHECK_THROWS_AS(fuse(h, random_matrix<double>(1, 4, rng), FusionMode::AppendCross),
                  DimensionError);
  CHECK_THROWS_AS(fuse(h, random_matrix<double>(2, 5, rng), FusionMode::AppendCross),
                  DimensionError);
  h.valid.pop_back();
  CHECK_THROWS_AS(fuse(h, random_matrix<double>(1, 5, rng), FusionMode::Concat), ContractError);
}

TEST_CASE("valid_mean_weights averages the valid rows only") {
  Vec<double> w = valid_mean_weights<double>({true, false, true, false});
  REQUIRE(w.size() == 4);
  CHECK(w(0) == 0.5);
  CHECK(w(1) == 0.0);
  CHECK(w(2) == 0.5);
  CHECK(w.sum() == 1.0);
  Vec<double> none = valid_mean_weights<double>({false, false});
  CHECK(none.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encode_regular output shapes per mode") {
  Rng rng(4);
  HistorySequence<double> h = random_history<double>(6, 4, 5, rng);
  CandidateSet<double> cands = random_candidates<double>(3, 5, rng);

  for (FusionMode mode : {FusionMode::AppendSelf, FusionMode::AppendCross, FusionMode::Concat}) {
    EncoderConfig cfg = small_config(5, mode);
    Rng wrng(100);
    auto w = init_encoder_weights<double>(cfg, wrng);
    auto [out, trace] = encode_regular(h, cands, mode, w, cfg);
    CHECK(out.mode == mode);
    CHECK(out.candidates.rows() == 3);
    CHECK(out.candidates.cols() == cfg.token_dim);
    CHECK(out.history_summary.rows() == 1);
    CHECK(out.history_summary.cols() == cfg.token_dim);
    REQUIRE(trace.size() == 2);          // layers
    REQUIRE(trace[0].size() == 2);       // heads
    if (mode == FusionMode::Concat) {
      CHECK(out.history_summary.cwiseAbs().maxCoeff() == 0.0);
      CHECK(trace[0][0].probs.rows() == 6);
      CHECK(trace[0][0].probs.cols() == 6);
    } else {
      CHECK(out.history_summary.cwiseAbs().maxCoeff() > 0.0);
      CHECK(trace[0][0].probs.rows() == 7);
      CHECK(trace[0][0].probs.cols() == (mode == FusionMode::AppendSelf ? 7 : 6));
    }
  }
}

TEST_CASE("padding rows never influence the encoded outputs") {
  Rng rng(5);
  const int n_max = 6, n_valid = 3, d = 4;
  HistorySequence<double> h = random_history<double>(n_max, n_valid, d, rng);
  CandidateSet<double> cands = random_candidates<double>(2, d, rng);

  HistorySequence<double> poisoned = h;
  poisoned.embeddings.bottomRows(n_max - n_valid).setConstant(7.5e5);

  for (FusionMode mode : {FusionMode::AppendSelf, FusionMode::AppendCross, FusionMode::Concat}) {
    EncoderConfig cfg = small_config(d, mode);
    Rng wrng(41);
    auto w = init_encoder_weights<double>(cfg, wrng);
    auto [base, t0] = encode_regular(h, cands, mode, w, cfg);
    auto [poke, t1] = encode_regular(poisoned, cands, mode, w, cfg);
    CHECK(max_abs_diff(base.candidates, poke.candidates) == 0.0);
    CHECK(max_abs_diff(base.history_summary, poke.history_summary) == 0.0);
  }
}

TEST_CASE("empty histories still encode") {
  Rng rng(6);
  const int d = 4;
  // Capacity 3 with zero valid rows: outputs must not depend on the padding.
  HistorySequence<double> h = random_history<double>(3, 0, d, rng);
  CandidateSet<double> cands = random_candidates<double>(2, d, rng);
  for (FusionMode mode : {FusionMode::AppendSelf, FusionMode::AppendCross, FusionMode::Concat}) {
    EncoderConfig cfg = small_config(d, mode);
    Rng wrng(42);
    auto w = init_encoder_weights<double>(cfg, wrng);
    auto [out, trace] = encode_regular(h, cands, mode, w, cfg);
    CHECK(out.candidates.allFinite());
    CHECK(out.history_summary.cwiseAbs().maxCoeff() == 0.0);

    HistorySequence<double> other = h;
    other.embeddings.setConstant(-3.25);
    auto [out2, t2] = encode_regular(other, cands, mode, w, cfg);
    CHECK(max_abs_diff(out.candidates, out2.candidates) == 0.0);
  }
}

TEST_CASE("positional table adds history slots and a shared candidate slot") {
  const int d = 3, n_max = 4;
  EncoderConfig cfg;
  cfg.token_dim = d;
  cfg.key_dim = 2;
  cfg.ffwd_dim = 2;
  cfg.max_seq_len = 6;  // larger than capacity: candidate slot stays at index 6
  cfg.learned_positional = true;
  Rng rng(7);
  auto w = init_encoder_weights<double>(cfg, rng);

  Mat<double> tokens = Mat<double>::Zero(n_max + 1, d);
  add_positional(tokens, w, cfg, n_max, 1);
  for (int i = 0; i < n_max; ++i) {
    CHECK(max_abs_diff(Mat<double>(tokens.row(i)), Mat<double>(w.positional.row(i))) == 0.0);
  }
  CHECK(max_abs_diff(Mat<double>(tokens.row(n_max)),
                     Mat<double>(w.positional.row(cfg.max_seq_len))) == 0.0);

  // Disabled config: a no-op even with the table present.
  EncoderConfig off = cfg;
  off.learned_positional = false;
  Mat<double> untouched = Mat<double>::Zero(n_max + 1, d);
  add_positional(untouched, w, off, n_max, 1);
  CHECK(untouched.cwiseAbs().maxCoeff() == 0.0);

  // Enabled config without a table: contract violation.
  EncoderWeights<double> bare;
  bare.layers = w.layers;
  CHECK_THROWS_AS(add_positional(tokens, bare, cfg, n_max, 1), ContractError);
}

TEST_CASE("selected=-1 skips the attention trace") {
  Rng rng(8);
  HistorySequence<double> h = random_history<double>(4, 4, 3, rng);
  CandidateSet<double> cands = random_candidates<double>(2, 3, rng);
  EncoderConfig cfg = small_config(3, FusionMode::AppendCross);
  Rng wrng(50);
  auto w = init_encoder_weights<double>(cfg, wrng);
  auto [out, trace] = encode_regular(h, cands, FusionMode::AppendCross, w, cfg, -1);
  CHECK(trace.empty());
  CHECK(out.candidates.rows() == 2);
  CHECK_THROWS_AS(encode_regular(h, cands, FusionMode::AppendCross, w, cfg, 2), ContractError);
}

TEST_CASE("encode_regular validates dimensions and capacity") {
  Rng rng(9);
  HistorySequence<double> h = random_history<double>(4, 2, 3, rng);
  CandidateSet<double> wrong = random_candidates<double>(2, 5, rng);
  EncoderConfig cfg = small_config(3, FusionMode::AppendCross);
  Rng wrng(51);
  auto w = init_encoder_weights<double>(cfg, wrng);
  CHECK_THROWS_AS(encode_regular(h, wrong, FusionMode::AppendCross, w, cfg), DimensionError);

  HistorySequence<double> deep = random_history<double>(9, 9, 3, rng);  // > max_seq_len
  CandidateSet<double> ok = random_candidates<double>(1, 3, rng);
  CHECK_THROWS_AS(encode_regular(deep, ok, FusionMode::AppendCross, w, cfg), ContractError);
}

}  // TEST_SUITE

}  // namespace
