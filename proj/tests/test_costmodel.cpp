#include <vector>

#include "doctest.h"
#include "seqfuse/amortized.hpp"
#include "seqfuse/costmodel.hpp"

namespace {

using namespace seqfuse;

TEST_SUITE("costmodel") {

TEST_CASE("leading-term pins") {
  // Unit everything: regular 1*1*1*1 + 1*1*1*1 = 2, amortized (1+1) + (1+1)^2 = 6.
  LeadingFlops ones = flops_leading(1, 1, 1, 1);
  CHECK(ones.regular.leading_total == 2);
  CHECK(ones.amortized.leading_total == 6);

  // Production-shaped request: 2 layers, 48 history, 512 candidates, width 54.
  LeadingFlops feed = flops_leading(2, 48, 512, 54);
  CHECK(feed.regular.projection_term == 2LL * 512 * 48 * 54 * 54);
  CHECK(feed.regular.leading_total == 270729216LL);
  CHECK(feed.amortized.leading_total == 37134720LL);
  CHECK(feed.ratio == doctest::Approx(7.2906).epsilon(1e-4));
  CHECK(feed.ratio > 1.0);
}

TEST_CASE("leading ratio is independent of layer count") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const long long n = rng.uniform_int(1, 300);
    const long long m = rng.uniform_int(1, 600);
    const long long d = rng.uniform_int(1, 128);
    const long long l1 = rng.uniform_int(1, 12);
    const long long l2 = rng.uniform_int(1, 12);
    LeadingFlops a = flops_leading(l1, n, m, d);
    LeadingFlops b = flops_leading(l2, n, m, d);
    // ratio_a == ratio_b exactly: cross-multiply in integers to avoid fp noise.
    CHECK(a.regular.leading_total * b.amortized.leading_total ==
          b.regular.leading_total * a.amortized.leading_total);
  }
}

TEST_CASE("regular leading cost grows strictly with history length") {
  long long prev = flops_leading(2, 1, 16, 32).regular.leading_total;
  for (long long n = 2; n <= 64; ++n) {
    const long long cur = flops_leading(2, n, 16, 32).regular.leading_total;
    CHECK(cur > prev);
    prev = cur;
  }
  CHECK_THROWS_AS(flops_leading(0, 4, 4, 4), ContractError);
  CHECK_THROWS_AS(flops_leading(1, -1, 4, 4), ContractError);
  CHECK_THROWS_AS(flops_leading(1, 4, 0, 4), ContractError);
}

TEST_CASE("exact counts match the instrumented implementation") {
  Rng rng(99);
  struct Case {
    FusionMode fusion;
    InferenceMode inference;
  };
  const std::vector<Case> cases = {
      {FusionMode::AppendSelf, InferenceMode::Regular},
      {FusionMode::AppendCross, InferenceMode::Regular},
      {FusionMode::Concat, InferenceMode::Regular},
      {FusionMode::AppendCross, InferenceMode::Amortized},
  };
  for (int trial = 0; trial < 20; ++trial) {
    const Case c = cases[static_cast<size_t>(trial) % cases.size()];
    const int n_max = trial % 5 == 0 ? 0 : rng.uniform_int(1, 10);
    const int n_valid = n_max == 0 ? 0 : rng.uniform_int(0, n_max);
    const int m = rng.uniform_int(1, 6);
    const int item_dim = rng.uniform_int(2, 8);

    EncoderConfig cfg;
    cfg.token_dim = token_width(c.fusion, item_dim);
    cfg.key_dim = rng.uniform_int(1, 8);
    cfg.ffwd_dim = rng.uniform_int(1, 12);
    cfg.num_heads = rng.uniform_int(1, 3);
    cfg.num_layers = rng.uniform_int(0, 3);
    cfg.max_seq_len = n_max == 0 ? 1 : n_max;

    HistorySequence<double> h = random_history<double>(n_max, n_valid, item_dim, rng);
    CandidateSet<double> cands = random_candidates<double>(m, item_dim, rng);
    Rng wrng(1000 + trial);
    auto w = init_encoder_weights<double>(cfg, wrng);

    long long measured = 0;
    {
      FlopScope scope;
      if (c.inference == InferenceMode::Regular) {
        encode_regular(h, cands, c.fusion, w, cfg, -1);
      } else {
        encode_amortized(h, cands, w, cfg);
      }
      measured = scope.flops();
    }
    FlopReport rep = flops_exact(cfg, n_max, m, c.fusion, c.inference);
    CHECK(rep.exact_total == measured);
  }
}

TEST_CASE("exact amortized cost counts a single encoder pass") {
  EncoderConfig cfg;
  cfg.token_dim = 6;
  cfg.key_dim = 4;
  cfg.ffwd_dim = 8;
  cfg.num_layers = 2;
  cfg.max_seq_len = 5;

  Rng rng(3);
  HistorySequence<double> h = random_history<double>(5, 4, 6, rng);
  CandidateSet<double> cands = random_candidates<double>(9, 6, rng);
  Rng wrng(4);
  auto w = init_encoder_weights<double>(cfg, wrng);

  reset_encoder_pass_count();
  encode_regular(h, cands, FusionMode::AppendCross, w, cfg, -1);
  CHECK(encoder_pass_count() == 9);  // one pass per candidate

  reset_encoder_pass_count();
  encode_amortized(h, cands, w, cfg);
  CHECK(encoder_pass_count() == 1);  // one pass per request

  // And the exact totals reflect that asymmetry.
  FlopReport reg = flops_exact(cfg, 5, 9, FusionMode::AppendCross, InferenceMode::Regular);
  FlopReport amo = flops_exact(cfg, 5, 9, FusionMode::AppendCross, InferenceMode::Amortized);
  CHECK(reg.exact_total > amo.exact_total);
}

TEST_CASE("inference mode names parse and reject junk") {
  CHECK(parse_inference_mode("regular") == InferenceMode::Regular);
  CHECK(parse_inference_mode("amortized") == InferenceMode::Amortized);
  CHECK(std::string(to_string(InferenceMode::Amortized)) == "amortized");
  CHECK_THROWS_AS(parse_inference_mode("batched"), ContractError);
}

}  // TEST_SUITE

}  // namespace
