#include "seqfuse/costmodel.hpp"

namespace seqfuse {

LeadingFlops flops_leading(long long l, long long n, long long m, long long d) {
  require(l >= 1, "flops_leading: l must be >= 1");
  require(m >= 1, "flops_leading: m must be >= 1");
  require(d >= 1, "flops_leading: d must be >= 1");
  require(n >= 0, "flops_leading: n must be >= 0");
  LeadingFlops out;
  out.regular.mode = "regular";
  out.regular.projection_term = l * m * n * d * d;
  out.regular.attention_term = l * m * n * n * d;
  out.regular.leading_total = out.regular.projection_term + out.regular.attention_term;
  out.regular.inputs = {l, n, m, d};
  out.amortized.mode = "amortized";
  out.amortized.projection_term = l * (n + m) * d * d;
  out.amortized.attention_term = l * (n + m) * (n + m) * d;
  out.amortized.leading_total = out.amortized.projection_term + out.amortized.attention_term;
  out.amortized.inputs = {l, n, m, d};
  out.ratio = static_cast<double>(out.regular.leading_total) /
              static_cast<double>(out.amortized.leading_total);
  return out;
}

namespace {

// FLOPs of one encoder pass over n_q query rows attending to n_kv key rows.
// Mirrors encoder_forward_core primitive by primitive; any change there must
// be reflected here, and the instrumented-equality tests enforce that.
long long encoder_pass_flops(const EncoderConfig& cfg, long long n_q, long long n_kv) {
  const long long d = cfg.token_dim;
  const long long k = cfg.key_dim;
  const long long f = cfg.ffwd_dim;
  const long long h = cfg.num_heads;
  long long per_layer = 0;
  if (n_kv > 0) {
    long long per_head = 0;
    per_head += 2 * n_q * d * k + n_q * k;        // query projection + bias
    per_head += 2 * (2 * n_kv * d * k + n_kv * k);  // key and value projections
    per_head += 2 * n_q * k * n_kv;               // scores
    per_head += n_q * n_kv;                       // 1/sqrt(k) scaling
    per_head += n_q * n_kv;                       // additive mask bias
    per_head += kFlopsPerSoftmaxElement * n_q * n_kv;
    per_head += n_q * n_kv;                       // masked-row zeroing of probs
    per_head += 2 * n_q * n_kv * k;               // probs * values
    per_layer += h * per_head;
    per_layer += 2 * n_q * (h * k) * d + n_q * d;  // output projection + bias
    per_layer += n_q * d;                          // masked-row zeroing of output
  }
  per_layer += n_q * d;                                    // attention residual
  per_layer += kFlopsPerLayerNormElement * n_q * d;        // first layer norm
  per_layer += 2 * n_q * d * f + n_q * f;                  // feedforward expand + bias
  per_layer += n_q * f;                                    // relu
  per_layer += 2 * n_q * f * d + n_q * d;                  // feedforward project + bias
  per_layer += n_q * d;                                    // feedforward residual
  per_layer += kFlopsPerLayerNormElement * n_q * d;        // second layer norm
  return cfg.num_layers * per_layer;
}

}  // namespace

FlopReport flops_exact(const EncoderConfig& cfg, long long n, long long m, FusionMode fusion,
                       InferenceMode inference) {
  validate(cfg);
  require(n >= 0, "flops_exact: n must be >= 0");
  require(m >= 1, "flops_exact: m must be >= 1");
  FlopReport rep;
  rep.mode = to_string(inference);
  rep.inputs = {cfg.num_layers, n, m, cfg.token_dim};
  if (inference == InferenceMode::Amortized) {
    if (fusion != FusionMode::AppendCross) {
      throw AmortizationUnsupported(
          std::string("amortized cost model requires append-cross fusion, got ") +
          to_string(fusion));
    }
    rep.exact_total = encoder_pass_flops(cfg, n + m, n);
    return rep;
  }
  long long per_candidate = 0;
  switch (fusion) {
    case FusionMode::AppendSelf:
      per_candidate = encoder_pass_flops(cfg, n + 1, n + 1);
      break;
    case FusionMode::AppendCross:
      per_candidate = encoder_pass_flops(cfg, n + 1, n);
      break;
    case FusionMode::Concat:
      per_candidate = encoder_pass_flops(cfg, n, n);
      break;
  }
  rep.exact_total = m * per_candidate;
  return rep;
}

}  // namespace seqfuse
