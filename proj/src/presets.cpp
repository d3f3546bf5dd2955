#include "seqfuse/presets.hpp"

namespace seqfuse {

const std::vector<Preset>& all_presets() {
  static const std::vector<Preset> presets = {
      {"public-append", 16, 24, 24, 2, 1, 50, FusionMode::AppendCross, true},
      {"public-concat", 16, 16, 16, 2, 1, 50, FusionMode::Concat, true},
      {"feed-append", 54, 40, 40, 2, 1, 48, FusionMode::AppendCross, true},
      {"feed-concat", 104, 24, 24, 2, 1, 48, FusionMode::Concat, true},
      {"ads-append", 24, 32, 32, 1, 4, 20, FusionMode::AppendCross, true},
      {"ads-concat", 40, 16, 16, 1, 4, 20, FusionMode::Concat, true},
      // Large configuration intended for GPU-class machines; far too slow to
      // validate on a laptop CPU and shipped as-is.
      {"gpu-paper", 512, 64, 64, 8, 1, 256, FusionMode::AppendCross, false},
  };
  return presets;
}

std::optional<Preset> find_preset(const std::string& name) {
  std::string wanted = name;
  if (wanted == "public" || wanted == "feed" || wanted == "ads") wanted += "-append";
  for (const Preset& p : all_presets()) {
    if (p.name == wanted) return p;
  }
  return std::nullopt;
}

EncoderConfig make_encoder_config(const Preset& p) {
  EncoderConfig cfg;
  cfg.token_dim = token_width(p.mode, p.emb_dim);
  cfg.key_dim = p.key_dim;
  cfg.ffwd_dim = p.ffwd_dim;
  cfg.num_heads = p.heads;
  cfg.num_layers = p.layers;
  cfg.max_seq_len = p.seq_len;
  return cfg;
}

}  // namespace seqfuse
