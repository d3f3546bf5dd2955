#pragma once

#include <optional>
#include <string>
#include <vector>

#include "seqfuse/encoder.hpp"

namespace seqfuse {

// Named model configuration. emb_dim is the per-item embedding width; the
// sequence token width follows from the fusion mode (doubled for concat).
struct Preset {
  std::string name;
  int emb_dim = 0;
  int key_dim = 0;
  int ffwd_dim = 0;
  int layers = 0;
  int heads = 0;
  int seq_len = 0;
  FusionMode mode = FusionMode::AppendCross;
  bool cpu_validated = true;  // gpu-paper is shipped for large machines only
};

const std::vector<Preset>& all_presets();

// Accepts exact names (public-append, feed-concat, ...) and the dataset
// shorthands public/feed/ads, which resolve to the append variant.
std::optional<Preset> find_preset(const std::string& name);

EncoderConfig make_encoder_config(const Preset& p);

}  // namespace seqfuse
