#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqfuse/encoder.hpp"

namespace seqfuse {

inline constexpr int kWeightsFormatVersion = 1;

template <class S>
nlohmann::json mat_to_json(const Mat<S>& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(static_cast<double>(m(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <class S>
Mat<S> mat_from_json(const nlohmann::json& j) {
  require(j.is_array(), "weights: expected a nested array");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Mat<S>(0, 0);
  const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
  Mat<S> m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    require(static_cast<Eigen::Index>(j[r].size()) == cols, "weights: ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = static_cast<S>(j[r][c].get<double>());
    }
  }
  return m;
}

inline nlohmann::json config_to_json(const EncoderConfig& c) {
  return nlohmann::json{{"token_dim", c.token_dim},
                        {"key_dim", c.key_dim},
                        {"ffwd_dim", c.ffwd_dim},
                        {"num_heads", c.num_heads},
                        {"num_layers", c.num_layers},
                        {"max_seq_len", c.max_seq_len},
                        {"eps", c.eps},
                        {"learned_positional", c.learned_positional}};
}

inline EncoderConfig config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.token_dim = j.at("token_dim").get<int>();
  c.key_dim = j.at("key_dim").get<int>();
  c.ffwd_dim = j.at("ffwd_dim").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.num_layers = j.at("num_layers").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.eps = j.at("eps").get<double>();
  c.learned_positional = j.value("learned_positional", false);
  return c;
}

template <class S>
nlohmann::json encoder_weights_to_json(const EncoderConfig& cfg, const EncoderWeights<S>& w) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& lw : w.layers) {
    nlohmann::json heads_q = nlohmann::json::array(), heads_bq = nlohmann::json::array();
    nlohmann::json heads_k = nlohmann::json::array(), heads_bk = nlohmann::json::array();
    nlohmann::json heads_v = nlohmann::json::array(), heads_bv = nlohmann::json::array();
    for (size_t h = 0; h < lw.w_q.size(); ++h) {
      heads_q.push_back(mat_to_json(lw.w_q[h]));
      heads_bq.push_back(mat_to_json(lw.b_q[h]));
      heads_k.push_back(mat_to_json(lw.w_k[h]));
      heads_bk.push_back(mat_to_json(lw.b_k[h]));
      heads_v.push_back(mat_to_json(lw.w_v[h]));
      heads_bv.push_back(mat_to_json(lw.b_v[h]));
    }
    layers.push_back(nlohmann::json{{"w_q", heads_q},
                                    {"b_q", heads_bq},
                                    {"w_k", heads_k},
                                    {"b_k", heads_bk},
                                    {"w_v", heads_v},
                                    {"b_v", heads_bv},
                                    {"w_o", mat_to_json(lw.w_o)},
                                    {"b_o", mat_to_json(lw.b_o)},
                                    {"ffwd_w1", mat_to_json(lw.ffwd_w1)},
                                    {"ffwd_b1", mat_to_json(lw.ffwd_b1)},
                                    {"ffwd_w2", mat_to_json(lw.ffwd_w2)},
                                    {"ffwd_b2", mat_to_json(lw.ffwd_b2)},
                                    {"ln1_gamma", mat_to_json(lw.ln1_gamma)},
                                    {"ln1_beta", mat_to_json(lw.ln1_beta)},
                                    {"ln2_gamma", mat_to_json(lw.ln2_gamma)},
                                    {"ln2_beta", mat_to_json(lw.ln2_beta)}});
  }
  nlohmann::json j{{"format_version", kWeightsFormatVersion},
                   {"config", config_to_json(cfg)},
                   {"layers", layers}};
  if (w.has_positional) j["positional"] = mat_to_json(w.positional);
  return j;
}

inline void check_format_version(const nlohmann::json& j) {
  require(j.contains("format_version"), "weights: missing format_version");
  const int v = j.at("format_version").get<int>();
  require(v == kWeightsFormatVersion,
          "weights: unknown format_version " + std::to_string(v) + " (expected " +
              std::to_string(kWeightsFormatVersion) + ")");
}

template <class S>
std::pair<EncoderConfig, EncoderWeights<S>> encoder_weights_from_json(const nlohmann::json& j) {
  check_format_version(j);
  EncoderConfig cfg = config_from_json(j.at("config"));
  EncoderWeights<S> w;
  for (const auto& lj : j.at("layers")) {
    AttentionLayerWeights<Mat<S>> lw;
    for (const auto& hj : lj.at("w_q")) lw.w_q.push_back(mat_from_json<S>(hj));
    for (const auto& hj : lj.at("b_q")) lw.b_q.push_back(mat_from_json<S>(hj));
    for (const auto& hj : lj.at("w_k")) lw.w_k.push_back(mat_from_json<S>(hj));
    for (const auto& hj : lj.at("b_k")) lw.b_k.push_back(mat_from_json<S>(hj));
    for (const auto& hj : lj.at("w_v")) lw.w_v.push_back(mat_from_json<S>(hj));
    for (const auto& hj : lj.at("b_v")) lw.b_v.push_back(mat_from_json<S>(hj));
    lw.w_o = mat_from_json<S>(lj.at("w_o"));
    lw.b_o = mat_from_json<S>(lj.at("b_o"));
    lw.ffwd_w1 = mat_from_json<S>(lj.at("ffwd_w1"));
    lw.ffwd_b1 = mat_from_json<S>(lj.at("ffwd_b1"));
    lw.ffwd_w2 = mat_from_json<S>(lj.at("ffwd_w2"));
    lw.ffwd_b2 = mat_from_json<S>(lj.at("ffwd_b2"));
    lw.ln1_gamma = mat_from_json<S>(lj.at("ln1_gamma"));
    lw.ln1_beta = mat_from_json<S>(lj.at("ln1_beta"));
    lw.ln2_gamma = mat_from_json<S>(lj.at("ln2_gamma"));
    lw.ln2_beta = mat_from_json<S>(lj.at("ln2_beta"));
    w.layers.push_back(std::move(lw));
  }
  if (j.contains("positional")) {
    w.positional = mat_from_json<S>(j.at("positional"));
    w.has_positional = true;
  }
  return {cfg, std::move(w)};
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  require(out.good(), "cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  require(out.good(), "failed writing '" + path + "'");
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError("failed parsing '" + path + "': " + e.what());
  }
  return j;
}

template <class S>
void save_encoder_weights(const std::string& path, const EncoderConfig& cfg,
                          const EncoderWeights<S>& w) {
  write_json_file(path, encoder_weights_to_json(cfg, w));
}

template <class S>
std::pair<EncoderConfig, EncoderWeights<S>> load_encoder_weights(const std::string& path) {
  return encoder_weights_from_json<S>(read_json_file(path));
}

}  // namespace seqfuse
