#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "seqfuse/amortized.hpp"
#include "seqfuse/bench.hpp"
#include "seqfuse/costmodel.hpp"
#include "seqfuse/inspect.hpp"
#include "seqfuse/presets.hpp"
#include "seqfuse/trainer.hpp"

namespace {

using nlohmann::json;
using namespace seqfuse;

constexpr int kOutputFormatVersion = 1;

Precision env_precision() {
  const char* v = std::getenv("SEQFUSE_PRECISION");
  return v ? parse_precision(v) : Precision::f32;
}

// Encoder geometry shared by most subcommands: either a named preset or
// explicit dimensions, with explicit flags overriding preset fields.
struct ConfigArgs {
  std::string preset;
  std::string mode;
  int item_dim = 0;
  int key_dim = 0;
  int ffwd_dim = 0;
  int heads = 0;
  int layers = -1;
  int max_seq = 0;
};

void add_config_options(CLI::App* cmd, ConfigArgs& a) {
  cmd->add_option("--preset", a.preset, "named configuration (see `seqfuse params --list`)");
  cmd->add_option("--mode", a.mode, "fusion mode: append-self, append-cross, concat");
  cmd->add_option("--item-dim", a.item_dim, "per-item embedding width");
  cmd->add_option("--key-dim", a.key_dim, "per-head query/key/value width");
  cmd->add_option("--ffwd-dim", a.ffwd_dim, "feedforward hidden width");
  cmd->add_option("--heads", a.heads, "attention heads");
  cmd->add_option("--layers", a.layers, "encoder layers");
  cmd->add_option("--max-seq", a.max_seq, "history capacity bound");
}

struct ResolvedConfig {
  EncoderConfig cfg;
  FusionMode mode = FusionMode::AppendCross;
  int item_dim = 0;
};

ResolvedConfig resolve_config(const ConfigArgs& a, int min_seq_len = 1) {
  ResolvedConfig r;
  int key = 0, ffwd = 0, heads = 1, layers = 1, seq = 0;
  bool have_preset = !a.preset.empty();
  if (have_preset) {
    auto p = find_preset(a.preset);
    if (!p) throw ContractError("unknown preset '" + a.preset + "'");
    r.mode = p->mode;
    r.item_dim = p->emb_dim;
    key = p->key_dim;
    ffwd = p->ffwd_dim;
    heads = p->heads;
    layers = p->layers;
    seq = p->seq_len;
  }
  if (!a.mode.empty()) r.mode = parse_fusion_mode(a.mode);
  if (a.item_dim > 0) r.item_dim = a.item_dim;
  if (a.key_dim > 0) key = a.key_dim;
  if (a.ffwd_dim > 0) ffwd = a.ffwd_dim;
  if (a.heads > 0) heads = a.heads;
  if (a.layers >= 0) layers = a.layers;
  if (a.max_seq > 0) seq = a.max_seq;
  require(r.item_dim >= 1, "config: give --preset or --item-dim");
  require(key >= 1 && ffwd >= 1, "config: give --preset or both --key-dim and --ffwd-dim");
  r.cfg.token_dim = token_width(r.mode, r.item_dim);
  r.cfg.key_dim = key;
  r.cfg.ffwd_dim = ffwd;
  r.cfg.num_heads = heads;
  r.cfg.num_layers = layers;
  r.cfg.max_seq_len = std::max(seq, std::max(min_seq_len, 1));
  validate(r.cfg);
  return r;
}

json config_summary(const ResolvedConfig& r) {
  json j = config_to_json(r.cfg);
  j["mode"] = to_string(r.mode);
  j["item_dim"] = r.item_dim;
  return j;
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

// --- params -----------------------------------------------------------------

struct ParamsArgs {
  ConfigArgs config;
  bool list = false;
};

int run_params(const ParamsArgs& a) {
  if (a.list) {
    json presets = json::array();
    for (const Preset& p : all_presets()) {
      EncoderConfig cfg = make_encoder_config(p);
      presets.push_back(json{{"name", p.name},
                             {"mode", to_string(p.mode)},
                             {"item_dim", p.emb_dim},
                             {"key_dim", p.key_dim},
                             {"ffwd_dim", p.ffwd_dim},
                             {"layers", p.layers},
                             {"heads", p.heads},
                             {"max_seq_len", p.seq_len},
                             {"cpu_validated", p.cpu_validated},
                             {"param_count", param_count(cfg)}});
    }
    print_json(json{{"format_version", kOutputFormatVersion}, {"presets", presets}});
    return 0;
  }
  ResolvedConfig r = resolve_config(a.config);
  print_json(json{{"format_version", kOutputFormatVersion},
                  {"config", config_summary(r)},
                  {"param_count", param_count(r.cfg)}});
  return 0;
}

// --- match-params -----------------------------------------------------------

struct MatchArgs {
  ConfigArgs config;  // reference
  std::string target_mode;
  int target_dim = 0;
  std::string grid = "product";
  int lo = 4, hi = 256, step = 4;
};

int run_match(const MatchArgs& a) {
  ResolvedConfig ref = resolve_config(a.config);
  require(!a.target_mode.empty(), "match-params: --target-mode is required");
  FusionMode target_mode = parse_fusion_mode(a.target_mode);

  std::vector<std::pair<int, int>> grid;
  if (a.grid == "product") {
    grid = product_grid(a.lo, a.hi, a.step);
  } else if (a.grid == "tied") {
    grid = tied_grid(a.lo, a.hi, a.step);
  } else {
    throw ContractError("match-params: unknown grid '" + a.grid + "' (product or tied)");
  }

  EncoderConfig ref_cfg = ref.cfg;
  ref_cfg.token_dim = ref.item_dim;  // match_params applies mode widths itself
  std::optional<EncoderConfig> target;
  if (a.target_dim > 0) {
    EncoderConfig t = ref_cfg;
    t.token_dim = a.target_dim;
    target = t;
  }
  MatchResult res = match_params(ref_cfg, ref.mode, target_mode, grid, target);

  print_json(json{{"format_version", kOutputFormatVersion},
                  {"reference", config_summary(ref)},
                  {"reference_count", res.reference_count},
                  {"target_mode", to_string(target_mode)},
                  {"target_item_dim", res.config.token_dim},
                  {"key_dim", res.key_dim},
                  {"ffwd_dim", res.ffwd_dim},
                  {"achieved_count", res.achieved_count},
                  {"rel_gap", res.rel_gap},
                  {"grid", a.grid}});
  return 0;
}

// --- flops ------------------------------------------------------------------

struct FlopsArgs {
  ConfigArgs config;
  int history = -1;
  int candidates = 8;
};

int run_flops(const FlopsArgs& a) {
  int history = a.history;
  if (history < 0) {
    ResolvedConfig probe = resolve_config(a.config);
    history = probe.cfg.max_seq_len;
  }
  ResolvedConfig r = resolve_config(a.config, history);
  require(a.candidates >= 1, "flops: --candidates must be >= 1");

  LeadingFlops leading = flops_leading(r.cfg.num_layers, history, a.candidates, r.item_dim);
  FlopReport exact_regular =
      flops_exact(r.cfg, history, a.candidates, r.mode, InferenceMode::Regular);

  json j{{"format_version", kOutputFormatVersion},
         {"config", config_summary(r)},
         {"history", history},
         {"candidates", a.candidates},
         {"leading",
          {{"regular", leading.regular.leading_total},
           {"amortized", leading.amortized.leading_total},
           {"ratio", leading.ratio}}},
         {"exact", {{"regular", exact_regular.exact_total}}}};
  if (r.mode == FusionMode::AppendCross) {
    FlopReport exact_amortized =
        flops_exact(r.cfg, history, a.candidates, r.mode, InferenceMode::Amortized);
    j["exact"]["amortized"] = exact_amortized.exact_total;
    j["exact"]["ratio"] = static_cast<double>(exact_regular.exact_total) /
                          static_cast<double>(exact_amortized.exact_total);
  }
  print_json(j);
  return 0;
}

// --- equiv-check ------------------------------------------------------------

struct EquivArgs {
  ConfigArgs config;
  int history = 16;
  int valid = -1;
  int candidates = 8;
  double tolerance = 0.0;
  std::uint64_t seed = 1;
};

template <class S>
int run_equiv_typed(const EquivArgs& a, double tolerance) {
  ResolvedConfig r = resolve_config(a.config, std::max(a.history, 1));
  const int valid = a.valid < 0 ? a.history : a.valid;
  require(valid <= a.history, "equiv-check: --valid exceeds --history");
  Rng rng(a.seed);
  auto history = random_history<S>(a.history, valid, r.item_dim, rng);
  auto candidates = random_candidates<S>(a.candidates, r.item_dim, rng);
  auto weights = init_encoder_weights<S>(r.cfg, rng);
  EquivalenceReport rep =
      check_equivalence(history, candidates, weights, r.cfg, tolerance, r.mode);
  print_json(json{{"format_version", kOutputFormatVersion},
                  {"config", config_summary(r)},
                  {"precision", to_string(env_precision())},
                  {"history", a.history},
                  {"valid", valid},
                  {"candidates", a.candidates},
                  {"tolerance", rep.tolerance},
                  {"max_abs_diff", rep.max_abs_diff},
                  {"max_rel_diff", rep.max_rel_diff},
                  {"history_summary_rel_diff", rep.history_summary_rel_diff},
                  {"pass", rep.pass}});
  return rep.pass ? 0 : 1;
}

int run_equiv(const EquivArgs& a) {
  const Precision prec = env_precision();
  double tolerance = a.tolerance;
  if (tolerance <= 0.0) tolerance = prec == Precision::f64 ? 1e-10 : 1e-5;
  return prec == Precision::f64 ? run_equiv_typed<double>(a, tolerance)
                                : run_equiv_typed<float>(a, tolerance);
}

// --- bench ------------------------------------------------------------------

struct BenchArgs {
  ConfigArgs config;
  std::string inference = "regular";
  int history = 16;
  int candidates = 8;
  int passes = 5;
  int warmup = 1;
  std::uint64_t seed = 1;
  std::string csv_path;
};

int run_bench(const BenchArgs& a) {
  ResolvedConfig r = resolve_config(a.config, std::max(a.history, 1));
  BenchRequest req;
  req.config = r.cfg;
  req.fusion = r.mode;
  req.inference = parse_inference_mode(a.inference);
  req.history_len = a.history;
  req.num_candidates = a.candidates;
  req.passes = a.passes;
  req.warmup = a.warmup;
  req.precision = env_precision();
  req.seed = a.seed;
  BenchRecord rec = run_benchmark(req);

  CsvTable t;
  t.header = bench_csv_header();
  t.rows.push_back(bench_csv_row(rec));
  write_csv(std::cout, t);
  if (!a.csv_path.empty()) {
    const bool fresh = !std::filesystem::exists(a.csv_path);
    std::ofstream out(a.csv_path, std::ios::app);
    require(out.good(), "cannot open '" + a.csv_path + "' for appending");
    if (fresh) out << join_csv(t.header) << "\n";
    out << join_csv(t.rows[0]) << "\n";
  }
  return 0;
}

// --- gen-data ---------------------------------------------------------------

struct GenDataArgs {
  SyntheticSpec spec;
  std::string out;
};

int run_gen_data(const GenDataArgs& a) {
  require(!a.out.empty(), "gen-data: --out is required");
  SyntheticDataset data = generate_synthetic(a.spec);
  write_json_file(a.out, dataset_to_json(data));
  double mean = 0.0;
  for (const Example& ex : data.examples) mean += ex.rating;
  mean /= static_cast<double>(data.examples.size());
  print_json(json{{"format_version", kOutputFormatVersion},
                  {"path", a.out},
                  {"num_examples", static_cast<int>(data.examples.size())},
                  {"train_count", data.train_count()},
                  {"val_count", data.val_count()},
                  {"test_count", data.test_count()},
                  {"mean_rating", mean}});
  return 0;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data_path;
  std::string mode = "append-cross";
  std::uint64_t data_seed = 7;
  int key_dim = 0, ffwd_dim = 0, layers = 0, heads = 0;
  TrainConfig tc;
  std::string model_out;
  std::string metrics_out;
};

template <class S>
int run_train_typed(const TrainArgs& a) {
  SyntheticDataset data;
  if (!a.data_path.empty()) {
    data = dataset_from_json(read_json_file(a.data_path));
  } else {
    SyntheticSpec spec;
    spec.seed = a.data_seed;
    data = generate_synthetic(spec);
  }
  RatingModelConfig mc = toy_model_config(parse_fusion_mode(a.mode), data.spec);
  if (a.key_dim > 0) mc.encoder.key_dim = a.key_dim;
  if (a.ffwd_dim > 0) mc.encoder.ffwd_dim = a.ffwd_dim;
  if (a.layers > 0) mc.encoder.num_layers = a.layers;
  if (a.heads > 0) mc.encoder.num_heads = a.heads;

  TrainResult<S> result = train_model<S>(data, mc, a.tc);
  if (!a.model_out.empty()) write_json_file(a.model_out, model_to_json(result.model));
  if (!a.metrics_out.empty()) write_csv_file(a.metrics_out, metrics_to_csv(result.metrics));
  print_json(json{{"format_version", kOutputFormatVersion},
                  {"mode", a.mode},
                  {"precision", to_string(env_precision())},
                  {"encoder_param_count", param_count(mc.encoder)},
                  {"steps_run", result.steps_run},
                  {"baseline_val_mae", result.baseline_val_mae},
                  {"baseline_test_mae", result.baseline_test_mae},
                  {"final_val_mae", result.final_val_mae},
                  {"test_mae", result.test_mae}});
  return 0;
}

int run_train(const TrainArgs& a) {
  return env_precision() == Precision::f64 ? run_train_typed<double>(a)
                                           : run_train_typed<float>(a);
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string model_path;
  std::string data_path;
  std::string split = "test";
};

template <class S>
int run_eval_typed(const EvalArgs& a) {
  require(!a.model_path.empty() && !a.data_path.empty(), "eval: --model and --data are required");
  RatingModel<S> model = model_from_json<S>(read_json_file(a.model_path));
  SyntheticDataset data = dataset_from_json(read_json_file(a.data_path));
  int first = 0, count = 0;
  if (a.split == "train") {
    first = 0;
    count = data.train_count();
  } else if (a.split == "val") {
    first = data.val_begin();
    count = data.val_count();
  } else if (a.split == "test") {
    first = data.test_begin();
    count = data.test_count();
  } else {
    throw ContractError("eval: unknown split '" + a.split + "' (train, val, or test)");
  }
  const double mae = evaluate_mae(model, data, first, count);
  const double base = baseline_mae(data, first, count);
  print_json(json{{"format_version", kOutputFormatVersion},
                  {"split", a.split},
                  {"count", count},
                  {"mae", mae},
                  {"baseline_mae", base}});
  return 0;
}

int run_eval(const EvalArgs& a) {
  return env_precision() == Precision::f64 ? run_eval_typed<double>(a)
                                           : run_eval_typed<float>(a);
}

// --- attn-dump --------------------------------------------------------------

struct AttnArgs {
  ConfigArgs config;
  int history = 16;
  int valid = -1;
  int candidates = 1;
  int selected = 0;
  std::uint64_t seed = 1;
  std::string out;
};

template <class S>
int run_attn_typed(const AttnArgs& a) {
  ResolvedConfig r = resolve_config(a.config, std::max(a.history, 1));
  const int valid = a.valid < 0 ? a.history : a.valid;
  require(valid <= a.history, "attn-dump: --valid exceeds --history");
  Rng rng(a.seed);
  auto history = random_history<S>(a.history, valid, r.item_dim, rng);
  auto candidates = random_candidates<S>(a.candidates, r.item_dim, rng);
  auto weights = init_encoder_weights<S>(r.cfg, rng);
  auto rows = dump_attention(history, candidates, r.mode, weights, r.cfg, a.selected);
  CsvTable t = attention_dump_to_csv(rows);
  if (a.out.empty()) {
    write_csv(std::cout, t);
  } else {
    write_csv_file(a.out, t);
    print_json(json{{"format_version", kOutputFormatVersion},
                    {"path", a.out},
                    {"rows", static_cast<long long>(t.rows.size())}});
  }
  return 0;
}

int run_attn(const AttnArgs& a) {
  return env_precision() == Precision::f64 ? run_attn_typed<double>(a)
                                           : run_attn_typed<float>(a);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sequence fusion encoder: ranking inference, cost models, and training"};
  app.require_subcommand(1);

  ParamsArgs params_args;
  auto* params_cmd = app.add_subcommand("params", "parameter count of a configuration");
  add_config_options(params_cmd, params_args.config);
  params_cmd->add_flag("--list", params_args.list, "list named presets");

  MatchArgs match_args;
  auto* match_cmd =
      app.add_subcommand("match-params", "match (key_dim, ffwd_dim) to a reference budget");
  add_config_options(match_cmd, match_args.config);
  match_cmd->add_option("--target-mode", match_args.target_mode, "fusion mode to size")
      ->required();
  match_cmd->add_option("--target-dim", match_args.target_dim,
                        "per-item width of the target (defaults to the reference width)");
  match_cmd->add_option("--grid", match_args.grid, "search grid: product or tied");
  match_cmd->add_option("--lo", match_args.lo, "grid lower bound");
  match_cmd->add_option("--hi", match_args.hi, "grid upper bound");
  match_cmd->add_option("--step", match_args.step, "grid step");

  FlopsArgs flops_args;
  auto* flops_cmd = app.add_subcommand("flops", "leading-term and exact FLOP counts");
  add_config_options(flops_cmd, flops_args.config);
  flops_cmd->add_option("--history", flops_args.history, "history capacity n");
  flops_cmd->add_option("--candidates", flops_args.candidates, "candidates per request m");

  EquivArgs equiv_args;
  auto* equiv_cmd =
      app.add_subcommand("equiv-check", "compare per-candidate and packed inference outputs");
  add_config_options(equiv_cmd, equiv_args.config);
  equiv_cmd->add_option("--history", equiv_args.history, "history capacity n");
  equiv_cmd->add_option("--valid", equiv_args.valid, "valid history rows (default: all)");
  equiv_cmd->add_option("--candidates", equiv_args.candidates, "candidates per request m");
  equiv_cmd->add_option("--tolerance", equiv_args.tolerance,
                        "max relative difference (default 1e-5 f32, 1e-10 f64)");
  equiv_cmd->add_option("--seed", equiv_args.seed, "random seed");

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "time inference passes, CSV output");
  add_config_options(bench_cmd, bench_args.config);
  bench_cmd->add_option("--inference", bench_args.inference, "regular or amortized");
  bench_cmd->add_option("--history", bench_args.history, "history capacity n");
  bench_cmd->add_option("--candidates", bench_args.candidates, "candidates per request m");
  bench_cmd->add_option("--passes", bench_args.passes, "timed passes");
  bench_cmd->add_option("--warmup", bench_args.warmup, "untimed warmup passes");
  bench_cmd->add_option("--seed", bench_args.seed, "random seed");
  bench_cmd->add_option("--csv", bench_args.csv_path, "also append the record to this file");

  GenDataArgs gen_args;
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic interaction dataset");
  gen_cmd->add_option("--out", gen_args.out, "output JSON path")->required();
  gen_cmd->add_option("--items", gen_args.spec.num_items, "catalog size");
  gen_cmd->add_option("--users", gen_args.spec.num_users, "user count");
  gen_cmd->add_option("--item-dim", gen_args.spec.item_dim, "item embedding width");
  gen_cmd->add_option("--user-dim", gen_args.spec.user_dim, "user embedding width");
  gen_cmd->add_option("--capacity", gen_args.spec.history_capacity, "history capacity");
  gen_cmd->add_option("--examples", gen_args.spec.num_examples, "example count");
  gen_cmd->add_option("--window", gen_args.spec.teacher_window, "teacher recency window");
  gen_cmd->add_option("--latent-sd", gen_args.spec.latent_sd, "latent entry stddev");
  gen_cmd->add_option("--bias-sd", gen_args.spec.user_bias_sd, "user bias stddev");
  gen_cmd->add_option("--noise-sd", gen_args.spec.noise_sd, "rating noise stddev");
  gen_cmd->add_option("--seed", gen_args.spec.seed, "generator seed");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "fit the rating model on synthetic data");
  train_cmd->add_option("--data", train_args.data_path,
                        "dataset JSON (default: generate with --data-seed)");
  train_cmd->add_option("--data-seed", train_args.data_seed, "seed for the generated dataset");
  train_cmd->add_option("--mode", train_args.mode, "fusion mode");
  train_cmd->add_option("--key-dim", train_args.key_dim, "override encoder key_dim");
  train_cmd->add_option("--ffwd-dim", train_args.ffwd_dim, "override encoder ffwd_dim");
  train_cmd->add_option("--layers", train_args.layers, "override encoder layers");
  train_cmd->add_option("--heads", train_args.heads, "override encoder heads");
  train_cmd->add_option("--steps", train_args.tc.steps, "training steps");
  train_cmd->add_option("--batch", train_args.tc.batch_size, "batch size");
  train_cmd->add_option("--lr", train_args.tc.learning_rate, "Adam learning rate");
  train_cmd->add_option("--eval-every", train_args.tc.eval_every, "validation cadence");
  train_cmd->add_option("--early-stop-mae", train_args.tc.early_stop_mae,
                        "stop when val MAE reaches this (0 disables)");
  train_cmd->add_option("--seed", train_args.tc.seed, "training seed");
  train_cmd->add_option("--out", train_args.model_out, "write the trained model here");
  train_cmd->add_option("--metrics", train_args.metrics_out, "write step metrics CSV here");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "MAE of a trained model on a dataset split");
  eval_cmd->add_option("--model", eval_args.model_path, "model JSON")->required();
  eval_cmd->add_option("--data", eval_args.data_path, "dataset JSON")->required();
  eval_cmd->add_option("--split", eval_args.split, "train, val, or test");

  AttnArgs attn_args;
  auto* attn_cmd = app.add_subcommand("attn-dump", "attention probabilities as CSV");
  add_config_options(attn_cmd, attn_args.config);
  attn_cmd->add_option("--history", attn_args.history, "history capacity n");
  attn_cmd->add_option("--valid", attn_args.valid, "valid history rows (default: all)");
  attn_cmd->add_option("--candidates", attn_args.candidates, "candidates per request m");
  attn_cmd->add_option("--selected", attn_args.selected, "candidate whose pass is traced");
  attn_cmd->add_option("--seed", attn_args.seed, "random seed");
  attn_cmd->add_option("--out", attn_args.out, "CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (params_cmd->parsed()) return run_params(params_args);
    if (match_cmd->parsed()) return run_match(match_args);
    if (flops_cmd->parsed()) return run_flops(flops_args);
    if (equiv_cmd->parsed()) return run_equiv(equiv_args);
    if (bench_cmd->parsed()) return run_bench(bench_args);
    if (gen_cmd->parsed()) return run_gen_data(gen_args);
    if (train_cmd->parsed()) return run_train(train_args);
    if (eval_cmd->parsed()) return run_eval(eval_args);
    if (attn_cmd->parsed()) return run_attn(attn_args);
    std::cerr << "usage error: no subcommand\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
