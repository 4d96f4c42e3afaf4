// Command-line interface: derive, train, generate, evaluate, privacy and
// synth-fixtures subcommands over JSONL corpora.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "origami/checkpoint.hpp"
#include "origami/errors.hpp"
#include "origami/eval/metrics.hpp"
#include "origami/fixtures.hpp"
#include "origami/json_io.hpp"
#include "origami/sampler.hpp"
#include "origami/schema.hpp"
#include "origami/tokenizer.hpp"
#include "origami/train.hpp"

namespace fs = std::filesystem;
using origami::Json;

namespace {

// Config file values act as defaults; explicit flags override them.
Json load_config_arg(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      return origami::load_json(argv[i + 1]);
    }
  }
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg.rfind("--config=", 0) == 0) {
      return origami::load_json(arg.substr(9));
    }
  }
  return Json::object();
}

template <class T>
T cfgv(const Json& cfg, const std::string& section, const std::string& key,
       T fallback) {
  if (cfg.contains(section) && cfg[section].contains(key)) {
    return cfg[section][key].get<T>();
  }
  if (cfg.contains(key)) return cfg[key].get<T>();
  return fallback;
}

struct ArtifactPaths {
  fs::path dir;
  fs::path vocab() const { return dir / "vocab.json"; }
  fs::path scalers() const { return dir / "scalers.json"; }
  fs::path schema() const { return dir / "schema.json"; }
  fs::path schema_scaled() const { return dir / "schema_scaled.json"; }
};

struct ModelFlags {
  int d_model = 64;
  int layers = 8;
  int heads = 4;
  int d_ff = 512;
  int components = 5;
  int max_seq_len = 512;
  double dropout = 0.1;
  std::string position = "kvpe";  // or "sequential"

  void attach(CLI::App* cmd, const Json& cfg) {
    d_model = cfgv(cfg, "model", "d_model", d_model);
    layers = cfgv(cfg, "model", "layers", layers);
    heads = cfgv(cfg, "model", "heads", heads);
    d_ff = cfgv(cfg, "model", "d_ff", d_ff);
    components = cfgv(cfg, "model", "components", components);
    max_seq_len = cfgv(cfg, "model", "max_seq_len", max_seq_len);
    dropout = cfgv(cfg, "model", "dropout", dropout);
    position = cfgv<std::string>(cfg, "model", "position", position);
    cmd->add_option("--d-model", d_model, "embedding width");
    cmd->add_option("--layers", layers, "transformer layers");
    cmd->add_option("--heads", heads, "attention heads");
    cmd->add_option("--d-ff", d_ff, "feed-forward width");
    cmd->add_option("--components", components, "MoG mixture components");
    cmd->add_option("--max-seq-len", max_seq_len, "maximum token stream length");
    cmd->add_option("--dropout", dropout, "dropout rate");
    cmd->add_option("--position", position,
                    "position encoding: kvpe or sequential");
  }

  origami::ModelConfig to_config(int vocab_size, int i_max) const {
    origami::ModelConfig mc;
    mc.d_model = d_model;
    mc.n_layers = layers;
    mc.n_heads = heads;
    mc.d_ff = d_ff;
    mc.n_components = components;
    mc.i_max = i_max;
    mc.vocab_size = vocab_size;
    mc.max_seq_len = max_seq_len;
    mc.dropout = dropout;
    if (position != "kvpe" && position != "sequential") {
      throw origami::ConfigError("--position must be kvpe or sequential");
    }
    mc.kvpe = position == "kvpe";
    mc.check();
    return mc;
  }
};

struct TrainFlags {
  int epochs = 50;
  int batch_size = 128;
  double lr = 3e-4;
  std::uint64_t seed = 0;
  bool no_shuffle = false;
  int workers = 2;
  double valid_fraction = 0.0;
  std::string valid_path;
  std::string loss_csv;

  void attach(CLI::App* cmd, const Json& cfg) {
    epochs = cfgv(cfg, "train", "epochs", epochs);
    batch_size = cfgv(cfg, "train", "batch_size", batch_size);
    lr = cfgv(cfg, "train", "lr", lr);
    seed = cfgv<std::uint64_t>(cfg, "train", "seed", seed);
    no_shuffle = cfgv(cfg, "train", "no_shuffle", no_shuffle);
    workers = cfgv(cfg, "train", "workers", workers);
    valid_fraction = cfgv(cfg, "train", "valid_fraction", valid_fraction);
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--batch-size", batch_size, "records per batch");
    cmd->add_option("--lr", lr, "peak learning rate (cosine decay)");
    cmd->add_option("--seed", seed, "random seed")->required();
    cmd->add_flag("--no-shuffle", no_shuffle,
                  "disable key-order shuffling augmentation");
    cmd->add_option("--workers", workers, "worker threads");
    cmd->add_option("--valid", valid_path, "validation corpus (JSONL)");
    cmd->add_option("--valid-fraction", valid_fraction,
                    "carve a validation split from the training corpus");
    cmd->add_option("--loss-csv", loss_csv, "per-epoch loss log path");
  }
};

void write_artifact(const fs::path& path, Json doc, const Json& run_config) {
  doc["x-origami-config"] = run_config;
  origami::save_json(path.string(), doc);
}

Json strip_config_echo(Json doc) {
  doc.erase("x-origami-config");
  return doc;
}

struct DerivedArtifacts {
  origami::VocabSpec vocab;
  origami::NumericScalers scalers;
  origami::DerivedSchema schema;
  origami::DerivedSchema schema_scaled;
  origami::TokenizerOptions opts;
};

DerivedArtifacts load_artifacts(const ArtifactPaths& paths) {
  DerivedArtifacts a;
  a.vocab = origami::VocabSpec::from_json(
      strip_config_echo(origami::load_json(paths.vocab().string())));
  a.scalers = origami::NumericScalers::from_json(
      strip_config_echo(origami::load_json(paths.scalers().string())));
  a.schema = origami::schema_from_json(
      strip_config_echo(origami::load_json(paths.schema().string())));
  a.schema_scaled = origami::schema_from_json(
      strip_config_echo(origami::load_json(paths.schema_scaled().string())));
  a.opts.tau = a.schema.tau;
  return a;
}

// Deterministic train/valid carve-out.
void split_valid(const std::vector<Json>& corpus, double fraction,
                 std::uint64_t seed, std::vector<Json>& train,
                 std::vector<Json>& valid) {
  std::vector<std::size_t> idx(corpus.size());
  std::iota(idx.begin(), idx.end(), 0);
  origami::Rng rng = origami::make_rng({seed, 0x76616cULL});
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[origami::uniform_index(rng, i)]);
  }
  std::size_t n_valid = static_cast<std::size_t>(fraction * corpus.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    (i < n_valid ? valid : train).push_back(corpus[idx[i]]);
  }
}

int cmd_derive(const std::string& train_path, const std::string& out_dir,
               std::uint64_t tau, int i_max, const Json& run_config) {
  std::vector<Json> corpus = origami::load_jsonl(train_path);
  if (corpus.empty()) throw origami::Error("derive: empty corpus");
  origami::TokenizerOptions opts;
  opts.tau = tau;
  opts.i_max = static_cast<std::uint32_t>(i_max);

  origami::VocabSpec vocab = origami::build_vocab(corpus, opts);
  origami::NumericScalers scalers = origami::fit_scalers(corpus, opts);
  origami::DerivedSchema schema = origami::derive_schema(corpus, tau);
  origami::DerivedSchema scaled =
      origami::transform_schema_scaled(schema, scalers);

  ArtifactPaths paths{fs::path(out_dir)};
  fs::create_directories(paths.dir);
  write_artifact(paths.vocab(), vocab.to_json(), run_config);
  write_artifact(paths.scalers(), scalers.to_json(), run_config);
  write_artifact(paths.schema(), origami::schema_to_json(schema), run_config);
  write_artifact(paths.schema_scaled(), origami::schema_to_json(scaled),
                 run_config);

  origami::SchemaMaskTable table = origami::compile_mask_table(scaled, vocab);
  Json summary;
  summary["keys"] = vocab.key_count();
  summary["values"] = vocab.value_count();
  summary["vocab_size"] = vocab.size();
  summary["scaled_paths"] = scalers.by_path.size();
  summary["schema_paths"] = schema.entries.size();
  summary["mask_rows"] = table.row_count();
  std::cout << summary.dump(2) << std::endl;
  return 0;
}

int cmd_train(const std::string& train_path, const std::string& artifacts_dir,
              const std::string& out_path, const ModelFlags& model,
              const TrainFlags& flags, const Json& run_config) {
  std::vector<Json> corpus = origami::load_jsonl(train_path);
  DerivedArtifacts a = load_artifacts(ArtifactPaths{fs::path(artifacts_dir)});

  std::vector<Json> train, valid;
  if (!flags.valid_path.empty()) {
    train = corpus;
    valid = origami::load_jsonl(flags.valid_path);
  } else if (flags.valid_fraction > 0.0) {
    split_valid(corpus, flags.valid_fraction, flags.seed, train, valid);
  } else {
    train = corpus;
  }

  origami::ModelConfig mc =
      model.to_config(a.vocab.size(), static_cast<int>(a.opts.i_max));
  origami::SchemaMaskTable table =
      origami::compile_mask_table(a.schema_scaled, a.vocab);

  origami::TrainSettings ts;
  ts.epochs = flags.epochs;
  ts.batch_size = flags.batch_size;
  ts.lr = flags.lr;
  ts.seed = flags.seed;
  ts.shuffle_keys = !flags.no_shuffle;
  ts.workers = flags.workers;
  ts.loss_csv = flags.loss_csv;

  origami::TrainResult result = origami::train_model(
      train, valid, a.vocab, a.scalers, table, mc, a.opts, ts);

  origami::Checkpoint ckpt;
  ckpt.config = mc;
  ckpt.vocab = a.vocab;
  ckpt.scalers = a.scalers;
  ckpt.schema_original = a.schema;
  ckpt.schema_scaled = a.schema_scaled;
  ckpt.params = std::move(result.params);
  ckpt.max_train_stream_len = result.max_stream_len;
  ckpt.run_config = run_config;
  origami::save_checkpoint(out_path, ckpt);

  Json summary;
  summary["checkpoint"] = out_path;
  summary["epochs"] = flags.epochs;
  summary["final_train_loss"] = result.history.back().train_loss;
  summary["final_valid_loss"] = result.history.back().valid_loss;
  summary["max_stream_len"] = result.max_stream_len;
  std::cout << summary.dump(2) << std::endl;
  return 0;
}

int cmd_generate(const std::string& ckpt_path, std::size_t count,
                 std::uint64_t seed, double temperature, std::size_t max_tokens,
                 int workers, const std::string& out_path,
                 const std::string& stats_path, const Json& run_config) {
  origami::Checkpoint ckpt = origami::load_checkpoint(ckpt_path);
  origami::SchemaMaskTable table =
      origami::compile_mask_table(ckpt.schema_scaled, ckpt.vocab);

  origami::GenerationSettings gs;
  gs.count = count;
  gs.seed = seed;
  gs.temperature = temperature;
  gs.max_tokens = max_tokens;
  gs.workers = workers;
  origami::GenerationStats stats;
  std::vector<Json> records = origami::generate(ckpt, table, gs, &stats);

  if (out_path.empty() || out_path == "-") {
    for (const Json& rec : records) std::cout << rec.dump() << '\n';
  } else {
    origami::save_jsonl(out_path, records);
  }
  Json stats_doc = stats.to_json();
  stats_doc["x-origami-config"] = run_config;
  if (!stats_path.empty()) {
    origami::save_json(stats_path, stats_doc);
  } else if (!out_path.empty() && out_path != "-") {
    origami::save_json(out_path + ".stats.json", stats_doc);
  } else {
    std::cerr << stats_doc.dump() << std::endl;
  }
  return 0;
}

int cmd_evaluate(const std::string& real_path,
                 const std::vector<std::string>& synth_paths,
                 const std::string& target, std::uint64_t seed,
                 bool skip_privacy, const std::string& out_path,
                 const Json& run_config) {
  std::vector<Json> real = origami::load_jsonl(real_path);
  origami::eval::EvaluateOptions opts;
  opts.target = target;
  opts.seed = seed;
  opts.with_utility = !target.empty();
  opts.with_privacy = !skip_privacy;

  std::vector<Json> runs;
  std::vector<origami::eval::MetricReport> reports;
  for (const std::string& path : synth_paths) {
    std::vector<Json> synth = origami::load_jsonl(path);
    reports.push_back(origami::eval::evaluate(real, synth, opts));
    runs.push_back(reports.back().to_json());
  }

  Json out;
  if (reports.size() == 1) {
    out = runs[0];
  } else {
    // replicate averaging: mean of per-replicate scores, population std
    auto collect = [&](auto&& get) {
      double mean = 0;
      for (const auto& r : reports) mean += get(r);
      mean /= reports.size();
      double var = 0;
      for (const auto& r : reports) {
        var += (get(r) - mean) * (get(r) - mean);
      }
      var /= reports.size();
      return Json{{"mean", mean}, {"std", std::sqrt(var)}};
    };
    using R = const origami::eval::MetricReport&;
    out["replicates"] = reports.size();
    out["fidelity"] = Json{
        {"overall", collect([](R r) { return r.fidelity_overall; })},
        {"shapes", collect([](R r) { return r.fidelity_shapes; })},
        {"trends", collect([](R r) { return r.fidelity_trends; })}};
    out["utility"] = Json{
        {"score", collect([](R r) { return r.utility.score; })},
        {"tstr_f1", collect([](R r) { return r.utility.tstr_f1; })}};
    out["detection"] = Json{
        {"score", collect([](R r) { return r.detection.score; })},
        {"auc", collect([](R r) { return r.detection.auc; })}};
    if (!skip_privacy) {
      out["privacy"] = Json{
          {"score",
           collect([](R r) { return r.privacy ? r.privacy->score : 1.0; })},
          {"dcr", collect([](R r) {
             return r.privacy ? r.privacy->dcr_percent : 50.0;
           })}};
    }
    out["runs"] = runs;
  }
  out["x-origami-config"] = run_config;
  if (out_path.empty() || out_path == "-") {
    std::cout << out.dump(2) << std::endl;
  } else {
    origami::save_json(out_path, out);
    std::cout << out["fidelity"].dump() << std::endl;
  }
  return 0;
}

int cmd_privacy(const std::string& train_path, const std::string& out_path,
                const ModelFlags& model, const TrainFlags& flags,
                std::uint64_t tau, int i_max, bool bypass_copy,
                const Json& run_config) {
  std::vector<Json> corpus = origami::load_jsonl(train_path);
  if (corpus.size() < 200) {
    throw origami::Error("privacy: corpus too small for a 50/50 split (" +
                         std::to_string(corpus.size()) + " < 200 records)");
  }
  // 50/50 split
  std::vector<std::size_t> idx(corpus.size());
  std::iota(idx.begin(), idx.end(), 0);
  origami::Rng rng = origami::make_rng({flags.seed, 0x353035ULL});
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[origami::uniform_index(rng, i)]);
  }
  std::size_t half = corpus.size() / 2;
  std::vector<Json> half_a, half_b;
  for (std::size_t i = 0; i < half; ++i) half_a.push_back(corpus[idx[i]]);
  for (std::size_t i = half; i < 2 * half; ++i) half_b.push_back(corpus[idx[i]]);

  std::vector<Json> synth;
  if (bypass_copy) {
    synth = half_a;  // memorization extreme, for testing the metric
  } else {
    origami::TokenizerOptions opts;
    opts.tau = tau;
    opts.i_max = static_cast<std::uint32_t>(i_max);
    origami::VocabSpec vocab = origami::build_vocab(half_a, opts);
    origami::NumericScalers scalers = origami::fit_scalers(half_a, opts);
    origami::DerivedSchema schema = origami::derive_schema(half_a, tau);
    origami::DerivedSchema scaled =
        origami::transform_schema_scaled(schema, scalers);
    origami::SchemaMaskTable table = origami::compile_mask_table(scaled, vocab);
    origami::ModelConfig mc =
        model.to_config(vocab.size(), static_cast<int>(opts.i_max));

    origami::TrainSettings ts;
    ts.epochs = flags.epochs;
    ts.batch_size = flags.batch_size;
    ts.lr = flags.lr;
    ts.seed = flags.seed;
    ts.shuffle_keys = !flags.no_shuffle;
    ts.workers = flags.workers;
    ts.loss_csv = flags.loss_csv;
    origami::TrainResult result = origami::train_model(
        half_a, {}, vocab, scalers, table, mc, opts, ts);

    origami::Checkpoint ckpt;
    ckpt.config = mc;
    ckpt.vocab = vocab;
    ckpt.scalers = scalers;
    ckpt.schema_original = schema;
    ckpt.schema_scaled = scaled;
    ckpt.params = std::move(result.params);
    ckpt.max_train_stream_len = result.max_stream_len;
    ckpt.run_config = run_config;

    origami::GenerationSettings gs;
    gs.count = half_a.size();
    gs.seed = flags.seed + 1;
    gs.workers = flags.workers;
    synth = origami::generate(ckpt, table, gs);
  }

  origami::eval::PrivacyResult p = origami::eval::privacy_dcr(synth, half_a,
                                                              half_b);
  Json out;
  out["dcr"] = p.dcr_percent;
  out["score"] = p.score;
  out["exact_matches_train"] = p.exact_matches_train;
  out["exact_matches_test"] = p.exact_matches_test;
  out["half_size"] = half;
  out["bypass_copy"] = bypass_copy;
  out["x-origami-config"] = run_config;
  if (out_path.empty() || out_path == "-") {
    std::cout << out.dump(2) << std::endl;
  } else {
    origami::save_json(out_path, out);
    std::cout << out.dump(2) << std::endl;
  }
  return 0;
}

int cmd_synth_fixtures(const std::string& which, std::size_t n,
                       std::uint64_t seed, const std::string& out_path) {
  std::vector<Json> corpus;
  if (which == "movies") {
    corpus = origami::fixtures::movies_corpus();
  } else if (which == "pathological") {
    corpus = origami::fixtures::pathological_corpus(n, seed);
  } else if (which == "adultlike") {
    corpus = origami::fixtures::adultlike_corpus(n, seed);
  } else {
    throw origami::ConfigError(
        "unknown fixture \"" + which +
        "\" (expected movies, pathological or adultlike)");
  }
  if (out_path.empty() || out_path == "-") {
    for (const Json& rec : corpus) std::cout << rec.dump() << '\n';
  } else {
    origami::save_jsonl(out_path, corpus);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    Json cfg = load_config_arg(argc, argv);

    CLI::App app{"origami: autoregressive synthesis of JSON records"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file with defaults");

    // ---- derive ----
    auto* derive = app.add_subcommand(
        "derive", "derive vocabulary, scalers and schema from a corpus");
    std::string d_train, d_out = "artifacts";
    std::uint64_t d_tau = cfgv<std::uint64_t>(cfg, "derive", "tau", 64);
    int d_imax = cfgv(cfg, "derive", "i_max", 256);
    derive->add_option("--train", d_train, "training corpus (JSONL)")
        ->required();
    derive->add_option("--out", d_out, "artifact directory");
    derive->add_option("--tau", d_tau, "distinct-value threshold");
    derive->add_option("--i-max", d_imax, "array position capacity");

    // ---- train ----
    auto* train = app.add_subcommand("train", "train a model on a corpus");
    std::string t_train, t_artifacts = "artifacts", t_out = "model.ckpt";
    ModelFlags t_model;
    TrainFlags t_flags;
    train->add_option("--train", t_train, "training corpus (JSONL)")
        ->required();
    train->add_option("--artifacts", t_artifacts,
                      "directory produced by derive");
    train->add_option("--out", t_out, "checkpoint output path");
    t_model.attach(train, cfg);
    t_flags.attach(train, cfg);

    // ---- generate ----
    auto* gen = app.add_subcommand("generate", "sample records from a model");
    std::string g_ckpt, g_out, g_stats;
    std::size_t g_n = cfgv<std::size_t>(cfg, "generate", "n", 1);
    std::uint64_t g_seed = 0;
    double g_temp = cfgv(cfg, "generate", "temperature", 1.0);
    std::size_t g_max_tokens = cfgv<std::size_t>(cfg, "generate", "max_tokens", 0);
    int g_workers = cfgv(cfg, "generate", "workers", 2);
    gen->add_option("--checkpoint", g_ckpt, "model checkpoint")->required();
    gen->add_option("--n", g_n, "records to generate");
    gen->add_option("--seed", g_seed, "random seed")->required();
    gen->add_option("--temperature", g_temp, "sampling temperature");
    gen->add_option("--max-tokens", g_max_tokens,
                    "token cap per record (0: 2x longest training stream)");
    gen->add_option("--workers", g_workers, "worker threads");
    gen->add_option("--out", g_out, "output JSONL (default stdout)");
    gen->add_option("--stats", g_stats, "stats sidecar path");

    // ---- evaluate ----
    auto* ev = app.add_subcommand(
        "evaluate", "fidelity, utility, detection and privacy report");
    std::string e_real, e_target, e_out;
    std::vector<std::string> e_synth;
    std::uint64_t e_seed = 0;
    bool e_no_privacy = false;
    ev->add_option("--real", e_real, "real corpus (JSONL)")->required();
    ev->add_option("--synth", e_synth,
                   "synthetic corpus (repeat for replicates)")
        ->required();
    ev->add_option("--target", e_target, "utility target column (flat path)");
    ev->add_option("--seed", e_seed, "random seed")->required();
    ev->add_flag("--no-privacy", e_no_privacy, "skip the split-based DCR");
    ev->add_option("--out", e_out, "report output path (default stdout)");

    // ---- privacy ----
    auto* pv = app.add_subcommand(
        "privacy", "50/50 split, retrain, generate and measure DCR");
    std::string p_train, p_out;
    ModelFlags p_model;
    TrainFlags p_flags;
    std::uint64_t p_tau = cfgv<std::uint64_t>(cfg, "derive", "tau", 64);
    int p_imax = cfgv(cfg, "derive", "i_max", 256);
    bool p_bypass = false;
    pv->add_option("--train", p_train, "training corpus (JSONL)")->required();
    pv->add_option("--out", p_out, "report output path (default stdout)");
    pv->add_option("--tau", p_tau, "distinct-value threshold");
    pv->add_option("--i-max", p_imax, "array position capacity");
    pv->add_flag("--bypass-copy", p_bypass,
                 "skip training and use a copy of the train half");
    p_model.attach(pv, cfg);
    p_flags.attach(pv, cfg);

    // ---- synth-fixtures ----
    auto* fx = app.add_subcommand("synth-fixtures",
                                  "emit built-in benchmark corpora");
    std::string f_which, f_out;
    std::size_t f_n = 5000;
    std::uint64_t f_seed = 0;
    fx->add_option("--which", f_which,
                   "fixture name: movies, pathological, adultlike")
        ->required();
    fx->add_option("--n", f_n, "record count (ignored for movies)");
    fx->add_option("--seed", f_seed, "random seed");
    fx->add_option("--out", f_out, "output JSONL (default stdout)");

    app.parse(argc, argv);

    Json run_config;
    run_config["argv"] = Json::array();
    for (int i = 0; i < argc; ++i) run_config["argv"].push_back(argv[i]);
    if (!cfg.empty()) run_config["config"] = cfg;

    if (derive->parsed()) {
      return cmd_derive(d_train, d_out, d_tau, d_imax, run_config);
    }
    if (train->parsed()) {
      return cmd_train(t_train, t_artifacts, t_out, t_model, t_flags,
                       run_config);
    }
    if (gen->parsed()) {
      return cmd_generate(g_ckpt, g_n, g_seed, g_temp, g_max_tokens, g_workers,
                          g_out, g_stats, run_config);
    }
    if (ev->parsed()) {
      return cmd_evaluate(e_real, e_synth, e_target, e_seed, e_no_privacy,
                          e_out, run_config);
    }
    if (pv->parsed()) {
      return cmd_privacy(p_train, p_out, p_model, p_flags, p_tau, p_imax,
                         p_bypass, run_config);
    }
    if (fx->parsed()) {
      return cmd_synth_fixtures(f_which, f_n, f_seed, f_out);
    }
    return 1;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;  // --help
    Json err;
    err["error"] = Json{{"type", "usage"}, {"message", e.what()}};
    std::cerr << err.dump() << std::endl;
    return e.get_exit_code() == 0 ? 1 : e.get_exit_code();
  } catch (const origami::Error& e) {
    Json err;
    err["error"] = Json{{"type", "origami"}, {"message", e.what()}};
    std::cerr << err.dump() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    Json err;
    err["error"] = Json{{"type", "internal"}, {"message", e.what()}};
    std::cerr << err.dump() << std::endl;
    return 1;
  }
}
