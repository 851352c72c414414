// dlfccm: data generation, both training stages, evaluation and analysis exports.
//
// Exit codes: 0 success, 1 usage or validation error, 2 runtime or data error.

#include "dlfccm/config.hpp"
#include "dlfccm/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace dlfccm;

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

/// Raised for problems the user can fix by changing the invocation.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool force = false;

  bool ljp = false, match = false;
  std::optional<int> epochs;
  std::string ablation;
  std::string checkpoint;
  std::string split = "test";
  bool embeddings = false, weights = false;
  std::size_t per_class = 200;
};

RunConfig resolve(const Options& o) {
  RunConfig cfg;
  if (!o.config_path.empty()) cfg = load_config(o.config_path);
  if (o.seed) cfg.reseed(*o.seed);
  if (!o.ablation.empty()) cfg.ablation = parse_ablation(o.ablation);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

fs::path ljp_path(const RunConfig& c) { return c.paths.data_dir / "ljp.jsonl"; }
fs::path match_path(const RunConfig& c) { return c.paths.data_dir / "match.jsonl"; }
fs::path stage1_path(const RunConfig& c) { return c.paths.checkpoint_dir / "stage1.ckpt"; }
fs::path stage2_path(const RunConfig& c) {
  return c.paths.checkpoint_dir / ("stage2_" + std::string(ablation_name(c.ablation)) + ".ckpt");
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << j.dump(2) << '\n';
}

nlohmann::json manifest(const std::string& command, const RunConfig& cfg, const Options& o) {
  nlohmann::json m{{"command", command}, {"config", to_json(cfg)}, {"seed", cfg.seed}};
  if (!o.config_path.empty()) m["config_file"] = o.config_path;
  return m;
}

std::vector<corpus::LjpRecord> read_ljp(const RunConfig& cfg) {
  const auto p = ljp_path(cfg);
  if (!fs::exists(p)) throw std::runtime_error(p.string() + ": LJP dataset not found (run `gen --ljp` first)");
  return corpus::load_ljp(p);
}

std::vector<corpus::MatchRecord> read_match(const RunConfig& cfg) {
  const auto p = match_path(cfg);
  if (!fs::exists(p)) throw std::runtime_error(p.string() + ": matching dataset not found (run `gen --match` first)");
  return corpus::load_match(p);
}

const std::vector<corpus::MatchExample>& pick_split(const MatchSplits& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "valid") return s.valid;
  if (name == "test") return s.test;
  return s.all;
}

std::string pct(double v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
  return buf;
}

int cmd_gen(const Options& o) {
  const RunConfig cfg = resolve(o);
  if (!o.ljp && !o.match) throw UsageError("gen: pass --ljp, --match or both");
  std::vector<fs::path> outputs;
  if (o.ljp) outputs.insert(outputs.end(), {ljp_path(cfg), cfg.paths.data_dir / "ljp.manifest.json"});
  if (o.match) outputs.insert(outputs.end(), {match_path(cfg), cfg.paths.data_dir / "match.manifest.json"});
  if (!o.force)
    for (const auto& p : outputs)
      if (fs::exists(p)) throw UsageError(p.string() + " exists; use --force to overwrite");

  fs::create_directories(cfg.paths.data_dir);
  if (o.ljp) {
    const auto recs = corpus::gen_ljp_dataset(cfg.corpus);
    corpus::save_ljp(ljp_path(cfg), recs);
    auto m = manifest("gen --ljp", cfg, o);
    m["records"] = recs.size();
    write_json(cfg.paths.data_dir / "ljp.manifest.json", m);
    std::cout << "wrote " << recs.size() << " cases to " << ljp_path(cfg).string() << '\n';
  }
  if (o.match) {
    const auto recs = corpus::gen_match_dataset(cfg.corpus, cfg.n_pairs);
    corpus::save_match(match_path(cfg), recs);
    auto m = manifest("gen --match", cfg, o);
    m["records"] = recs.size();
    write_json(cfg.paths.data_dir / "match.manifest.json", m);
    std::cout << "wrote " << recs.size() << " pairs to " << match_path(cfg).string() << '\n';
  }
  return 0;
}

int cmd_pretrain(const Options& o) {
  RunConfig cfg = resolve(o);
  if (o.epochs) cfg.pretrain.epochs = *o.epochs;
  const auto recs = read_ljp(cfg);
  const LjpSplits data = prepare_ljp(recs, cfg);
  std::cout << "pretraining on " << data.train.size() << " cases (vocab " << data.vocab.size() << ")\n";
  Stage1Run run = run_stage1(cfg, data, [](const EpochMetrics& m) {
    std::printf("epoch %d  loss %.4f  acc %.3f %.3f %.3f\n", m.epoch, m.loss, m.accuracy[0], m.accuracy[1],
                m.accuracy[2]);
    std::fflush(stdout);
  });
  std::printf("test accuracy  article %.3f  charge %.3f  term %.3f\n", run.test_accuracy[0], run.test_accuracy[1],
              run.test_accuracy[2]);

  fs::create_directories(cfg.paths.checkpoint_dir);
  write_checkpoint(stage1_path(cfg), stage1_checkpoint(run.model, data.vocab, cfg));
  write_pretrain_metrics(cfg.paths.checkpoint_dir / "stage1_metrics.tsv", run.result, run.test_accuracy);
  auto m = manifest("pretrain", cfg, o);
  m["test_accuracy"] = run.test_accuracy;
  write_json(cfg.paths.checkpoint_dir / "stage1.manifest.json", m);
  std::cout << "wrote " << stage1_path(cfg).string() << '\n';
  return 0;
}

int cmd_train(const Options& o) {
  RunConfig cfg = resolve(o);
  if (o.epochs) cfg.stage2.epochs = *o.epochs;
  const auto recs = read_match(cfg);
  std::optional<Checkpoint> stage1;
  corpus::Vocab vocab;
  if (cfg.ablation == Ablation::no_pretrain) {
    vocab = match_vocab(recs, cfg);
  } else {
    const fs::path p = o.checkpoint.empty() ? stage1_path(cfg) : fs::path(o.checkpoint);
    if (!fs::exists(p)) throw std::runtime_error(p.string() + ": stage-1 checkpoint not found (run `pretrain` first)");
    stage1 = read_checkpoint(p);
    vocab = vocab_from_header(stage1->header);
  }
  const MatchSplits data = prepare_match(recs, vocab, cfg);
  std::cout << "training " << ablation_name(cfg.ablation) << " on " << data.train.size() << " pairs\n";
  Stage2Run run = run_stage2(cfg, data, stage1 ? &*stage1 : nullptr, [](const Stage2Epoch& e) {
    std::printf("epoch %d  loss %.4f  mat %.4f  ex %.4f  sh %.4f  disc %.4f  w %.3f %.3f %.3f %.3f\n", e.epoch, e.loss,
                e.mat, e.ex, e.sh, e.disc, e.w_mean[0], e.w_mean[1], e.w_mean[2], e.w_mean[3]);
    std::fflush(stdout);
  });

  fs::create_directories(cfg.paths.checkpoint_dir);
  fs::create_directories(cfg.paths.export_dir);
  const std::string tag = ablation_name(cfg.ablation);
  write_checkpoint(stage2_path(cfg), stage2_checkpoint(run.model, vocab, cfg));
  write_stage2_history(cfg.paths.export_dir / ("history_" + tag + ".tsv"), run.history);
  write_json(cfg.paths.checkpoint_dir / ("stage2_" + tag + ".manifest.json"), manifest("train", cfg, o));
  std::cout << "wrote " << stage2_path(cfg).string() << '\n';
  return 0;
}

LoadedStage2 open_stage2(const RunConfig& cfg, const Options& o) {
  const fs::path p = o.checkpoint.empty() ? stage2_path(cfg) : fs::path(o.checkpoint);
  if (!fs::exists(p)) throw std::runtime_error(p.string() + ": stage-2 checkpoint not found (run `train` first)");
  return load_stage2(read_checkpoint(p));
}

int cmd_eval(const Options& o) {
  const RunConfig cfg = resolve(o);
  LoadedStage2 m = open_stage2(cfg, o);
  const auto recs = read_match(cfg);
  const MatchSplits data = prepare_match(recs, m.vocab, cfg);
  const auto& split = pick_split(data, o.split);
  const EvalMetrics r = evaluate<float>(m.model, split, m.fixed_weights);
  const DisentanglementReport d = disentanglement_report<float>(m.model, split);
  const std::string tag = ablation_name(m.ablation);
  std::cout << "ablation " << tag << "  split " << o.split << " (" << split.size() << " pairs)\n";
  std::cout << "Acc " << pct(r.accuracy) << "  MP " << pct(r.macro_precision) << "  MR " << pct(r.macro_recall)
            << "  MF1 " << pct(r.macro_f1) << '\n';
  std::printf("discriminator: exclusive accuracy %.3f  shared entropy %.3f ln3\n", d.exclusive_accuracy,
              d.shared_entropy / std::log(3.0));

  fs::create_directories(cfg.paths.export_dir);
  auto j = manifest("eval", cfg, o);
  j["ablation"] = tag;
  j["split"] = o.split;
  j["metrics"] = {{"accuracy", r.accuracy},
                  {"macro_precision", r.macro_precision},
                  {"macro_recall", r.macro_recall},
                  {"macro_f1", r.macro_f1}};
  j["discriminator"] = {{"exclusive_accuracy", d.exclusive_accuracy},
                        {"shared_entropy", d.shared_entropy},
                        {"final_shared_entropy", d.final_shared_entropy}};
  write_json(cfg.paths.export_dir / ("metrics_" + tag + "_" + o.split + ".json"), j);
  return 0;
}

int cmd_analyze(const Options& o) {
  const RunConfig cfg = resolve(o);
  if (!o.embeddings && !o.weights) throw UsageError("analyze: pass --embeddings, --weights or both");
  LoadedStage2 m = open_stage2(cfg, o);
  const auto recs = read_match(cfg);
  const MatchSplits data = prepare_match(recs, m.vocab, cfg);
  const std::string tag = ablation_name(m.ablation);
  fs::create_directories(cfg.paths.export_dir);
  if (o.embeddings) {
    const auto pairs = select_analysis_pairs(data.all, o.per_class, derive_seed(cfg.seed, "analysis"));
    const fs::path p = cfg.paths.export_dir / ("embeddings_" + tag + ".tsv");
    const std::size_t rows = export_factor_embeddings<float>(m.model, pairs, p);
    std::cout << "wrote " << rows << " factor rows for " << 2 * pairs.size() << " cases to " << p.string() << '\n';
  }
  if (o.weights) {
    const fs::path rec = cfg.paths.export_dir / ("weights_" + tag + ".tsv");
    const fs::path sum = cfg.paths.export_dir / ("weights_" + tag + "_summary.tsv");
    const auto s = export_fusion_weights<float>(m.model, pick_split(data, o.split), m.fixed_weights, rec, sum);
    std::cout << "head        min     q1      median  q3      max\n";
    for (int k = 0; k < kNumHeads; ++k) {
      const auto& f = s.per_head[static_cast<std::size_t>(k)];
      std::printf("%-10s  %.4f  %.4f  %.4f  %.4f  %.4f\n", kFactorNames[k], f.min, f.q1, f.median, f.q3, f.max);
    }
    std::cout << "wrote " << rec.string() << " and " << sum.string() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Judgment-driven legal case matching with disentangled legal factors"};
  app.require_subcommand(1);
  app.add_option("--config", o.config_path, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "root seed; component seeds are derived from it");
  app.add_flag("--force", o.force, "overwrite existing generated data");

  auto* gen = app.add_subcommand("gen", "generate synthetic datasets");
  gen->add_flag("--ljp", o.ljp, "judgment-prediction cases");
  gen->add_flag("--match", o.match, "labelled case pairs");

  auto* pretrain = app.add_subcommand("pretrain", "stage 1: judgment prediction pre-training");
  pretrain->add_option("--epochs", o.epochs, "override [pretrain] epochs")->check(CLI::PositiveNumber);

  const std::vector<std::string> ablations{"none", "no_ex", "no_sh", "no_fusion", "no_pretrain"};
  auto* train = app.add_subcommand("train", "stage 2: matching with factor de-redundancy and fusion");
  train->add_option("--ablation", o.ablation, "none|no_ex|no_sh|no_fusion|no_pretrain")
      ->check(CLI::IsMember(ablations));
  train->add_option("--epochs", o.epochs, "override [stage2] epochs")->check(CLI::PositiveNumber);
  train->add_option("--checkpoint", o.checkpoint, "stage-1 checkpoint (default <checkpoint_dir>/stage1.ckpt)");

  const std::vector<std::string> splits{"train", "valid", "test", "all"};
  auto* eval = app.add_subcommand("eval", "evaluate a stage-2 checkpoint");
  eval->add_option("--ablation", o.ablation, "selects <checkpoint_dir>/stage2_<ablation>.ckpt")
      ->check(CLI::IsMember(ablations));
  eval->add_option("--checkpoint", o.checkpoint, "explicit stage-2 checkpoint");
  eval->add_option("--split", o.split, "train|valid|test|all")->check(CLI::IsMember(splits));

  auto* analyze = app.add_subcommand("analyze", "export factor embeddings or fusion weights");
  analyze->add_option("--ablation", o.ablation, "selects <checkpoint_dir>/stage2_<ablation>.ckpt")
      ->check(CLI::IsMember(ablations));
  analyze->add_option("--checkpoint", o.checkpoint, "explicit stage-2 checkpoint");
  analyze->add_flag("--embeddings", o.embeddings, "factor vectors for matched and mismatched pairs");
  analyze->add_flag("--weights", o.weights, "per-pair fusion weights and per-head five-number summaries");
  analyze->add_option("--per-class", o.per_class, "pairs per class for --embeddings")->check(CLI::PositiveNumber);
  analyze->add_option("--split", o.split, "pairs for --weights: train|valid|test|all")->check(CLI::IsMember(splits));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  try {
    if (*gen) return cmd_gen(o);
    if (*pretrain) return cmd_pretrain(o);
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*analyze) return cmd_analyze(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const corpus::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kRuntime;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
