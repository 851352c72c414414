#include "dlfccm/experiment.hpp"

#include <cstdio>
#include <fstream>

namespace dlfccm {

namespace {

template <typename T>
void split_into(std::span<const T> all, std::uint64_t seed, std::vector<T>& train, std::vector<T>& valid,
                std::vector<T>& test) {
  const corpus::Split s = corpus::split_indices(all.size(), seed);
  train = corpus::select<T>(all, s.train);
  valid = corpus::select<T>(all, s.valid);
  test = corpus::select<T>(all, s.test);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

LjpSplits prepare_ljp(std::span<const corpus::LjpRecord> records, const RunConfig& cfg) {
  if (records.empty()) throw std::invalid_argument("LJP dataset is empty");
  corpus::validate_labels(records, cfg.corpus.classes());
  std::vector<std::string> texts;
  texts.reserve(records.size());
  for (const auto& r : records) texts.push_back(r.text);
  LjpSplits out;
  out.vocab = corpus::build_vocab(texts, static_cast<std::size_t>(cfg.encoder.vocab_size));
  const auto all = corpus::to_examples(records, out.vocab, static_cast<std::size_t>(cfg.encoder.max_len));
  split_into<corpus::LjpExample>(all, cfg.split_seed(), out.train, out.valid, out.test);
  return out;
}

corpus::Vocab match_vocab(std::span<const corpus::MatchRecord> records, const RunConfig& cfg) {
  std::vector<std::string> texts;
  for (const auto& r : records) {
    texts.push_back(r.source_text);
    texts.push_back(r.target_text);
  }
  return corpus::build_vocab(texts, static_cast<std::size_t>(cfg.encoder.vocab_size));
}

MatchSplits prepare_match(std::span<const corpus::MatchRecord> records, const corpus::Vocab& vocab,
                          const RunConfig& cfg) {
  if (records.empty()) throw std::invalid_argument("matching dataset is empty");
  MatchSplits out;
  out.all = corpus::to_examples(records, vocab, static_cast<std::size_t>(cfg.encoder.max_len));
  split_into<corpus::MatchExample>(out.all, derive_seed(cfg.split_seed(), "match"), out.train, out.valid, out.test);
  return out;
}

Stage1Run run_stage1(const RunConfig& cfg, const LjpSplits& data,
                     const std::function<void(const EpochMetrics&)>& on_epoch) {
  Stage1Run run{JudgmentModel<float>(cfg.encoder, cfg.corpus.classes()), {}, {}};
  run.result = run_pretraining<float>(run.model, data.train, cfg.pretrain, on_epoch);
  run.test_accuracy = judgment_accuracy<float>(run.model, data.test);
  return run;
}

Checkpoint stage1_checkpoint(JudgmentModel<float>& model, const corpus::Vocab& vocab, const RunConfig& cfg) {
  Checkpoint ck;
  const auto classes = model.heads.classes();
  ck.header = {{"kind", "stage1"},
               {"vocab", vocab.tokens()},
               {"encoder", to_json(model.encoder.config())},
               {"classes", {classes[0], classes[1], classes[2]}},
               {"config", to_json(cfg)}};
  store_params(ck, model.params());
  return ck;
}

Stage2Run run_stage2(const RunConfig& cfg, const MatchSplits& data, const Checkpoint* stage1,
                     const std::function<void(const Stage2Epoch&)>& on_epoch) {
  const Stage2Config s2 = cfg.stage2_config();
  Stage2Run run{MatchModel<float>(cfg.encoder, cfg.match_model_seed()), {}};
  if (!s2.flags.no_pretrain) {
    if (stage1 == nullptr) throw std::invalid_argument("a stage-1 checkpoint is required unless ablation is no_pretrain");
    ParamList<float> enc;
    run.model.encoder.collect(enc);
    load_params(*stage1, enc);
  }
  run.history = train_stage2<float>(run.model, data.train, s2, on_epoch);
  return run;
}

Checkpoint stage2_checkpoint(MatchModel<float>& model, const corpus::Vocab& vocab, const RunConfig& cfg) {
  Checkpoint ck;
  ck.header = {{"kind", "stage2"},
               {"ablation", ablation_name(cfg.ablation)},
               {"vocab", vocab.tokens()},
               {"encoder", to_json(model.encoder.config())},
               {"stage2", to_json(cfg.stage2_config())},
               {"config", to_json(cfg)}};
  store_params(ck, model.all_params());
  return ck;
}

corpus::Vocab vocab_from_header(const nlohmann::json& header) {
  if (!header.contains("vocab")) throw CheckpointError("checkpoint header has no vocabulary");
  return corpus::Vocab::from_tokens(header.at("vocab").get<std::vector<std::string>>());
}

LoadedStage2 load_stage2(const Checkpoint& ckpt) {
  if (ckpt.header.value("kind", std::string()) != "stage2")
    throw CheckpointError("not a stage-2 checkpoint (kind '" + ckpt.header.value("kind", std::string()) + "')");
  const EncoderConfig enc = encoder_config_from_json(ckpt.header.at("encoder"));
  LoadedStage2 out{MatchModel<float>(enc, 0), vocab_from_header(ckpt.header),
                   parse_ablation(ckpt.header.at("ablation").get<std::string>()), false};
  out.fixed_weights = out.ablation == Ablation::no_fusion;
  load_params(ckpt, out.model.all_params());
  return out;
}

void write_pretrain_metrics(const std::filesystem::path& path, const PretrainResult& r,
                            const std::array<double, 3>& test_accuracy) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << "# epoch\tloss\tacc_article\tacc_charge\tacc_term\n";
  for (const auto& e : r.epochs)
    out << e.epoch << '\t' << fmt(e.loss) << '\t' << fmt(e.accuracy[0]) << '\t' << fmt(e.accuracy[1]) << '\t'
        << fmt(e.accuracy[2]) << '\n';
  out << "# test\t\t" << fmt(test_accuracy[0]) << '\t' << fmt(test_accuracy[1]) << '\t' << fmt(test_accuracy[2])
      << '\n';
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

void write_stage2_history(const std::filesystem::path& path, const Stage2History& h) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << "# epoch\tloss\tmat\tex\tsh\tdisc";
  for (const char* stat : {"mean", "min", "max"})
    for (int k = 0; k < kNumHeads; ++k) out << "\tw" << k << '_' << stat;
  out << '\n';
  for (const auto& e : h.epochs) {
    out << e.epoch;
    for (double v : {e.loss, e.mat, e.ex, e.sh, e.disc}) out << '\t' << fmt(v);
    for (const auto* arr : {&e.w_mean, &e.w_min, &e.w_max})
      for (double v : *arr) out << '\t' << fmt(v);
    out << '\n';
  }
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace dlfccm
