#pragma once

#include "dlfccm/checkpoint.hpp"
#include "dlfccm/config.hpp"
#include "dlfccm/corpus.hpp"
#include "dlfccm/judgment.hpp"
#include "dlfccm/pipeline.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace dlfccm {

/// Tokenized LJP cases split 0.8/0.1/0.1 with the run's split seed.
struct LjpSplits {
  corpus::Vocab vocab;
  std::vector<corpus::LjpExample> train, valid, test;
};

/// Vocabulary comes from every case text in `records`.
LjpSplits prepare_ljp(std::span<const corpus::LjpRecord> records, const RunConfig& cfg);

struct MatchSplits {
  std::vector<corpus::MatchExample> all, train, valid, test;
};

MatchSplits prepare_match(std::span<const corpus::MatchRecord> records, const corpus::Vocab& vocab,
                          const RunConfig& cfg);

/// Vocabulary over both texts of every pair; used when there is no stage-1 checkpoint.
corpus::Vocab match_vocab(std::span<const corpus::MatchRecord> records, const RunConfig& cfg);

struct Stage1Run {
  JudgmentModel<float> model;
  PretrainResult result;
  std::array<double, 3> test_accuracy{};
};

Stage1Run run_stage1(const RunConfig& cfg, const LjpSplits& data,
                     const std::function<void(const EpochMetrics&)>& on_epoch = {});

/// Header keys: kind, vocab, encoder, classes, config. Tensors: encoder and judgment heads.
Checkpoint stage1_checkpoint(JudgmentModel<float>& model, const corpus::Vocab& vocab, const RunConfig& cfg);

struct Stage2Run {
  MatchModel<float> model;
  Stage2History history;
};

/// Trains the matching network for `cfg.ablation`. Unless the ablation is
/// no_pretrain, the encoder starts from the tensors in `stage1`.
Stage2Run run_stage2(const RunConfig& cfg, const MatchSplits& data, const Checkpoint* stage1,
                     const std::function<void(const Stage2Epoch&)>& on_epoch = {});

/// Header keys: kind, ablation, vocab, encoder, stage2, config. Tensors use the
/// encoder., lfdr., match.head. and disc. prefixes.
Checkpoint stage2_checkpoint(MatchModel<float>& model, const corpus::Vocab& vocab, const RunConfig& cfg);

struct LoadedStage2 {
  MatchModel<float> model;
  corpus::Vocab vocab;
  Ablation ablation = Ablation::none;
  bool fixed_weights = false;
};

LoadedStage2 load_stage2(const Checkpoint& ckpt);

corpus::Vocab vocab_from_header(const nlohmann::json& header);

void write_pretrain_metrics(const std::filesystem::path& path, const PretrainResult& r,
                            const std::array<double, 3>& test_accuracy);
void write_stage2_history(const std::filesystem::path& path, const Stage2History& h);

}  // namespace dlfccm
