#pragma once

#include "dlfccm/core.hpp"
#include "dlfccm/corpus.hpp"
#include "dlfccm/encoder.hpp"
#include "dlfccm/fusion.hpp"
#include "dlfccm/judgment.hpp"
#include "dlfccm/lfdr.hpp"
#include "dlfccm/metrics.hpp"
#include "dlfccm/optim.hpp"

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace dlfccm {

enum class Ablation { none, no_ex, no_sh, no_fusion, no_pretrain };

inline const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::no_ex: return "no_ex";
    case Ablation::no_sh: return "no_sh";
    case Ablation::no_fusion: return "no_fusion";
    case Ablation::no_pretrain: return "no_pretrain";
  }
  return "none";
}

inline Ablation parse_ablation(const std::string& s) {
  for (auto a : {Ablation::none, Ablation::no_ex, Ablation::no_sh, Ablation::no_fusion, Ablation::no_pretrain})
    if (s == ablation_name(a)) return a;
  throw std::invalid_argument("unknown ablation '" + s + "' (expected none|no_ex|no_sh|no_fusion|no_pretrain)");
}

struct AblationFlags {
  bool no_ex = false;
  bool no_sh = false;
  bool no_fusion = false;
  bool no_pretrain = false;

  static AblationFlags from(Ablation a) {
    AblationFlags f;
    f.no_ex = a == Ablation::no_ex;
    f.no_sh = a == Ablation::no_sh;
    f.no_fusion = a == Ablation::no_fusion;
    f.no_pretrain = a == Ablation::no_pretrain;
    return f;
  }
};

struct Stage2Config {
  int epochs = 5;
  int batch_size = 4;
  double learning_rate = 1e-3;
  double lambda1 = 0.05;
  // At 0.05 the entropy term loses to a discriminator that saturates within an
  // epoch and the shared factors drift back to confident regions.
  double lambda2 = 1.0;
  AblationFlags flags;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1 || batch_size < 1 || !(learning_rate > 0.0))
      throw std::invalid_argument("Stage2Config: epochs, batch_size and learning_rate must be positive");
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw std::invalid_argument("Stage2Config: lambdas must be >= 0");
  }

  double effective_lambda1() const { return flags.no_ex ? 0.0 : lambda1; }
  double effective_lambda2() const { return flags.no_sh ? 0.0 : lambda2; }
};

/// L = L_mat + (lambda1 * L_ex + lambda2 * L_sh); the factor terms are summed first.
template <typename Scalar>
Scalar total_loss(Scalar l_mat, Scalar l_ex, Scalar l_sh, const Stage2Config& cfg) {
  return l_mat + (static_cast<Scalar>(cfg.effective_lambda1()) * l_ex + static_cast<Scalar>(cfg.effective_lambda2()) * l_sh);
}

/// Stage-2 matching network: factor extractor, de-redundancy maps, matching
/// heads, and the discriminator (trained separately).
template <typename Scalar>
struct MatchModel {
  Encoder<Scalar> encoder;
  LfdrParams<Scalar> lfdr;
  MatchHeads<Scalar> heads;
  Discriminator<Scalar> disc;

  MatchModel(const EncoderConfig& cfg, std::uint64_t seed)
      : encoder(cfg), lfdr(cfg.d_model, seed), heads(cfg.d_model, seed), disc(cfg.d_model, seed) {}

  ParamList<Scalar> matching_params() {
    ParamList<Scalar> out;
    encoder.collect(out);
    lfdr.collect(out);
    heads.collect(out);
    return out;
  }

  ParamList<Scalar> discriminator_params() {
    ParamList<Scalar> out;
    disc.collect(out);
    return out;
  }

  ParamList<Scalar> all_params() {
    ParamList<Scalar> out = matching_params();
    disc.collect(out);
    return out;
  }
};

/// Everything computed for one pair on the way to the fused logits.
template <typename Scalar>
struct PairForward {
  typename Encoder<Scalar>::Cache src_cache, tgt_cache;
  FactorSet<Scalar> src_factors, tgt_factors;
  DisentangledFactors<Scalar> src, tgt;
  FusionResult<Scalar> fusion;
};

template <typename Scalar>
void pair_forward(const MatchModel<Scalar>& model, const corpus::MatchExample& ex, bool fixed_weights,
                  const ForwardContext& ctx, PairForward<Scalar>& out) {
  out.src_factors = model.encoder.forward(ex.source.tokens, out.src_cache, ctx);
  out.tgt_factors = model.encoder.forward(ex.target.tokens, out.tgt_cache, ctx);
  out.src = disentangle(out.src_factors, model.lfdr);
  out.tgt = disentangle(out.tgt_factors, model.lfdr);
  out.fusion = fusion_forward(out.src, out.tgt, model.heads, fixed_weights);
}

/// Per-pair loss components.
struct PairLosses {
  double mat = 0, ex = 0, sh = 0, total = 0;
};

/// Matching-network loss and gradients for one pair with D frozen. Loss terms
/// are scaled by `weight`; L_ex and L_sh average over source and target.
template <typename Scalar>
PairLosses pair_backward(MatchModel<Scalar>& model, const PairForward<Scalar>& fw, int label, const Stage2Config& cfg,
                         Scalar weight) {
  const Scalar l1 = static_cast<Scalar>(cfg.effective_lambda1());
  const Scalar l2 = static_cast<Scalar>(cfg.effective_lambda2());
  DisentangledFactors<Scalar> dsrc, dtgt;
  PairLosses out;
  out.mat = match_loss_backward(model.heads, fw.src, fw.tgt, fw.fusion, label, weight, dsrc, dtgt);
  const Scalar half = weight / Scalar(2);
  out.ex = (loss_ex_backward(model.disc, fw.src, half * l1, dsrc) + loss_ex_backward(model.disc, fw.tgt, half * l1, dtgt)) / 2;
  out.sh = (loss_sh_backward(model.disc, fw.src, half * l2, dsrc) + loss_sh_backward(model.disc, fw.tgt, half * l2, dtgt)) / 2;
  out.total = total_loss(out.mat, out.ex, out.sh, cfg);
  const FactorSet<Scalar> dfs = disentangle_backward(model.lfdr, fw.src_factors, fw.src, dsrc);
  const FactorSet<Scalar> dft = disentangle_backward(model.lfdr, fw.tgt_factors, fw.tgt, dtgt);
  model.encoder.backward(fw.src_cache, dfs);
  model.encoder.backward(fw.tgt_cache, dft);
  return out;
}

struct Stage2Epoch {
  int epoch = 0;
  double loss = 0, mat = 0, ex = 0, sh = 0, disc = 0;
  std::array<double, kNumHeads> w_mean{}, w_min{}, w_max{};
};

struct Stage2History {
  std::vector<Stage2Epoch> epochs;
  std::vector<double> batch_losses;  // total loss per matching-network step
};

/// Alternating training: per batch, one discriminator step on the exclusive
/// factors, then one matching-network step on the combined objective.
template <typename Scalar>
Stage2History train_stage2(MatchModel<Scalar>& model, std::span<const corpus::MatchExample> data,
                           const Stage2Config& cfg, const std::function<void(const Stage2Epoch&)>& on_epoch = {}) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train_stage2: empty dataset");
  for (const auto& ex : data)
    if (ex.label < 0 || ex.label >= kNumRelevance) throw std::invalid_argument("train_stage2: label out of range");

  Adam<Scalar> net_opt(model.matching_params(), AdamOptions{cfg.learning_rate});
  Adam<Scalar> disc_opt(model.discriminator_params(), AdamOptions{cfg.learning_rate});
  Rng shuffle_rng(derive_seed(cfg.seed, "stage2.shuffle"));
  Rng dropout_rng(derive_seed(cfg.seed, "stage2.dropout"));
  const ForwardContext ctx{true, model.encoder.config().dropout_rate, &dropout_rng};

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  Stage2History hist;
  std::vector<PairForward<Scalar>> fw(static_cast<std::size_t>(cfg.batch_size));
  std::vector<FactorSet<Scalar>> factor_sets;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    Stage2Epoch rec;
    rec.epoch = epoch;
    rec.w_min.fill(std::numeric_limits<double>::infinity());
    rec.w_max.fill(-std::numeric_limits<double>::infinity());
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t n = end - start;
      factor_sets.clear();
      for (std::size_t b = 0; b < n; ++b) {
        pair_forward(model, data[order[start + b]], cfg.flags.no_fusion, ctx, fw[b]);
        factor_sets.push_back(fw[b].src_factors);
        factor_sets.push_back(fw[b].tgt_factors);
      }
      rec.disc += static_cast<double>(update_discriminator<Scalar>(factor_sets, model.lfdr, model.disc, disc_opt));

      net_opt.zero_grad();
      const Scalar w = Scalar(1) / static_cast<Scalar>(n);
      double batch_total = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const PairLosses l = pair_backward(model, fw[b], data[order[start + b]].label, cfg, w);
        batch_total += l.total;
        rec.mat += l.mat;
        rec.ex += l.ex;
        rec.sh += l.sh;
        for (int k = 0; k < kNumHeads; ++k) {
          const double wk = static_cast<double>(fw[b].fusion.w[k]);
          rec.w_mean[static_cast<std::size_t>(k)] += wk;
          rec.w_min[static_cast<std::size_t>(k)] = std::min(rec.w_min[static_cast<std::size_t>(k)], wk);
          rec.w_max[static_cast<std::size_t>(k)] = std::max(rec.w_max[static_cast<std::size_t>(k)], wk);
        }
      }
      net_opt.step();
      hist.batch_losses.push_back(batch_total / static_cast<double>(n));
      rec.loss += batch_total;
      ++n_batches;
    }
    const auto total = static_cast<double>(data.size());
    rec.loss /= total;
    rec.mat /= total;
    rec.ex /= total;
    rec.sh /= total;
    rec.disc /= static_cast<double>(n_batches);
    for (auto& m : rec.w_mean) m /= total;
    hist.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return hist;
}

/// Eval-mode predictions; ties in the fused logits go to the lowest class.
template <typename Scalar>
std::vector<int> predict(const MatchModel<Scalar>& model, std::span<const corpus::MatchExample> data, bool fixed_weights) {
  std::vector<int> preds;
  preds.reserve(data.size());
  PairForward<Scalar> fw;
  const ForwardContext ctx{};
  for (const auto& ex : data) {
    pair_forward(model, ex, fixed_weights, ctx, fw);
    preds.push_back(argmax(fw.fusion.z_fused));
  }
  return preds;
}

template <typename Scalar>
EvalMetrics evaluate(const MatchModel<Scalar>& model, std::span<const corpus::MatchExample> data, bool fixed_weights) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  const auto preds = predict(model, data, fixed_weights);
  std::vector<int> labels;
  labels.reserve(data.size());
  for (const auto& ex : data) labels.push_back(ex.label);
  return compute_metrics(labels, preds, kNumRelevance);
}

/// Discriminator behaviour on held-out pairs: accuracy on exclusive factors and
/// mean output entropy over the four shared factors of every case.
struct DisentanglementReport {
  double exclusive_accuracy = 0;
  double shared_entropy = 0;
  double final_shared_entropy = 0;
};

template <typename Scalar>
DisentanglementReport disentanglement_report(const MatchModel<Scalar>& model, std::span<const corpus::MatchExample> data) {
  if (data.empty()) throw std::invalid_argument("disentanglement_report: empty dataset");
  std::vector<std::array<Vector<Scalar>, kNumFactors>> ex;
  double h_all = 0, h_final = 0;
  typename Encoder<Scalar>::Cache cache;
  const ForwardContext ctx{};
  for (const auto& pair : data) {
    for (const auto* c : {&pair.source, &pair.target}) {
      const auto df = disentangle(model.encoder.forward(c->tokens, cache, ctx), model.lfdr);
      ex.push_back(df.ex);
      const double hf = static_cast<double>(entropy<Scalar>(model.disc.probs(df.sh)));
      h_final += hf;
      h_all += hf;
      for (const auto& m : df.sh_mid) h_all += static_cast<double>(entropy<Scalar>(model.disc.probs(m)));
    }
  }
  DisentanglementReport r;
  r.exclusive_accuracy = discriminator_accuracy<Scalar>(model.disc, ex);
  r.shared_entropy = h_all / static_cast<double>(ex.size() * 4);
  r.final_shared_entropy = h_final / static_cast<double>(ex.size());
  return r;
}

inline constexpr const char* kFactorNames[kNumHeads] = {"shared", "ex_article", "ex_charge", "ex_term"};

/// One row per (case, factor): pair_id, case_id, role, label, factor, then the
/// vector as space-separated decimals with 9 significant digits.
struct EmbeddingRow {
  std::string pair_id, case_id, role;
  int label = 0;
  std::string factor;
  std::vector<float> values;
};

template <typename Scalar>
std::size_t export_factor_embeddings(const MatchModel<Scalar>& model, std::span<const corpus::MatchExample> pairs,
                                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << "# pair_id\tcase_id\trole\tlabel\tfactor\tvalues\n";
  typename Encoder<Scalar>::Cache cache;
  const ForwardContext ctx{};
  std::size_t rows = 0;
  char buf[32];
  for (const auto& p : pairs) {
    for (const auto* role : {"source", "target"}) {
      const auto& c = std::string_view(role) == "source" ? p.source : p.target;
      const auto df = disentangle(model.encoder.forward(c.tokens, cache, ctx), model.lfdr);
      for (int k = 0; k < kNumHeads; ++k) {
        out << p.id << '\t' << c.id << '\t' << role << '\t' << p.label << '\t' << kFactorNames[k] << '\t';
        const auto& v = head_input(df, k);
        for (Eigen::Index i = 0; i < v.size(); ++i) {
          std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(static_cast<float>(v[i])));
          if (i > 0) out << ' ';
          out << buf;
        }
        out << '\n';
        ++rows;
      }
    }
  }
  if (!out) throw std::runtime_error(path.string() + ": write failed");
  return rows;
}

std::vector<EmbeddingRow> read_factor_embeddings(const std::filesystem::path& path);

struct WeightRecord {
  std::string pair_id;
  int label = 0;
  int prediction = 0;
  std::array<double, kNumHeads> entropy{};
  std::array<double, kNumHeads> weight{};
};

struct WeightSummary {
  std::vector<WeightRecord> records;
  std::array<FiveNumber, kNumHeads> per_head{};
};

template <typename Scalar>
WeightSummary fusion_weights(const MatchModel<Scalar>& model, std::span<const corpus::MatchExample> pairs,
                             bool fixed_weights) {
  if (pairs.empty()) throw std::invalid_argument("export_fusion_weights: empty input");
  WeightSummary s;
  PairForward<Scalar> fw;
  const ForwardContext ctx{};
  std::array<std::vector<double>, kNumHeads> cols;
  for (const auto& p : pairs) {
    pair_forward(model, p, fixed_weights, ctx, fw);
    WeightRecord r;
    r.pair_id = p.id;
    r.label = p.label;
    r.prediction = argmax(fw.fusion.z_fused);
    for (int k = 0; k < kNumHeads; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      r.entropy[ku] = static_cast<double>(fw.fusion.entropy[ku]);
      r.weight[ku] = static_cast<double>(fw.fusion.w[k]);
      cols[ku].push_back(r.weight[ku]);
    }
    s.records.push_back(std::move(r));
  }
  for (int k = 0; k < kNumHeads; ++k) s.per_head[static_cast<std::size_t>(k)] = five_number_summary(cols[static_cast<std::size_t>(k)]);
  return s;
}

/// Writes `records_path` (pair_id, H_0..H_3, w_0..w_3, argmax, label) and
/// `summary_path` (head, min, q1, median, q3, max).
void write_fusion_weights(const WeightSummary& s, const std::filesystem::path& records_path,
                          const std::filesystem::path& summary_path);

template <typename Scalar>
WeightSummary export_fusion_weights(const MatchModel<Scalar>& model, std::span<const corpus::MatchExample> pairs,
                                    bool fixed_weights, const std::filesystem::path& records_path,
                                    const std::filesystem::path& summary_path) {
  WeightSummary s = fusion_weights(model, pairs, fixed_weights);
  write_fusion_weights(s, records_path, summary_path);
  return s;
}

/// Up to `per_class` pairs with label 3 and with label 0, seeded selection, matched first.
std::vector<corpus::MatchExample> select_analysis_pairs(std::span<const corpus::MatchExample> pairs,
                                                        std::size_t per_class, std::uint64_t seed);

}  // namespace dlfccm
