#pragma once

#include "dlfccm/core.hpp"
#include "dlfccm/corpus.hpp"
#include "dlfccm/encoder.hpp"
#include "dlfccm/nn.hpp"
#include "dlfccm/optim.hpp"

#include <array>
#include <functional>
#include <span>
#include <vector>

namespace dlfccm {

template <typename Scalar>
using JudgmentProbs = std::array<Vector<Scalar>, kNumFactors>;

/// One affine + softmax classifier per subtask; head k reads only factor k.
template <typename Scalar>
struct JudgmentHeads {
  std::array<Affine<Scalar>, kNumFactors> heads;

  JudgmentHeads(int d_model, const corpus::ClassCounts& classes, std::uint64_t seed) {
    for (int k = 0; k < kNumFactors; ++k) {
      heads[static_cast<std::size_t>(k)] = Affine<Scalar>("judgment.head." + std::to_string(k), d_model, classes[k]);
      Rng rng(derive_seed(seed, "judgment.head." + std::to_string(k)));
      heads[static_cast<std::size_t>(k)].init(rng);
    }
  }

  corpus::ClassCounts classes() const {
    return {static_cast<int>(heads[0].out_dim()), static_cast<int>(heads[1].out_dim()),
            static_cast<int>(heads[2].out_dim())};
  }

  void collect(ParamList<Scalar>& out) {
    for (auto& h : heads) h.collect(out);
  }
};

template <typename Scalar>
JudgmentProbs<Scalar> predict_judgments(const FactorSet<Scalar>& fs, const JudgmentHeads<Scalar>& heads) {
  JudgmentProbs<Scalar> p;
  for (int k = 0; k < kNumFactors; ++k)
    p[static_cast<std::size_t>(k)] = softmax<Scalar>(heads.heads[static_cast<std::size_t>(k)].forward_vec(fs[k]));
  return p;
}

/// Mean over the three subtasks of -log p_k[y_k].
template <typename Scalar>
Scalar pretrain_loss(const JudgmentProbs<Scalar>& probs, const corpus::Judgment& labels) {
  Scalar total = 0;
  for (int k = 0; k < kNumFactors; ++k)
    total += cross_entropy<Scalar>(probs[static_cast<std::size_t>(k)], labels[static_cast<std::size_t>(k)], nullptr);
  return total / Scalar(kNumFactors);
}

/// Batch loss: mean of per-example losses.
template <typename Scalar>
Scalar pretrain_loss(std::span<const JudgmentProbs<Scalar>> probs, std::span<const corpus::Judgment> labels) {
  if (probs.size() != labels.size() || probs.empty()) throw std::invalid_argument("pretrain_loss: size mismatch");
  Scalar total = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) total += pretrain_loss<Scalar>(probs[i], labels[i]);
  return total / static_cast<Scalar>(probs.size());
}

/// Forward + backward through the heads for one example. Head gradients are
/// accumulated (scaled by `weight`) and dL/df_k is returned in `dfactors`.
template <typename Scalar>
Scalar judgment_loss_backward(JudgmentHeads<Scalar>& heads, const FactorSet<Scalar>& fs,
                              const corpus::Judgment& labels, Scalar weight, FactorSet<Scalar>& dfactors,
                              JudgmentProbs<Scalar>* probs_out = nullptr) {
  Scalar total = 0;
  for (int k = 0; k < kNumFactors; ++k) {
    auto& head = heads.heads[static_cast<std::size_t>(k)];
    const Vector<Scalar> p = softmax<Scalar>(head.forward_vec(fs[k]));
    Vector<Scalar> dz;
    total += cross_entropy<Scalar>(p, labels[static_cast<std::size_t>(k)], &dz);
    dz *= weight / Scalar(kNumFactors);
    dfactors[k] = head.backward_vec(fs[k], dz);
    if (probs_out != nullptr) (*probs_out)[static_cast<std::size_t>(k)] = p;
  }
  return total / Scalar(kNumFactors);
}

struct PretrainConfig {
  int epochs = 10;
  int batch_size = 8;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1 || batch_size < 1 || !(learning_rate > 0.0))
      throw std::invalid_argument("PretrainConfig: epochs, batch_size and learning_rate must be positive");
  }
};

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  std::array<double, 3> accuracy{};  // article, charge, term
};

struct PretrainResult {
  std::vector<EpochMetrics> epochs;
  std::vector<double> batch_losses;  // every optimizer step, in order
};

/// Encoder plus judgment heads: the stage-1 model.
template <typename Scalar>
struct JudgmentModel {
  Encoder<Scalar> encoder;
  JudgmentHeads<Scalar> heads;

  JudgmentModel(const EncoderConfig& cfg, const corpus::ClassCounts& classes)
      : encoder(cfg), heads(cfg.d_model, classes, cfg.seed) {}

  ParamList<Scalar> params() {
    ParamList<Scalar> out;
    encoder.collect(out);
    heads.collect(out);
    return out;
  }
};

template <typename T>
int argmax(const Eigen::MatrixBase<T>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<int>(best);
}

/// Mini-batch Adam on the mean judgment loss over seeded shuffles.
template <typename Scalar>
PretrainResult run_pretraining(JudgmentModel<Scalar>& model, std::span<const corpus::LjpExample> data,
                               const PretrainConfig& cfg,
                               const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("run_pretraining: empty dataset");
  const auto classes = model.heads.classes();
  for (const auto& ex : data)
    for (int k = 0; k < kNumFactors; ++k)
      if (ex.labels[static_cast<std::size_t>(k)] < 0 || ex.labels[static_cast<std::size_t>(k)] >= classes[k])
        throw std::invalid_argument("run_pretraining: case " + ex.case_.id + " has label " +
                                    std::to_string(ex.labels[static_cast<std::size_t>(k)]) +
                                    " out of range for subtask " + std::to_string(k));

  Adam<Scalar> opt(model.params(), AdamOptions{cfg.learning_rate});
  Rng shuffle_rng(derive_seed(cfg.seed, "pretrain.shuffle"));
  Rng dropout_rng(derive_seed(cfg.seed, "pretrain.dropout"));
  ForwardContext ctx{true, model.encoder.config().dropout_rate, &dropout_rng};

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  PretrainResult result;
  typename Encoder<Scalar>::Cache cache;
  FactorSet<Scalar> dfs;
  JudgmentProbs<Scalar> probs;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::array<std::size_t, 3> correct{};
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const Scalar w = Scalar(1) / static_cast<Scalar>(end - start);
      opt.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const auto& ex = data[order[b]];
        const FactorSet<Scalar> fs = model.encoder.forward(ex.case_.tokens, cache, ctx);
        batch_loss += judgment_loss_backward(model.heads, fs, ex.labels, w, dfs, &probs);
        model.encoder.backward(cache, dfs);
        for (int k = 0; k < kNumFactors; ++k)
          correct[static_cast<std::size_t>(k)] += argmax(probs[static_cast<std::size_t>(k)]) == ex.labels[static_cast<std::size_t>(k)];
      }
      opt.step();
      result.batch_losses.push_back(batch_loss / static_cast<double>(end - start));
      epoch_loss += batch_loss;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.loss = epoch_loss / static_cast<double>(data.size());
    for (int k = 0; k < 3; ++k) m.accuracy[static_cast<std::size_t>(k)] = static_cast<double>(correct[static_cast<std::size_t>(k)]) / static_cast<double>(data.size());
    result.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return result;
}

/// Eval-mode per-subtask accuracy.
template <typename Scalar>
std::array<double, 3> judgment_accuracy(const JudgmentModel<Scalar>& model, std::span<const corpus::LjpExample> data) {
  if (data.empty()) throw std::invalid_argument("judgment_accuracy: empty dataset");
  typename Encoder<Scalar>::Cache cache;
  const ForwardContext ctx{};
  std::array<std::size_t, 3> correct{};
  for (const auto& ex : data) {
    const auto probs = predict_judgments(model.encoder.forward(ex.case_.tokens, cache, ctx), model.heads);
    for (int k = 0; k < kNumFactors; ++k)
      correct[static_cast<std::size_t>(k)] += argmax(probs[static_cast<std::size_t>(k)]) == ex.labels[static_cast<std::size_t>(k)];
  }
  std::array<double, 3> acc{};
  for (int k = 0; k < 3; ++k) acc[static_cast<std::size_t>(k)] = static_cast<double>(correct[static_cast<std::size_t>(k)]) / static_cast<double>(data.size());
  return acc;
}

}  // namespace dlfccm
