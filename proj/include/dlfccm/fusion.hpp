#pragma once

#include "dlfccm/core.hpp"
#include "dlfccm/lfdr.hpp"
#include "dlfccm/nn.hpp"

#include <array>
#include <string>

namespace dlfccm {

inline constexpr double kEntropyFloor = 1e-8;

/// [f_s; f_t; f_s + f_t; f_s * f_t]
template <typename Scalar>
Vector<Scalar> pair_features(const Vector<Scalar>& fs, const Vector<Scalar>& ft) {
  if (fs.size() != ft.size())
    throw std::invalid_argument("pair_features: dimension mismatch (" + std::to_string(fs.size()) + " vs " +
                                std::to_string(ft.size()) + ")");
  const Eigen::Index d = fs.size();
  Vector<Scalar> out(4 * d);
  out.segment(0, d) = fs;
  out.segment(d, d) = ft;
  out.segment(2 * d, d) = fs + ft;
  out.segment(3 * d, d) = fs.cwiseProduct(ft);
  return out;
}

template <typename Scalar>
void pair_features_backward(const Vector<Scalar>& fs, const Vector<Scalar>& ft, const Vector<Scalar>& dpf,
                            Vector<Scalar>& dfs, Vector<Scalar>& dft) {
  const Eigen::Index d = fs.size();
  dfs = dpf.segment(0, d) + dpf.segment(2 * d, d) + dpf.segment(3 * d, d).cwiseProduct(ft);
  dft = dpf.segment(d, d) + dpf.segment(2 * d, d) + dpf.segment(3 * d, d).cwiseProduct(fs);
}

/// Head 0 scores the shared-factor pair; heads 1..3 the exclusive pairs.
template <typename Scalar>
struct MatchHeads {
  std::array<Affine<Scalar>, kNumHeads> heads;

  MatchHeads(int d, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "match.heads"));
    for (int k = 0; k < kNumHeads; ++k) {
      heads[static_cast<std::size_t>(k)] = Affine<Scalar>("match.head." + std::to_string(k), 4 * d, kNumRelevance);
      heads[static_cast<std::size_t>(k)].init(rng);
    }
  }

  void collect(ParamList<Scalar>& out) {
    for (auto& h : heads) h.collect(out);
  }
};

template <typename Scalar>
using HeadLogits = std::array<Vector<Scalar>, kNumHeads>;

template <typename Scalar>
struct FusionResult {
  HeadLogits<Scalar> z;
  std::array<Scalar, kNumHeads> entropy{};
  Vector<Scalar> w;
  Vector<Scalar> z_fused;
};

/// Input vector of head k for a source/target pair.
template <typename Scalar>
const Vector<Scalar>& head_input(const DisentangledFactors<Scalar>& df, int k) {
  return k == 0 ? df.sh : df.ex[static_cast<std::size_t>(k - 1)];
}

template <typename Scalar>
HeadLogits<Scalar> head_logits(const DisentangledFactors<Scalar>& src, const DisentangledFactors<Scalar>& tgt,
                               const MatchHeads<Scalar>& heads) {
  HeadLogits<Scalar> z;
  for (int k = 0; k < kNumHeads; ++k)
    z[static_cast<std::size_t>(k)] =
        heads.heads[static_cast<std::size_t>(k)].forward_vec(pair_features(head_input(src, k), head_input(tgt, k)));
  return z;
}

/// w = softmax(1 / (H_k + eps)).
template <typename Scalar>
Vector<Scalar> weights_from_entropies(const std::array<Scalar, kNumHeads>& h) {
  Vector<Scalar> inv(kNumHeads);
  for (int k = 0; k < kNumHeads; ++k)
    inv[k] = Scalar(1) / (h[static_cast<std::size_t>(k)] + static_cast<Scalar>(kEntropyFloor));
  return softmax<Scalar>(inv);
}

/// Entropies of softmax(z_k) in nats and the confidence weights derived from them.
template <typename Scalar>
std::pair<std::array<Scalar, kNumHeads>, Vector<Scalar>> entropy_weights(const HeadLogits<Scalar>& z) {
  std::array<Scalar, kNumHeads> h{};
  for (int k = 0; k < kNumHeads; ++k)
    h[static_cast<std::size_t>(k)] = entropy<Scalar>(softmax<Scalar>(z[static_cast<std::size_t>(k)]));
  return {h, weights_from_entropies(h)};
}

template <typename Scalar>
Vector<Scalar> uniform_weights() {
  return Vector<Scalar>::Constant(kNumHeads, Scalar(1) / Scalar(kNumHeads));
}

template <typename Scalar>
Vector<Scalar> fuse(const HeadLogits<Scalar>& z, const Vector<Scalar>& w) {
  Vector<Scalar> out = w[0] * z[0];
  for (int k = 1; k < kNumHeads; ++k) out += w[k] * z[static_cast<std::size_t>(k)];
  return out;
}

/// Fused logits and -log softmax(z_fused)[label].
template <typename Scalar>
std::pair<Vector<Scalar>, Scalar> fuse_and_loss(const HeadLogits<Scalar>& z, const Vector<Scalar>& w, int label) {
  if (label < 0 || label >= kNumRelevance) throw std::invalid_argument("fuse_and_loss: label out of range");
  Vector<Scalar> zf = fuse(z, w);
  const Scalar loss = cross_entropy<Scalar>(softmax<Scalar>(zf), label, nullptr);
  return {std::move(zf), loss};
}

/// Full fusion forward for one pair; `fixed_weights` selects uniform weights.
template <typename Scalar>
FusionResult<Scalar> fusion_forward(const DisentangledFactors<Scalar>& src, const DisentangledFactors<Scalar>& tgt,
                                    const MatchHeads<Scalar>& heads, bool fixed_weights) {
  FusionResult<Scalar> r;
  r.z = head_logits(src, tgt, heads);
  auto [h, w] = entropy_weights(r.z);
  r.entropy = h;
  r.w = fixed_weights ? uniform_weights<Scalar>() : w;
  r.z_fused = fuse(r.z, r.w);
  return r;
}

/// Matching loss scaled by `weight`; w is held constant. Accumulates head
/// gradients and writes dL/d(shared, exclusive) for both cases.
template <typename Scalar>
Scalar match_loss_backward(MatchHeads<Scalar>& heads, const DisentangledFactors<Scalar>& src,
                           const DisentangledFactors<Scalar>& tgt, const FusionResult<Scalar>& r, int label,
                           Scalar weight, DisentangledFactors<Scalar>& dsrc, DisentangledFactors<Scalar>& dtgt) {
  Vector<Scalar> dzf;
  const Scalar loss = cross_entropy<Scalar>(softmax<Scalar>(r.z_fused), label, &dzf);
  dzf *= weight;
  for (int k = 0; k < kNumHeads; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const Vector<Scalar>& fs = head_input(src, k);
    const Vector<Scalar>& ft = head_input(tgt, k);
    const Vector<Scalar> pf = pair_features(fs, ft);
    const Vector<Scalar> dpf = heads.heads[ku].backward_vec(pf, dzf * r.w[k]);
    Vector<Scalar> dfs, dft;
    pair_features_backward(fs, ft, dpf, dfs, dft);
    auto add = [](Vector<Scalar>& acc, const Vector<Scalar>& g) {
      if (acc.size() == 0) acc = g;
      else acc += g;
    };
    if (k == 0) {
      add(dsrc.sh, dfs);
      add(dtgt.sh, dft);
    } else {
      add(dsrc.ex[ku - 1], dfs);
      add(dtgt.ex[ku - 1], dft);
    }
  }
  return loss;
}

}  // namespace dlfccm
