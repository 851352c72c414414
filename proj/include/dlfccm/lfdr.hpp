#pragma once

#include "dlfccm/core.hpp"
#include "dlfccm/encoder.hpp"
#include "dlfccm/nn.hpp"
#include "dlfccm/optim.hpp"

#include <array>
#include <span>
#include <string>

namespace dlfccm {

/// Partner of factor k (0-based) in the shared-factor pairing: 0->1, 1->2, 2->0.
/// In 1-based terms this is 1 + (k mod 3).
constexpr int partner_index(int k) { return (k + 1) % kNumFactors; }

template <typename Scalar>
struct DisentangledFactors {
  std::array<Vector<Scalar>, kNumFactors> ex;      // exclusive article/charge/term
  std::array<Vector<Scalar>, kNumFactors> sh_mid;  // intermediate shared
  Vector<Scalar> sh;                               // final shared

  static DisentangledFactors zeros(Eigen::Index d) {
    DisentangledFactors df;
    for (auto& v : df.ex) v = Vector<Scalar>::Zero(d);
    for (auto& v : df.sh_mid) v = Vector<Scalar>::Zero(d);
    df.sh = Vector<Scalar>::Zero(d);
    return df;
  }
};

/// The affine maps producing exclusive and shared factors. No nonlinearities.
template <typename Scalar>
struct LfdrParams {
  std::array<Affine<Scalar>, kNumFactors> g_ex;
  std::array<Affine<Scalar>, kNumFactors> g_sh;
  Affine<Scalar> g_sh_final;

  LfdrParams(int d, std::uint64_t seed) : g_sh_final("lfdr.sh_final", 3 * d, d) {
    for (int k = 0; k < kNumFactors; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      g_ex[ku] = Affine<Scalar>("lfdr.ex." + std::to_string(k), d, d);
      g_sh[ku] = Affine<Scalar>("lfdr.sh." + std::to_string(k), 2 * d, d);
    }
    Rng rng(derive_seed(seed, "lfdr"));
    for (auto& a : g_ex) a.init(rng);
    for (auto& a : g_sh) a.init(rng);
    g_sh_final.init(rng);
  }

  void collect(ParamList<Scalar>& out) {
    for (auto& a : g_ex) a.collect(out);
    for (auto& a : g_sh) a.collect(out);
    g_sh_final.collect(out);
  }
};

/// Three affine layers with tanh between them, softmax over the three factor types.
template <typename Scalar>
struct Discriminator {
  struct Cache {
    Vector<Scalar> x, h1, h2;
  };

  Affine<Scalar> l1, l2, l3;

  Discriminator(int d, std::uint64_t seed)
      : l1("disc.l1", d, d), l2("disc.l2", d, d), l3("disc.l3", d, kNumFactors) {
    Rng rng(derive_seed(seed, "disc"));
    l1.init(rng);
    l2.init(rng);
    l3.init(rng);
  }

  Vector<Scalar> logits(const Vector<Scalar>& x, Cache& c) const {
    c.x = x;
    c.h1 = l1.forward_vec(x).array().tanh();
    c.h2 = l2.forward_vec(c.h1).array().tanh();
    return l3.forward_vec(c.h2);
  }

  Vector<Scalar> probs(const Vector<Scalar>& x) const {
    Cache c;
    return softmax<Scalar>(logits(x, c));
  }

  /// Returns dL/dx. Parameter gradients accumulate only when `accumulate`.
  Vector<Scalar> backward(const Cache& c, const Vector<Scalar>& dlogits, bool accumulate) {
    Vector<Scalar> dh2 = l3.backward_vec(c.h2, dlogits, accumulate);
    dh2.array() *= Scalar(1) - c.h2.array().square();
    Vector<Scalar> dh1 = l2.backward_vec(c.h1, dh2, accumulate);
    dh1.array() *= Scalar(1) - c.h1.array().square();
    return l1.backward_vec(c.x, dh1, accumulate);
  }

  void collect(ParamList<Scalar>& out) {
    l1.collect(out);
    l2.collect(out);
    l3.collect(out);
  }
};

template <typename Scalar>
std::array<Vector<Scalar>, kNumFactors> exclusive_factors(const FactorSet<Scalar>& fs, const LfdrParams<Scalar>& p) {
  std::array<Vector<Scalar>, kNumFactors> ex;
  for (int k = 0; k < kNumFactors; ++k) ex[static_cast<std::size_t>(k)] = p.g_ex[static_cast<std::size_t>(k)].forward_vec(fs[k]);
  return ex;
}

template <typename Scalar>
Vector<Scalar> concat(std::initializer_list<const Vector<Scalar>*> parts) {
  Eigen::Index n = 0;
  for (const auto* v : parts) n += v->size();
  Vector<Scalar> out(n);
  Eigen::Index at = 0;
  for (const auto* v : parts) {
    out.segment(at, v->size()) = *v;
    at += v->size();
  }
  return out;
}

/// Intermediate shared factors from (f_k, f_partner) and the final shared factor
/// from the three intermediates in index order.
template <typename Scalar>
std::pair<std::array<Vector<Scalar>, kNumFactors>, Vector<Scalar>> shared_factor(const FactorSet<Scalar>& fs,
                                                                                   const LfdrParams<Scalar>& p) {
  std::array<Vector<Scalar>, kNumFactors> mid;
  for (int k = 0; k < kNumFactors; ++k)
    mid[static_cast<std::size_t>(k)] = p.g_sh[static_cast<std::size_t>(k)].forward_vec(concat<Scalar>({&fs[k], &fs[partner_index(k)]}));
  Vector<Scalar> sh = p.g_sh_final.forward_vec(concat<Scalar>({&mid[0], &mid[1], &mid[2]}));
  return {std::move(mid), std::move(sh)};
}

template <typename Scalar>
DisentangledFactors<Scalar> disentangle(const FactorSet<Scalar>& fs, const LfdrParams<Scalar>& p) {
  DisentangledFactors<Scalar> df;
  df.ex = exclusive_factors(fs, p);
  auto [mid, sh] = shared_factor(fs, p);
  df.sh_mid = std::move(mid);
  df.sh = std::move(sh);
  return df;
}

/// Backprop through g_ex, g_sh and g_sh_final. Empty gradient vectors count as zero.
template <typename Scalar>
FactorSet<Scalar> disentangle_backward(LfdrParams<Scalar>& p, const FactorSet<Scalar>& fs,
                                       const DisentangledFactors<Scalar>& forward,
                                       const DisentangledFactors<Scalar>& grad) {
  const Eigen::Index d = fs[0].size();
  FactorSet<Scalar> dfs = FactorSet<Scalar>::zeros(d);
  for (int k = 0; k < kNumFactors; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    if (grad.ex[ku].size() > 0) dfs[k] += p.g_ex[ku].backward_vec(fs[k], grad.ex[ku]);
  }
  std::array<Vector<Scalar>, kNumFactors> dmid;
  for (int k = 0; k < kNumFactors; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    dmid[ku] = grad.sh_mid[ku].size() > 0 ? grad.sh_mid[ku] : Vector<Scalar>::Zero(d);
  }
  if (grad.sh.size() > 0) {
    const Vector<Scalar> in = concat<Scalar>({&forward.sh_mid[0], &forward.sh_mid[1], &forward.sh_mid[2]});
    const Vector<Scalar> dcat = p.g_sh_final.backward_vec(in, grad.sh);
    for (int k = 0; k < kNumFactors; ++k) dmid[static_cast<std::size_t>(k)] += dcat.segment(k * d, d);
  }
  for (int k = 0; k < kNumFactors; ++k) {
    const Vector<Scalar> in = concat<Scalar>({&fs[k], &fs[partner_index(k)]});
    const Vector<Scalar> dcat = p.g_sh[static_cast<std::size_t>(k)].backward_vec(in, dmid[static_cast<std::size_t>(k)]);
    dfs[k] += dcat.head(d);
    dfs[partner_index(k)] += dcat.tail(d);
  }
  return dfs;
}

template <typename Scalar>
Vector<Scalar> discriminate(const Vector<Scalar>& v, const Discriminator<Scalar>& d) {
  return d.probs(v);
}

/// -mean_k log P_D(k | ex_k) for one case.
template <typename Scalar>
Scalar loss_ex(const std::array<Vector<Scalar>, kNumFactors>& ex, const Discriminator<Scalar>& d) {
  Scalar total = 0;
  for (int k = 0; k < kNumFactors; ++k) total += cross_entropy<Scalar>(d.probs(ex[static_cast<std::size_t>(k)]), k, nullptr);
  return total / Scalar(kNumFactors);
}

/// -(1/4) sum of D's output entropies over the final and three intermediate shared factors.
template <typename Scalar>
Scalar loss_sh(const std::array<Vector<Scalar>, kNumFactors>& mid, const Vector<Scalar>& sh,
               const Discriminator<Scalar>& d) {
  Scalar total = entropy<Scalar>(d.probs(sh));
  for (const auto& m : mid) total += entropy<Scalar>(d.probs(m));
  return -total / Scalar(4);
}

/// loss_ex scaled by `weight`, with gradients into the exclusive factors only (D frozen).
template <typename Scalar>
Scalar loss_ex_backward(Discriminator<Scalar>& d, const DisentangledFactors<Scalar>& df, Scalar weight,
                        DisentangledFactors<Scalar>& grad) {
  Scalar total = 0;
  typename Discriminator<Scalar>::Cache c;
  for (int k = 0; k < kNumFactors; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const Vector<Scalar> p = softmax<Scalar>(d.logits(df.ex[ku], c));
    Vector<Scalar> dz;
    total += cross_entropy<Scalar>(p, k, &dz);
    dz *= weight / Scalar(kNumFactors);
    const Vector<Scalar> dx = d.backward(c, dz, false);
    if (grad.ex[ku].size() == 0) grad.ex[ku] = dx;
    else grad.ex[ku] += dx;
  }
  return total / Scalar(kNumFactors);
}

/// loss_sh scaled by `weight`, with gradients into the shared factors only (D frozen).
template <typename Scalar>
Scalar loss_sh_backward(Discriminator<Scalar>& d, const DisentangledFactors<Scalar>& df, Scalar weight,
                        DisentangledFactors<Scalar>& grad) {
  Scalar total = 0;
  typename Discriminator<Scalar>::Cache c;
  auto one = [&](const Vector<Scalar>& v, Vector<Scalar>& g) {
    const Vector<Scalar> p = softmax<Scalar>(d.logits(v, c));
    total += entropy<Scalar>(p);
    const Vector<Scalar> dz = entropy_grad_logits<Scalar>(p) * (-weight / Scalar(4));
    const Vector<Scalar> dx = d.backward(c, dz, false);
    if (g.size() == 0) g = dx;
    else g += dx;
  };
  one(df.sh, grad.sh);
  for (int k = 0; k < kNumFactors; ++k) one(df.sh_mid[static_cast<std::size_t>(k)], grad.sh_mid[static_cast<std::size_t>(k)]);
  return -total / Scalar(4);
}

/// Discriminator cross-entropy over the exclusive factors of every case in
/// `cases` (sources and targets flattened). Accumulates D's gradients only.
template <typename Scalar>
Scalar discriminator_loss_backward(Discriminator<Scalar>& d,
                                   std::span<const std::array<Vector<Scalar>, kNumFactors>> cases) {
  if (cases.empty()) return Scalar(0);
  const Scalar w = Scalar(1) / static_cast<Scalar>(cases.size() * kNumFactors);
  Scalar total = 0;
  typename Discriminator<Scalar>::Cache c;
  for (const auto& ex : cases) {
    for (int k = 0; k < kNumFactors; ++k) {
      const Vector<Scalar> p = softmax<Scalar>(d.logits(ex[static_cast<std::size_t>(k)], c));
      Vector<Scalar> dz;
      total += cross_entropy<Scalar>(p, k, &dz);
      d.backward(c, dz * w, true);
    }
  }
  return total * w;
}

/// One optimizer step on D. Exclusive factors are recomputed from `factor_sets`
/// with the current LFDR parameters and treated as constants.
template <typename Scalar>
Scalar update_discriminator(std::span<const FactorSet<Scalar>> factor_sets, const LfdrParams<Scalar>& params,
                            Discriminator<Scalar>& d, Adam<Scalar>& opt) {
  std::vector<std::array<Vector<Scalar>, kNumFactors>> ex;
  ex.reserve(factor_sets.size());
  for (const auto& fs : factor_sets) ex.push_back(exclusive_factors(fs, params));
  opt.zero_grad();
  const Scalar loss = discriminator_loss_backward<Scalar>(d, ex);
  opt.step();
  return loss;
}

/// Fraction of exclusive factors D attributes to their own type.
template <typename Scalar>
double discriminator_accuracy(const Discriminator<Scalar>& d,
                              std::span<const std::array<Vector<Scalar>, kNumFactors>> cases) {
  if (cases.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : cases) {
    for (int k = 0; k < kNumFactors; ++k) {
      const Vector<Scalar> p = d.probs(ex[static_cast<std::size_t>(k)]);
      Eigen::Index best = 0;
      p.maxCoeff(&best);
      correct += static_cast<int>(best) == k;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(cases.size() * kNumFactors);
}

}  // namespace dlfccm
