#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dlfccm/fusion.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

#include <algorithm>
#include <numeric>

using namespace dlfccm;
using dlfccm::testing::random_vector;

namespace {

constexpr int kD = 8;

Vector<double> vec(std::initializer_list<double> v) {
  Vector<double> out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

DisentangledFactors<double> random_df(Rng& rng) {
  DisentangledFactors<double> df;
  for (auto& v : df.ex) v = random_vector<double>(rng, kD);
  for (auto& v : df.sh_mid) v = random_vector<double>(rng, kD);
  df.sh = random_vector<double>(rng, kD);
  return df;
}

HeadLogits<double> random_logits(Rng& rng, double scale) {
  HeadLogits<double> z;
  for (auto& v : z) v = random_vector<double>(rng, kNumRelevance, scale);
  return z;
}

}  // namespace

TEST_CASE("pair features") {
  CHECK(pair_features<double>(Vector<double>::Zero(3), Vector<double>::Zero(3)) == Vector<double>::Zero(12));
  const Vector<double> v = vec({1.5, -2.0, 0.5});
  const Vector<double> same = pair_features<double>(v, v);
  CHECK(same.segment(0, 3) == v);
  CHECK(same.segment(3, 3) == v);
  CHECK(same.segment(6, 3) == 2.0 * v);
  CHECK(same.segment(9, 3) == v.cwiseAbs2());
  CHECK(pair_features<double>(vec({1, 0}), vec({0, 1})) == vec({1, 0, 0, 1, 1, 1, 0, 0}));
  CHECK_THROWS_AS(pair_features<double>(vec({1, 0}), vec({0, 1, 2})), std::invalid_argument);
}

TEST_CASE("head logits wiring") {
  Rng rng(1);
  const auto src = random_df(rng);
  const auto tgt = random_df(rng);
  SUBCASE("zero weights give zero logits") {
    MatchHeads<double> heads(kD, 2);
    for (auto& h : heads.heads) {
      h.weight.value.setZero();
      h.bias.value.setZero();
    }
    for (const auto& z : head_logits(src, tgt, heads)) CHECK(z == Vector<double>::Zero(kNumRelevance));
  }
  SUBCASE("perturbing the source's first exclusive factor only moves z_1") {
    MatchHeads<double> heads(kD, 3);
    const auto a = head_logits(src, tgt, heads);
    auto moved = src;
    moved.ex[0] += random_vector<double>(rng, kD);
    const auto b = head_logits(moved, tgt, heads);
    CHECK(a[0] == b[0]);
    CHECK(!(a[1] == b[1]));
    CHECK(a[2] == b[2]);
    CHECK(a[3] == b[3]);
  }
  SUBCASE("head 2's output has no gradient in head 3's parameters") {
    MatchHeads<double> heads(kD, 4);
    FusionResult<double> r;
    r.z = head_logits(src, tgt, heads);
    r.w = Vector<double>::Zero(kNumHeads);
    r.w[2] = 1.0;
    r.z_fused = fuse(r.z, r.w);
    ParamList<double> params;
    heads.collect(params);
    zero_grads(params);
    DisentangledFactors<double> ds, dt;
    match_loss_backward(heads, src, tgt, r, 1, 1.0, ds, dt);
    CHECK(heads.heads[3].weight.grad.cwiseAbs().maxCoeff() == 0.0);
    CHECK(heads.heads[2].weight.grad.norm() > 0.0);
  }
}

TEST_CASE("entropy weights examples") {
  SUBCASE("identical heads give uniform weights") {
    Rng rng(5);
    const Vector<double> v = random_vector<double>(rng, kNumRelevance, 2.0);
    const auto [h, w] = entropy_weights<double>({v, v, v, v});
    CHECK(w.isApprox(Vector<double>::Constant(4, 0.25)));
  }
  SUBCASE("H = (0.5, 1, 1, 1)") {
    const Vector<double> w = weights_from_entropies<double>({0.5, 1.0, 1.0, 1.0});
    // Independent softmax over (2, 1, 1, 1).
    const double e2 = std::exp(2.0), e1 = std::exp(1.0);
    const double denom = e2 + 3 * e1;
    CHECK(w[0] == doctest::Approx(e2 / denom).epsilon(1e-7));
    CHECK(w[0] == doctest::Approx(0.4754).epsilon(1e-4));
    for (int k = 1; k < 4; ++k) CHECK(w[k] == doctest::Approx(0.1749).epsilon(1e-3));
  }
  SUBCASE("a near one-hot head takes all the weight") {
    Vector<double> sharp = Vector<double>::Constant(4, -30.0);
    sharp[2] = 30.0;
    const Vector<double> flat = Vector<double>::Zero(4);
    const auto [h, w] = entropy_weights<double>({flat, flat, sharp, flat});
    CHECK(w[2] > 1.0 - 1e-12);
    CHECK(w[0] < 1e-12);
  }
}

TEST_CASE("fuse and loss examples") {
  Rng rng(6);
  const auto z = random_logits(rng, 2.0);
  for (int j = 0; j < 4; ++j) {
    Vector<double> w = Vector<double>::Zero(4);
    w[j] = 1.0;
    CHECK(fuse_and_loss(z, w, 0).first == z[static_cast<std::size_t>(j)]);
  }
  const HeadLogits<double> zeros{Vector<double>::Zero(4), Vector<double>::Zero(4), Vector<double>::Zero(4),
                                 Vector<double>::Zero(4)};
  CHECK(fuse_and_loss(zeros, uniform_weights<double>(), 2).second == doctest::Approx(1.3863).epsilon(1e-4));
  const Vector<double> v = random_vector<double>(rng, 4);
  const Vector<double> w = softmax<double>(random_vector<double>(rng, 4));
  CHECK(fuse_and_loss<double>({v, v, v, v}, w, 0).first.isApprox(v, 1e-12));
  CHECK_THROWS_AS(fuse_and_loss(zeros, w, 4), std::invalid_argument);
}

TEST_CASE("weight invariants over random logits") {
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const auto z = random_logits(rng, 0.5 + trial % 5);
    const auto [h, w] = entropy_weights(z);
    CHECK(std::abs(w.sum() - 1.0) < 1e-6);
    for (int k = 0; k < 4; ++k) {
      CHECK(w[k] > 0.0);
      CHECK(h[static_cast<std::size_t>(k)] >= 0.0);
      CHECK(h[static_cast<std::size_t>(k)] <= std::log(4.0) + 1e-12);
    }
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        if (h[static_cast<std::size_t>(i)] < h[static_cast<std::size_t>(j)]) {
          // Both weights can underflow together when one head is very sharp.
          if (w[i] > 1e-250) CHECK(w[i] > w[j]);
          else CHECK(w[i] >= w[j]);
        }

    // Shift invariance of the softmax over reciprocal scores.
    Vector<double> r(4);
    for (int k = 0; k < 4; ++k) r[k] = 1.0 / (h[static_cast<std::size_t>(k)] + kEntropyFloor);
    const Vector<double> shifted = softmax<double>((r.array() + 3.7).matrix());
    CHECK((shifted - w).cwiseAbs().maxCoeff() < 1e-12);

    // Permuting heads together with their weights keeps the fused argmax.
    std::array<int, 4> perm{0, 1, 2, 3};
    for (int s = 0; s < trial % 7; ++s) std::next_permutation(perm.begin(), perm.end());
    HeadLogits<double> zp;
    Vector<double> wp(4);
    for (int k = 0; k < 4; ++k) {
      zp[static_cast<std::size_t>(k)] = z[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])];
      wp[k] = w[perm[static_cast<std::size_t>(k)]];
    }
    Eigen::Index a = 0, b = 0;
    fuse(z, w).maxCoeff(&a);
    fuse(zp, wp).maxCoeff(&b);
    CHECK(a == b);
  }
}

TEST_CASE("matching loss gradient matches central differences with w held fixed") {
  MatchHeads<double> heads(kD, 8);
  Rng rng(9);
  auto src = random_df(rng);
  auto tgt = random_df(rng);
  const int label = 2;
  const auto base = fusion_forward(src, tgt, heads, false);
  const Vector<double> w = base.w;
  auto loss = [&] { return fuse_and_loss(head_logits(src, tgt, heads), w, label).second; };

  ParamList<double> params;
  heads.collect(params);
  zero_grads(params);
  DisentangledFactors<double> ds, dt;
  const double l = match_loss_backward(heads, src, tgt, base, label, 1.0, ds, dt);
  CHECK(l == doctest::Approx(loss()).epsilon(1e-12));
  for (const auto& ch : dlfccm::testing::check_gradients(params, loss)) {
    INFO(ch.name);
    CHECK(ch.rel_error < 1e-4);
  }
  // Upstream factors.
  auto check_vec = [&](Vector<double>& v, const Vector<double>& analytic) {
    Vector<double> num(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + 1e-6;
      const double up = loss();
      v[i] = saved - 1e-6;
      const double down = loss();
      v[i] = saved;
      num[i] = (up - down) / 2e-6;
    }
    CHECK((analytic - num).norm() / std::max(analytic.norm() + num.norm(), 1e-4) < 1e-4);
  };
  check_vec(src.sh, ds.sh);
  check_vec(tgt.sh, dt.sh);
  for (int k = 0; k < 3; ++k) {
    check_vec(src.ex[static_cast<std::size_t>(k)], ds.ex[static_cast<std::size_t>(k)]);
    check_vec(tgt.ex[static_cast<std::size_t>(k)], dt.ex[static_cast<std::size_t>(k)]);
  }
}
