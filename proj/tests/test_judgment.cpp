#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dlfccm/judgment.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace dlfccm;
using dlfccm::testing::random_vector;
using dlfccm::testing::tiny_config;

namespace {

Vector<double> vec(std::initializer_list<double> v) {
  Vector<double> out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

const corpus::ClassCounts kTinyClasses{3, 3, 3};

}  // namespace

TEST_CASE("zero heads predict uniform distributions") {
  JudgmentHeads<double> heads(8, {8, 6, 4}, 1);
  for (auto& h : heads.heads) {
    h.weight.value.setZero();
    h.bias.value.setZero();
  }
  Rng rng(2);
  FactorSet<double> fs;
  for (int k = 0; k < 3; ++k) fs[k] = random_vector<double>(rng, 8);
  const auto p = predict_judgments(fs, heads);
  CHECK(p[0].isApprox(Vector<double>::Constant(8, 1.0 / 8)));
  CHECK(p[1].isApprox(Vector<double>::Constant(6, 1.0 / 6)));
  CHECK(p[2].isApprox(Vector<double>::Constant(4, 1.0 / 4)));
}

TEST_CASE("head outputs are probability vectors") {
  JudgmentHeads<double> heads(8, {8, 6, 4}, 3);
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    FactorSet<double> fs;
    for (int k = 0; k < 3; ++k) fs[k] = random_vector<double>(rng, 8, 3.0);
    for (const auto& p : predict_judgments(fs, heads)) {
      CHECK(p.minCoeff() >= 0.0);
      CHECK(std::abs(p.sum() - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("pretrain loss values") {
  SUBCASE("uniform heads give ln c") {
    JudgmentProbs<double> p{Vector<double>::Constant(4, 0.25), Vector<double>::Constant(4, 0.25),
                            Vector<double>::Constant(4, 0.25)};
    CHECK(pretrain_loss<double>(p, {0, 1, 3}) == doctest::Approx(1.3863).epsilon(1e-4));
    CHECK(pretrain_loss<double>(p, {0, 1, 3}) == doctest::Approx(std::log(4.0)));
  }
  SUBCASE("one-hot on the truth gives zero") {
    JudgmentProbs<double> p{vec({0, 1, 0}), vec({1, 0}), vec({0, 0, 1})};
    CHECK(pretrain_loss<double>(p, {1, 0, 2}) == 0.0);
  }
  SUBCASE("mixed probabilities") {
    JudgmentProbs<double> p{vec({0.5, 0.5}), vec({0.25, 0.75}), vec({1.0, 0.0})};
    // (ln 2 + ln 4 + 0) / 3
    CHECK(pretrain_loss<double>(p, {0, 0, 0}) == doctest::Approx(0.6931).epsilon(1e-4));
  }
  SUBCASE("zero probability is clamped") {
    JudgmentProbs<double> p{vec({1.0, 0.0}), vec({1.0, 0.0}), vec({1.0, 0.0})};
    CHECK(pretrain_loss<double>(p, {1, 0, 0}) == doctest::Approx(-std::log(1e-12) / 3));
  }
}

TEST_CASE("batch loss is the mean of per-example losses") {
  JudgmentHeads<double> heads(8, {8, 6, 4}, 5);
  Rng rng(6);
  std::vector<JudgmentProbs<double>> probs;
  std::vector<corpus::Judgment> labels;
  double sum = 0;
  for (int i = 0; i < 7; ++i) {
    FactorSet<double> fs;
    for (int k = 0; k < 3; ++k) fs[k] = random_vector<double>(rng, 8);
    probs.push_back(predict_judgments(fs, heads));
    labels.push_back({static_cast<int>(rng.index(8)), static_cast<int>(rng.index(6)), static_cast<int>(rng.index(4))});
    sum += pretrain_loss<double>(probs.back(), labels.back());
  }
  CHECK(pretrain_loss<double>(probs, labels) == doctest::Approx(sum / 7).epsilon(1e-14));
}

TEST_CASE("head k only sees factor k") {
  JudgmentHeads<double> heads(8, kTinyClasses, 7);
  Rng rng(8);
  FactorSet<double> fs, dfs;
  for (int k = 0; k < 3; ++k) fs[k] = random_vector<double>(rng, 8);
  // Only head 1's loss: zero out the other heads' contributions by comparing against a
  // loss that changes f2 and checking p_1 is unchanged.
  const auto p = predict_judgments(fs, heads);
  FactorSet<double> moved = fs;
  moved[1] += random_vector<double>(rng, 8);
  const auto q = predict_judgments(moved, heads);
  CHECK(p[0] == q[0]);
  CHECK(p[2] == q[2]);
  CHECK(!(p[1] == q[1]));
}

TEST_CASE("pretraining gradients match central differences for every tensor") {
  JudgmentModel<double> model(tiny_config(21), kTinyClasses);
  Rng rng(22);
  const auto tokens = dlfccm::testing::random_tokens(rng, 6, 12);
  const corpus::Judgment labels{2, 0, 1};
  auto loss = [&] {
    Encoder<double>::Cache c;
    return pretrain_loss<double>(predict_judgments(model.encoder.forward(tokens, c, ForwardContext{}), model.heads),
                                 labels);
  };
  auto params = model.params();
  zero_grads(params);
  Encoder<double>::Cache c;
  FactorSet<double> dfs;
  const auto fs = model.encoder.forward(tokens, c, ForwardContext{});
  const double l = judgment_loss_backward(model.heads, fs, labels, 1.0, dfs);
  CHECK(l == doctest::Approx(loss()));
  model.encoder.backward(c, dfs);
  const auto checks = dlfccm::testing::check_gradients(params, loss);
  CHECK(checks.size() == params.size());
  for (const auto& ch : checks) {
    INFO(ch.name);
    CHECK(ch.rel_error < 1e-4);
  }
}

namespace {

std::vector<corpus::LjpExample> tiny_dataset(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<corpus::LjpExample> out;
  for (int i = 0; i < n; ++i) {
    corpus::LjpExample ex;
    ex.case_.id = "t" + std::to_string(i);
    ex.labels = {i % 3, (i / 3) % 3, (i / 9) % 3};
    // Tokens carry the labels so the set is memorizable.
    ex.case_.tokens = {corpus::kCls, 3 + ex.labels[0], 6 + ex.labels[1], 9 + ex.labels[2],
                       3 + static_cast<int>(rng.index(9))};
    out.push_back(ex);
  }
  return out;
}

}  // namespace

TEST_CASE("pretraining memorizes a small set and is deterministic") {
  const auto data = tiny_dataset(32, 1);
  PretrainConfig cfg;
  cfg.epochs = 80;
  cfg.batch_size = 32;  // full batch: the loss sequence is an optimizer trajectory
  cfg.learning_rate = 3e-3;
  cfg.seed = 2;
  JudgmentModel<double> a(tiny_config(3), kTinyClasses);
  const auto ra = run_pretraining<double>(a, data, cfg);
  REQUIRE(ra.epochs.size() == 80);
  for (std::size_t e = 1; e < ra.epochs.size(); ++e) CHECK(ra.epochs[e].loss <= ra.epochs[e - 1].loss);
  CHECK(ra.epochs.back().loss < 0.5 * ra.epochs.front().loss);

  JudgmentModel<double> b(tiny_config(3), kTinyClasses);
  const auto rb = run_pretraining<double>(b, data, cfg);
  CHECK(ra.batch_losses == rb.batch_losses);
}

TEST_CASE("pretraining rejects out-of-range labels before training") {
  auto data = tiny_dataset(4, 1);
  data[2].labels[1] = 3;
  JudgmentModel<double> m(tiny_config(3), kTinyClasses);
  auto params = m.params();
  const Matrix<double> before = params[0]->value;
  CHECK_THROWS_AS(run_pretraining<double>(m, data, PretrainConfig{}), std::invalid_argument);
  CHECK(params[0]->value == before);
  CHECK_THROWS_AS(run_pretraining<double>(m, std::span<const corpus::LjpExample>{}, PretrainConfig{}),
                  std::invalid_argument);
}
