#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dlfccm/encoder.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace dlfccm;
using dlfccm::testing::tiny_config;

namespace {

using Enc = Encoder<double>;

FactorSet<double> factors(const Enc& enc, const std::vector<int>& tokens) {
  Enc::Cache c;
  return enc.forward(tokens, c, ForwardContext{});
}

}  // namespace

TEST_CASE("config validation") {
  auto c = tiny_config();
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("padding does not change the CLS row") {
  Enc enc(tiny_config());
  Enc::Cache c1, c2;
  const std::vector<int> plain{1, 5, 6, 7};
  const std::vector<int> padded{1, 5, 6, 7, 0, 0};
  const auto h1 = enc.encode(plain, c1, ForwardContext{});
  const auto h2 = enc.encode(padded, c2, ForwardContext{});
  CHECK((h1.row(0) - h2.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  const auto f1 = factors(enc, plain);
  const auto f2 = factors(enc, padded);
  for (int k = 0; k < 3; ++k) CHECK((f1[k] - f2[k]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("positions make the encoder order-sensitive") {
  Enc enc(tiny_config());
  const auto a = factors(enc, {1, 4, 9, 5, 6});
  const auto b = factors(enc, {1, 9, 4, 5, 6});
  CHECK((a[0] - b[0]).norm() > 1e-6);
}

TEST_CASE("eval mode is bitwise deterministic") {
  Enc enc(tiny_config());
  const std::vector<int> t{1, 3, 4, 5, 6, 7};
  const auto a = factors(enc, t);
  const auto b = factors(enc, t);
  for (int k = 0; k < 3; ++k) CHECK(a[k] == b[k]);
  Enc other(tiny_config());
  const auto c = factors(other, t);
  for (int k = 0; k < 3; ++k) CHECK(a[k] == c[k]);
}

TEST_CASE("out-of-vocabulary ids and overlong inputs are rejected") {
  Enc enc(tiny_config());
  Enc::Cache c;
  CHECK_THROWS_AS(enc.encode(std::vector<int>{1, 12}, c, ForwardContext{}), std::out_of_range);
  CHECK_THROWS_AS(enc.encode(std::vector<int>(9, 1), c, ForwardContext{}), std::invalid_argument);
}

TEST_CASE("attention rows are distributions over unmasked keys") {
  Enc enc(tiny_config());
  Enc::Cache c;
  enc.encode(std::vector<int>{1, 4, 5, 6, 0, 0}, c, ForwardContext{});
  for (const auto& a : c.shared[0].attn.attn) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      CHECK(a.row(i).minCoeff() >= 0.0);
      CHECK(std::abs(a.row(i).sum() - 1.0) < 1e-6);
      CHECK(a(i, 4) == 0.0);
      CHECK(a(i, 5) == 0.0);
    }
  }
}

TEST_CASE("layer norm output has zero mean and unit variance per position") {
  Rng rng(3);
  Matrix<double> x(5, 16);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal() * 2.0 + 0.5;
  const auto xhat = LayerNorm<double>::normalize(x);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = xhat.row(r).mean();
    const double var = (xhat.row(r).array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-4);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("factor layers: same init seed gives equal factors, distinct seeds differ") {
  Enc enc(tiny_config());
  const std::vector<int> t{1, 3, 8, 5, 10, 7};
  const auto distinct = factors(enc, t);
  CHECK((distinct[0] - distinct[1]).norm() > 1e-6);
  CHECK((distinct[1] - distinct[2]).norm() > 1e-6);
  CHECK((distinct[0] - distinct[2]).norm() > 1e-6);

  enc.init_factor_layer(1, 99);
  enc.init_factor_layer(2, 99);
  const auto shared = factors(enc, t);
  CHECK(shared[1] == shared[2]);
  CHECK((shared[0] - shared[1]).norm() > 1e-6);
}

TEST_CASE("gradient of f1 does not reach the other factor layers") {
  Enc enc(tiny_config());
  Enc::Cache c;
  const auto fs = enc.forward(std::vector<int>{1, 3, 4, 5, 6, 7}, c, ForwardContext{});
  ParamList<double> all;
  enc.collect(all);
  zero_grads(all);
  FactorSet<double> d;
  d[0] = Vector<double>::Ones(fs[0].size());
  enc.backward(c, d);
  for (int k : {1, 2}) {
    ParamList<double> layer;
    enc.collect_factor_layer(k, layer);
    for (auto* p : layer) CHECK(p->grad.cwiseAbs().maxCoeff() == 0.0);
  }
  ParamList<double> first;
  enc.collect_factor_layer(0, first);
  double total = 0;
  for (auto* p : first) total += p->grad.norm();
  CHECK(total > 0.0);
}

TEST_CASE("factor gradients match central differences") {
  Enc enc(tiny_config(5));
  Rng rng(17);
  const auto tokens = dlfccm::testing::random_tokens(rng, 6, 12);
  FactorSet<double> probe;
  for (int k = 0; k < 3; ++k) probe[k] = dlfccm::testing::random_vector<double>(rng, 8);
  auto loss = [&] {
    const auto fs = factors(enc, tokens);
    double l = 0;
    for (int k = 0; k < 3; ++k) l += probe[k].dot(fs[k]);
    return l;
  };
  ParamList<double> params;
  enc.collect(params);
  zero_grads(params);
  Enc::Cache c;
  enc.forward(tokens, c, ForwardContext{});
  enc.backward(c, probe);
  const auto checks = dlfccm::testing::check_gradients(params, loss);
  for (const auto& ch : checks) {
    INFO(ch.name);
    CHECK(ch.rel_error < 1e-4);
  }
}

TEST_CASE("dropout is live only in training mode") {
  auto cfg = tiny_config();
  cfg.dropout_rate = 0.5;
  Enc enc(cfg);
  const std::vector<int> t{1, 3, 4, 5, 6, 7};
  Rng rng(1);
  Enc::Cache c;
  const auto eval = enc.forward(t, c, ForwardContext{false, 0.5, &rng});
  const auto train = enc.forward(t, c, ForwardContext{true, 0.5, &rng});
  CHECK(eval[0] == factors(enc, t)[0]);
  CHECK((eval[0] - train[0]).norm() > 1e-9);
}
