#pragma once

#include "dlfccm/core.hpp"
#include "dlfccm/nn.hpp"

#include <array>
#include <span>
#include <string>
#include <vector>

namespace dlfccm {

struct EncoderConfig {
  int vocab_size = 1024;
  int d_model = 64;
  int n_shared_layers = 2;
  int n_heads = 4;
  int ffn_dim = 128;
  int max_len = 128;
  double dropout_rate = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (vocab_size < 3 || d_model < 1 || n_shared_layers < 1 || n_heads < 1 || ffn_dim < 1 || max_len < 2)
      throw std::invalid_argument("EncoderConfig: counts must be >= 1 (vocab_size >= 3, max_len >= 2)");
    if (d_model % n_heads != 0) throw std::invalid_argument("EncoderConfig: d_model must be divisible by n_heads");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
      throw std::invalid_argument("EncoderConfig: dropout_rate must be in [0,1)");
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// The three legal-factor vectors (article, charge, term) of one case.
template <typename Scalar>
struct FactorSet {
  std::array<Vector<Scalar>, kNumFactors> f;

  Vector<Scalar>& operator[](int k) { return f[static_cast<std::size_t>(k)]; }
  const Vector<Scalar>& operator[](int k) const { return f[static_cast<std::size_t>(k)]; }

  static FactorSet zeros(Eigen::Index d) {
    FactorSet s;
    for (auto& v : s.f) v = Vector<Scalar>::Zero(d);
    return s;
  }
};

template <typename Scalar>
Matrix<Scalar> sinusoidal_positions(int max_len, int d_model) {
  Matrix<Scalar> pe(max_len, d_model);
  for (int pos = 0; pos < max_len; ++pos) {
    for (int i = 0; i < d_model; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / d_model);
      pe(pos, i) = static_cast<Scalar>(i % 2 == 0 ? std::sin(pos * rate) : std::cos(pos * rate));
    }
  }
  return pe;
}

/// Shared Transformer encoder plus one extra block per legal factor. Each factor
/// vector is the CLS row of its block's output.
template <typename Scalar>
class Encoder {
 public:
  using Block = EncoderBlock<Scalar>;

  struct Cache {
    std::vector<int> tokens;
    std::vector<char> pad;
    std::vector<typename Block::Cache> shared;
    std::array<typename Block::Cache, kNumFactors> factor;
  };

  explicit Encoder(const EncoderConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    embedding_ = Param<Scalar>("encoder.embedding", cfg_.vocab_size, cfg_.d_model);
    for (int i = 0; i < cfg_.n_shared_layers; ++i)
      shared_.emplace_back("encoder.shared." + std::to_string(i), cfg_.d_model, cfg_.n_heads, cfg_.ffn_dim);
    for (int k = 0; k < kNumFactors; ++k)
      factor_[k] = Block("encoder.factor." + std::to_string(k), cfg_.d_model, cfg_.n_heads, cfg_.ffn_dim);
    positions_ = sinusoidal_positions<Scalar>(cfg_.max_len, cfg_.d_model);
    init();
  }

  const EncoderConfig& config() const { return cfg_; }

  /// Deterministic initialization from the config seed; each sub-block draws
  /// from its own derived stream.
  void init() {
    Rng emb_rng(derive_seed(cfg_.seed, "encoder.embedding"));
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
    for (Eigen::Index i = 0; i < embedding_.value.size(); ++i)
      embedding_.value.data()[i] = static_cast<Scalar>(emb_rng.normal() * scale);
    for (int i = 0; i < cfg_.n_shared_layers; ++i) {
      Rng rng(derive_seed(cfg_.seed, "encoder.shared." + std::to_string(i)));
      shared_[static_cast<std::size_t>(i)].init(rng);
    }
    for (int k = 0; k < kNumFactors; ++k)
      init_factor_layer(k, derive_seed(cfg_.seed, "encoder.factor." + std::to_string(k)));
  }

  void init_factor_layer(int k, std::uint64_t seed) {
    Rng rng(seed);
    factor_[static_cast<std::size_t>(k)].init(rng);
  }

  /// Shared encoder output: (len, d_model), row 0 is CLS. PAD keys are masked.
  Matrix<Scalar> encode(std::span<const int> tokens, Cache& c, const ForwardContext& ctx) const {
    const auto len = static_cast<Eigen::Index>(tokens.size());
    if (len < 1 || len > cfg_.max_len)
      throw std::invalid_argument("encode: sequence length " + std::to_string(len) + " outside [1, max_len]");
    c.tokens.assign(tokens.begin(), tokens.end());
    c.pad.assign(tokens.size(), 0);
    Matrix<Scalar> x(len, cfg_.d_model);
    for (Eigen::Index i = 0; i < len; ++i) {
      const int id = tokens[static_cast<std::size_t>(i)];
      if (id < 0 || id >= cfg_.vocab_size)
        throw std::out_of_range("encode: token id " + std::to_string(id) + " >= vocab_size " +
                                std::to_string(cfg_.vocab_size));
      c.pad[static_cast<std::size_t>(i)] = (id == 0 && i > 0) ? 1 : 0;
      x.row(i) = embedding_.value.row(id) + positions_.row(i);
    }
    c.shared.resize(shared_.size());
    for (std::size_t l = 0; l < shared_.size(); ++l) x = shared_[l].forward(x, c.pad, c.shared[l], ctx);
    return x;
  }

  FactorSet<Scalar> extract_factors(const Matrix<Scalar>& h, Cache& c, const ForwardContext& ctx) const {
    if (h.cols() != cfg_.d_model) throw std::invalid_argument("extract_factors: hidden width mismatch");
    FactorSet<Scalar> fs;
    for (int k = 0; k < kNumFactors; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      const Matrix<Scalar> out = factor_[ku].forward(h, c.pad, c.factor[ku], ctx);
      fs[k] = out.row(0).transpose();
    }
    return fs;
  }

  FactorSet<Scalar> forward(std::span<const int> tokens, Cache& c, const ForwardContext& ctx) const {
    const Matrix<Scalar> h = encode(tokens, c, ctx);
    return extract_factors(h, c, ctx);
  }

  /// Backpropagates dL/df_k (any may be empty to mean zero) into all encoder parameters.
  void backward(const Cache& c, const FactorSet<Scalar>& dfactors) {
    const auto len = static_cast<Eigen::Index>(c.tokens.size());
    Matrix<Scalar> dh = Matrix<Scalar>::Zero(len, cfg_.d_model);
    for (int k = 0; k < kNumFactors; ++k) {
      const auto& df = dfactors[k];
      if (df.size() == 0) continue;
      Matrix<Scalar> dout = Matrix<Scalar>::Zero(len, cfg_.d_model);
      dout.row(0) = df.transpose();
      dh += factor_[static_cast<std::size_t>(k)].backward(c.factor[static_cast<std::size_t>(k)], dout);
    }
    for (std::size_t l = shared_.size(); l-- > 0;) dh = shared_[l].backward(c.shared[l], dh);
    for (Eigen::Index i = 0; i < len; ++i) embedding_.grad.row(c.tokens[static_cast<std::size_t>(i)]) += dh.row(i);
  }

  void collect(ParamList<Scalar>& out) {
    out.push_back(&embedding_);
    for (auto& b : shared_) b.collect(out);
    for (auto& b : factor_) b.collect(out);
  }

  void collect_factor_layer(int k, ParamList<Scalar>& out) { factor_[static_cast<std::size_t>(k)].collect(out); }

  Block& shared_block(int i) { return shared_[static_cast<std::size_t>(i)]; }
  Block& factor_block(int k) { return factor_[static_cast<std::size_t>(k)]; }

 private:
  EncoderConfig cfg_;
  Param<Scalar> embedding_;
  std::vector<Block> shared_;
  std::array<Block, kNumFactors> factor_;
  Matrix<Scalar> positions_;
};

}  // namespace dlfccm
