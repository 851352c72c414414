#pragma once

#include "dlfccm/core.hpp"

#include <string>
#include <vector>

namespace dlfccm {

/// Per-call forward state: dropout is live only when `training` is set.
struct ForwardContext {
  bool training = false;
  double dropout_rate = 0.0;
  Rng* rng = nullptr;

  bool dropout_active() const { return training && dropout_rate > 0.0 && rng != nullptr; }
};

/// y = W x + b. Row-batched inputs are (n, in).
template <typename Scalar>
struct Affine {
  Param<Scalar> weight;
  Param<Scalar> bias;

  Affine() = default;
  Affine(const std::string& prefix, Eigen::Index in, Eigen::Index out)
      : weight(prefix + ".weight", out, in), bias(prefix + ".bias", out, 1) {}

  Eigen::Index in_dim() const { return weight.value.cols(); }
  Eigen::Index out_dim() const { return weight.value.rows(); }

  void init(Rng& rng) {
    glorot_uniform(weight.value, rng);
    bias.value.setZero();
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) const {
    Matrix<Scalar> y = x * weight.value.transpose();
    y.rowwise() += bias.value.col(0).transpose();
    return y;
  }

  Vector<Scalar> forward_vec(const Vector<Scalar>& x) const {
    return weight.value * x + bias.value.col(0);
  }

  /// Returns dL/dx; parameter gradients accumulate only when `accumulate`.
  Matrix<Scalar> backward(const Matrix<Scalar>& x, const Matrix<Scalar>& dy, bool accumulate = true) {
    if (accumulate) {
      weight.grad.noalias() += dy.transpose() * x;
      bias.grad.col(0) += dy.colwise().sum().transpose();
    }
    return dy * weight.value;
  }

  Vector<Scalar> backward_vec(const Vector<Scalar>& x, const Vector<Scalar>& dy, bool accumulate = true) {
    if (accumulate) {
      weight.grad.noalias() += dy * x.transpose();
      bias.grad.col(0) += dy;
    }
    return weight.value.transpose() * dy;
  }

  void collect(ParamList<Scalar>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

/// Per-row normalization over the feature axis followed by gamma/beta.
template <typename Scalar>
struct LayerNorm {
  static constexpr double kEps = 1e-5;

  struct Cache {
    Matrix<Scalar> xhat;
    Vector<Scalar> inv_std;
  };

  Param<Scalar> gamma;
  Param<Scalar> beta;

  LayerNorm() = default;
  LayerNorm(const std::string& prefix, Eigen::Index dim)
      : gamma(prefix + ".gamma", dim, 1), beta(prefix + ".beta", dim, 1) {
    gamma.value.setOnes();
  }

  /// Normalized rows before the affine rescale.
  static Matrix<Scalar> normalize(const Matrix<Scalar>& x, Vector<Scalar>* inv_std = nullptr) {
    const Eigen::Index n = x.rows();
    const Scalar d = static_cast<Scalar>(x.cols());
    Matrix<Scalar> xhat(n, x.cols());
    if (inv_std != nullptr) inv_std->resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const Scalar mu = x.row(r).sum() / d;
      const Scalar var = (x.row(r).array() - mu).square().sum() / d;
      const Scalar is = Scalar(1) / std::sqrt(var + static_cast<Scalar>(kEps));
      xhat.row(r) = (x.row(r).array() - mu) * is;
      if (inv_std != nullptr) (*inv_std)[r] = is;
    }
    return xhat;
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache& c) const {
    c.xhat = normalize(x, &c.inv_std);
    Matrix<Scalar> y = c.xhat.array().rowwise() * gamma.value.col(0).transpose().array();
    y.rowwise() += beta.value.col(0).transpose();
    return y;
  }

  Matrix<Scalar> backward(const Cache& c, const Matrix<Scalar>& dy) {
    gamma.grad.col(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix().transpose();
    beta.grad.col(0) += dy.colwise().sum().transpose();
    const Matrix<Scalar> dxhat = dy.array().rowwise() * gamma.value.col(0).transpose().array();
    const Scalar d = static_cast<Scalar>(dy.cols());
    Matrix<Scalar> dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      const Scalar mean_d = dxhat.row(r).sum() / d;
      const Scalar mean_dx = dxhat.row(r).dot(c.xhat.row(r)) / d;
      dx.row(r) = c.inv_std[r] * (dxhat.row(r).array() - mean_d - c.xhat.row(r).array() * mean_dx);
    }
    return dx;
  }

  void collect(ParamList<Scalar>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

/// Multi-head scaled dot-product self-attention. `pad[j]` masks key j.
template <typename Scalar>
struct MultiHeadAttention {
  struct Cache {
    Matrix<Scalar> x, q, k, v, concat;
    std::vector<Matrix<Scalar>> attn;  // one (L, L) row-stochastic matrix per head
  };

  int n_heads = 1;
  Affine<Scalar> wq, wk, wv, wo;

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& prefix, Eigen::Index d_model, int heads)
      : n_heads(heads),
        wq(prefix + ".q", d_model, d_model),
        wk(prefix + ".k", d_model, d_model),
        wv(prefix + ".v", d_model, d_model),
        wo(prefix + ".o", d_model, d_model) {}

  void init(Rng& rng) {
    wq.init(rng);
    wk.init(rng);
    wv.init(rng);
    wo.init(rng);
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, const std::vector<char>& pad, Cache& c) const {
    const Eigen::Index len = x.rows();
    const Eigen::Index dh = x.cols() / n_heads;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
    c.x = x;
    c.q = wq.forward(x);
    c.k = wk.forward(x);
    c.v = wv.forward(x);
    c.concat.resize(len, x.cols());
    c.attn.assign(n_heads, Matrix<Scalar>());
    for (int h = 0; h < n_heads; ++h) {
      Matrix<Scalar> s = (c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose()) * scale;
      for (Eigen::Index i = 0; i < len; ++i) {
        Scalar m = -std::numeric_limits<Scalar>::infinity();
        for (Eigen::Index j = 0; j < len; ++j)
          if (!pad[j]) m = std::max(m, s(i, j));
        Scalar total = 0;
        for (Eigen::Index j = 0; j < len; ++j) {
          s(i, j) = pad[j] ? Scalar(0) : std::exp(s(i, j) - m);
          total += s(i, j);
        }
        s.row(i) /= total;
      }
      c.concat.middleCols(h * dh, dh).noalias() = s * c.v.middleCols(h * dh, dh);
      c.attn[h] = std::move(s);
    }
    return wo.forward(c.concat);
  }

  Matrix<Scalar> backward(const Cache& c, const Matrix<Scalar>& dy) {
    const Eigen::Index len = c.x.rows();
    const Eigen::Index dh = c.x.cols() / n_heads;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
    const Matrix<Scalar> dconcat = wo.backward(c.concat, dy);
    Matrix<Scalar> dq(len, c.x.cols()), dk(len, c.x.cols()), dv(len, c.x.cols());
    for (int h = 0; h < n_heads; ++h) {
      const auto& a = c.attn[h];
      const Matrix<Scalar> dout = dconcat.middleCols(h * dh, dh);
      const Matrix<Scalar> da = dout * c.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh).noalias() = a.transpose() * dout;
      const Vector<Scalar> row_dot = (da.array() * a.array()).rowwise().sum();
      const Matrix<Scalar> ds = ((a.array() * (da.array().colwise() - row_dot.array())) * scale).matrix();
      dq.middleCols(h * dh, dh).noalias() = ds * c.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh).noalias() = ds.transpose() * c.q.middleCols(h * dh, dh);
    }
    Matrix<Scalar> dx = wq.backward(c.x, dq);
    dx += wk.backward(c.x, dk);
    dx += wv.backward(c.x, dv);
    return dx;
  }

  void collect(ParamList<Scalar>& out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
  }
};

/// tanh-approximated GELU.
template <typename Scalar>
inline Scalar gelu(Scalar x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  return Scalar(0.5) * x * (Scalar(1) + std::tanh(Scalar(c) * (x + Scalar(0.044715) * x * x * x)));
}

template <typename Scalar>
inline Scalar gelu_grad(Scalar x) {
  constexpr double c = 0.7978845608028654;
  const Scalar u = Scalar(c) * (x + Scalar(0.044715) * x * x * x);
  const Scalar t = std::tanh(u);
  const Scalar du = Scalar(c) * (Scalar(1) + Scalar(3 * 0.044715) * x * x);
  return Scalar(0.5) * (Scalar(1) + t) + Scalar(0.5) * x * (Scalar(1) - t * t) * du;
}

template <typename Scalar>
struct FeedForward {
  struct Cache {
    Matrix<Scalar> x, pre, hidden;
  };

  Affine<Scalar> fc1, fc2;

  FeedForward() = default;
  FeedForward(const std::string& prefix, Eigen::Index d_model, Eigen::Index ffn_dim)
      : fc1(prefix + ".fc1", d_model, ffn_dim), fc2(prefix + ".fc2", ffn_dim, d_model) {}

  void init(Rng& rng) {
    fc1.init(rng);
    fc2.init(rng);
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache& c) const {
    c.x = x;
    c.pre = fc1.forward(x);
    c.hidden = c.pre.unaryExpr([](Scalar v) { return gelu(v); });
    return fc2.forward(c.hidden);
  }

  Matrix<Scalar> backward(const Cache& c, const Matrix<Scalar>& dy) {
    Matrix<Scalar> dh = fc2.backward(c.hidden, dy);
    dh.array() *= c.pre.unaryExpr([](Scalar v) { return gelu_grad(v); }).array();
    return fc1.backward(c.x, dh);
  }

  void collect(ParamList<Scalar>& out) {
    fc1.collect(out);
    fc2.collect(out);
  }
};

/// Inverted dropout mask: entries are 0 or 1/(1-p).
template <typename Scalar>
Matrix<Scalar> dropout_mask(Eigen::Index rows, Eigen::Index cols, const ForwardContext& ctx) {
  Matrix<Scalar> m(rows, cols);
  const Scalar keep = static_cast<Scalar>(1.0 / (1.0 - ctx.dropout_rate));
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = ctx.rng->bernoulli(ctx.dropout_rate) ? Scalar(0) : keep;
  return m;
}

/// Post-norm encoder block: attention, add & norm, feed-forward, add & norm.
template <typename Scalar>
struct EncoderBlock {
  struct Cache {
    typename MultiHeadAttention<Scalar>::Cache attn;
    typename FeedForward<Scalar>::Cache ffn;
    typename LayerNorm<Scalar>::Cache ln1, ln2;
    Matrix<Scalar> drop1, drop2;  // empty when dropout is off
  };

  MultiHeadAttention<Scalar> attn;
  LayerNorm<Scalar> ln1;
  FeedForward<Scalar> ffn;
  LayerNorm<Scalar> ln2;

  EncoderBlock() = default;
  EncoderBlock(const std::string& prefix, Eigen::Index d_model, int n_heads, Eigen::Index ffn_dim)
      : attn(prefix + ".attn", d_model, n_heads),
        ln1(prefix + ".ln1", d_model),
        ffn(prefix + ".ffn", d_model, ffn_dim),
        ln2(prefix + ".ln2", d_model) {}

  void init(Rng& rng) {
    attn.init(rng);
    ffn.init(rng);
    ln1.gamma.value.setOnes();
    ln1.beta.value.setZero();
    ln2.gamma.value.setOnes();
    ln2.beta.value.setZero();
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, const std::vector<char>& pad, Cache& c,
                         const ForwardContext& ctx) const {
    Matrix<Scalar> a = attn.forward(x, pad, c.attn);
    if (ctx.dropout_active()) {
      c.drop1 = dropout_mask<Scalar>(a.rows(), a.cols(), ctx);
      a.array() *= c.drop1.array();
    } else {
      c.drop1.resize(0, 0);
    }
    const Matrix<Scalar> x1 = ln1.forward(x + a, c.ln1);
    Matrix<Scalar> f = ffn.forward(x1, c.ffn);
    if (ctx.dropout_active()) {
      c.drop2 = dropout_mask<Scalar>(f.rows(), f.cols(), ctx);
      f.array() *= c.drop2.array();
    } else {
      c.drop2.resize(0, 0);
    }
    return ln2.forward(x1 + f, c.ln2);
  }

  Matrix<Scalar> backward(const Cache& c, const Matrix<Scalar>& dy) {
    Matrix<Scalar> dsum2 = ln2.backward(c.ln2, dy);
    Matrix<Scalar> df = dsum2;
    if (c.drop2.size() > 0) df.array() *= c.drop2.array();
    Matrix<Scalar> dx1 = dsum2 + ffn.backward(c.ffn, df);
    Matrix<Scalar> dsum1 = ln1.backward(c.ln1, dx1);
    Matrix<Scalar> da = dsum1;
    if (c.drop1.size() > 0) da.array() *= c.drop1.array();
    return dsum1 + attn.backward(c.attn, da);
  }

  void collect(ParamList<Scalar>& out) {
    attn.collect(out);
    ln1.collect(out);
    ffn.collect(out);
    ln2.collect(out);
  }
};

}  // namespace dlfccm
