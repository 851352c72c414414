#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dlfccm {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline constexpr int kNumFactors = 3;
inline constexpr int kNumHeads = 4;
inline constexpr int kNumRelevance = 4;
inline constexpr double kLogClamp = 1e-12;

/// Trainable tensor with its gradient accumulator. Biases are stored as n x 1.
template <typename Scalar>
struct Param {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Matrix<Scalar>::Zero(rows, cols)),
        grad(Matrix<Scalar>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

template <typename Scalar>
using ParamList = std::vector<Param<Scalar>*>;

template <typename Scalar>
void zero_grads(const ParamList<Scalar>& params) {
  for (auto* p : params) p->zero_grad();
}

/// splitmix64 finalizer; used for seed derivation.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed for a named component, stable across platforms.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(root ^ mix64(h));
}

/// xoshiro256** with hand-rolled distributions so streams do not depend on the
/// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) {
    std::uint64_t s = seed;
    for (auto& w : state_) {
      s = mix64(s);
      w = s;
    }
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::index: empty range");
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t state_[4]{};
};

/// Glorot-uniform fill: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
template <typename Scalar>
void glorot_uniform(Matrix<Scalar>& w, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(rng.uniform(-a, a));
}

template <typename Scalar>
Vector<Scalar> softmax(const Eigen::Ref<const Vector<Scalar>>& z) {
  Vector<Scalar> e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

/// Entropy in nats with probabilities clamped below before the log.
template <typename Scalar>
Scalar entropy(const Eigen::Ref<const Vector<Scalar>>& p) {
  Scalar h = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    h -= p[i] * std::log(std::max(p[i], static_cast<Scalar>(kLogClamp)));
  return h;
}

/// d H(softmax(z)) / dz given p = softmax(z).
template <typename Scalar>
Vector<Scalar> entropy_grad_logits(const Eigen::Ref<const Vector<Scalar>>& p) {
  const Scalar h = entropy<Scalar>(p);
  Vector<Scalar> g(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i)
    g[i] = -p[i] * (std::log(std::max(p[i], static_cast<Scalar>(kLogClamp))) + h);
  return g;
}

/// -log p[label] with clamp, and its gradient w.r.t. the logits.
template <typename Scalar>
Scalar cross_entropy(const Eigen::Ref<const Vector<Scalar>>& p, int label, Vector<Scalar>* dlogits) {
  const Scalar pl = p[label];
  const Scalar clamp = static_cast<Scalar>(kLogClamp);
  if (dlogits != nullptr) {
    if (pl >= clamp) {
      *dlogits = p;
      (*dlogits)[label] -= Scalar(1);
    } else {
      *dlogits = Vector<Scalar>::Zero(p.size());
    }
  }
  return -std::log(std::max(pl, clamp));
}

}  // namespace dlfccm
