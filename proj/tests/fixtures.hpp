#pragma once

#include "dlfccm/corpus.hpp"
#include "dlfccm/encoder.hpp"

#include <vector>

namespace dlfccm::testing {

/// d_model = 8, sequences of 6 tokens, no dropout.
inline EncoderConfig tiny_config(std::uint64_t seed = 11) {
  EncoderConfig c;
  c.vocab_size = 12;
  c.d_model = 8;
  c.n_shared_layers = 1;
  c.n_heads = 2;
  c.ffn_dim = 16;
  c.max_len = 8;
  c.dropout_rate = 0.0;
  c.seed = seed;
  return c;
}

inline std::vector<int> random_tokens(Rng& rng, int len, int vocab) {
  std::vector<int> t{corpus::kCls};
  for (int i = 1; i < len; ++i) t.push_back(3 + static_cast<int>(rng.index(static_cast<std::size_t>(vocab - 3))));
  return t;
}

template <typename Scalar>
Vector<Scalar> random_vector(Rng& rng, Eigen::Index n, double scale = 1.0) {
  Vector<Scalar> v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = static_cast<Scalar>(rng.normal() * scale);
  return v;
}

}  // namespace dlfccm::testing
