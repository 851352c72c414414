#pragma once

#include "dlfccm/core.hpp"

#include <vector>

namespace dlfccm {

struct AdamOptions {
  double learning_rate = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam without weight decay. Moment buffers follow the order of `params`.
template <typename Scalar>
class Adam {
 public:
  Adam(ParamList<Scalar> params, AdamOptions opts) : params_(std::move(params)), opts_(opts) {
    for (auto* p : params_) {
      m_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void zero_grad() { zero_grads(params_); }

  void step() {
    ++t_;
    const Scalar b1 = static_cast<Scalar>(opts_.beta1);
    const Scalar b2 = static_cast<Scalar>(opts_.beta2);
    const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(opts_.beta1, t_));
    const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(opts_.beta2, t_));
    const Scalar lr = static_cast<Scalar>(opts_.learning_rate);
    const Scalar eps = static_cast<Scalar>(opts_.eps);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& g = params_[i]->grad;
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g.cwiseAbs2();
      params_[i]->value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
    }
  }

  /// Scales every gradient, e.g. to turn a batch sum into a mean.
  void scale_grads(Scalar s) {
    for (auto* p : params_) p->grad *= s;
  }

  long steps() const { return t_; }
  const ParamList<Scalar>& params() const { return params_; }

 private:
  ParamList<Scalar> params_;
  AdamOptions opts_;
  std::vector<Matrix<Scalar>> m_, v_;
  long t_ = 0;
};

}  // namespace dlfccm
