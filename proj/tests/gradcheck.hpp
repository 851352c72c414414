#pragma once

// Central finite-difference oracle. Independent of the analytic backward code:
// it only ever calls the scalar loss closure.

#include "dlfccm/core.hpp"

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

namespace dlfccm::testing {

// Tensors whose true gradient is (near) zero only see round-off noise of about
// 1e-10 per entry; the floor keeps that from reading as a 100% error.
inline constexpr double kNormFloor = 1e-4;

struct TensorCheck {
  std::string name;
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic|| + ||numeric||, kNormFloor)
  double max_abs = 0.0;
  double numeric_norm = 0.0;
};

inline Matrix<double> numeric_gradient(Param<double>& p, const std::function<double()>& loss, double h = 1e-6) {
  Matrix<double> g(p.value.rows(), p.value.cols());
  for (Eigen::Index i = 0; i < p.value.size(); ++i) {
    double& x = p.value.data()[i];
    const double saved = x;
    x = saved + h;
    const double up = loss();
    x = saved - h;
    const double down = loss();
    x = saved;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

inline double relative_error(const Matrix<double>& a, const Matrix<double>& n) {
  const double denom = std::max(a.norm() + n.norm(), kNormFloor);
  return (a - n).norm() / denom;
}

/// Compares the gradients already accumulated in each param against finite differences.
inline std::vector<TensorCheck> check_gradients(const ParamList<double>& params, const std::function<double()>& loss) {
  std::vector<TensorCheck> out;
  for (auto* p : params) {
    const Matrix<double> num = numeric_gradient(*p, loss);
    TensorCheck c;
    c.name = p->name;
    c.rel_error = relative_error(p->grad, num);
    c.max_abs = (p->grad - num).cwiseAbs().maxCoeff();
    c.numeric_norm = num.norm();
    out.push_back(c);
  }
  return out;
}

inline double worst(const std::vector<TensorCheck>& checks) {
  double w = 0.0;
  for (const auto& c : checks) w = std::max(w, c.rel_error);
  return w;
}

}  // namespace dlfccm::testing
