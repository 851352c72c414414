#include "dlfccm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dlfccm {

EvalMetrics compute_metrics(std::span<const int> labels, std::span<const int> predictions, int n_classes) {
  if (labels.empty()) throw std::invalid_argument("compute_metrics: empty dataset");
  if (labels.size() != predictions.size()) throw std::invalid_argument("compute_metrics: length mismatch");
  const auto n = static_cast<std::size_t>(n_classes);
  std::vector<long> tp(n, 0), pred_count(n, 0), true_count(n, 0);
  long correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    const int p = predictions[i];
    if (y < 0 || y >= n_classes || p < 0 || p >= n_classes)
      throw std::invalid_argument("compute_metrics: class index out of range");
    ++true_count[static_cast<std::size_t>(y)];
    ++pred_count[static_cast<std::size_t>(p)];
    if (y == p) {
      ++tp[static_cast<std::size_t>(y)];
      ++correct;
    }
  }
  EvalMetrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  for (std::size_t c = 0; c < n; ++c) {
    const double prec = pred_count[c] == 0 ? 0.0 : static_cast<double>(tp[c]) / static_cast<double>(pred_count[c]);
    const double rec = true_count[c] == 0 ? 0.0 : static_cast<double>(tp[c]) / static_cast<double>(true_count[c]);
    const double f1 = prec + rec == 0.0 ? 0.0 : 2.0 * prec * rec / (prec + rec);
    m.macro_precision += prec;
    m.macro_recall += rec;
    m.macro_f1 += f1;
  }
  m.macro_precision /= static_cast<double>(n_classes);
  m.macro_recall /= static_cast<double>(n_classes);
  m.macro_f1 /= static_cast<double>(n_classes);
  return m;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: empty input");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

FiveNumber five_number_summary(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("five_number_summary: empty input");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  return {v.front(), quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75), v.back()};
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

}  // namespace dlfccm
