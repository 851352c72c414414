#pragma once

#include <array>
#include <span>
#include <vector>

namespace dlfccm {

/// Accuracy and macro-averaged precision/recall/F1, all in [0, 1].
struct EvalMetrics {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

/// Macro averages run over all `n_classes`, including classes that never occur;
/// 0/0 is taken as 0. Throws on empty input or mismatched lengths.
EvalMetrics compute_metrics(std::span<const int> labels, std::span<const int> predictions, int n_classes);

/// (min, Q1, median, Q3, max) with linearly interpolated quartiles.
struct FiveNumber {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

/// Quantile at q in [0,1] of `values`, linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);
FiveNumber five_number_summary(std::span<const double> values);

double median(std::vector<double> values);

}  // namespace dlfccm
