#pragma once

#include <span>
#include <vector>

namespace leakage {

/// Mann-Whitney AUC, ties between a positive and a negative count 1/2.
/// Throws DegenerateVariableError when only one class is present.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Binary F1 of hard predictions against labels (positive class 1). 0 when there are no positives at all.
double f1_binary(std::span<const int> predicted, std::span<const int> labels);

/// Unweighted mean of per-class F1 over classes 0..num_classes-1.
double f1_macro(std::span<const int> predicted, std::span<const int> labels, int num_classes);

double accuracy(std::span<const int> predicted, std::span<const int> labels);

}  // namespace leakage
