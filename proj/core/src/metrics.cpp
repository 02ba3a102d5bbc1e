#include "leakage/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "leakage/error.hpp"

namespace leakage {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of positive ranks with mid-ranks for tied groups.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) {
        rank_sum += mid;
        ++n_pos;
      } else if (labels[order[t]] != 0) {
        throw DomainError("auc: labels must be 0 or 1");
      }
    }
    i = j;
  }
  const std::size_t n_neg = order.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DegenerateVariableError("auc: labels contain a single class");
  const auto np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

namespace {

double f1_for_class(std::span<const int> predicted, std::span<const int> labels, int cls) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predicted[i] == cls;
    const bool t = labels[i] == cls;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
  }
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace

double f1_binary(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw ShapeError("f1: length mismatch");
  return f1_for_class(predicted, labels, 1);
}

double f1_macro(std::span<const int> predicted, std::span<const int> labels, int num_classes) {
  if (predicted.size() != labels.size()) throw ShapeError("f1: length mismatch");
  double total = 0.0;
  for (int c = 0; c < num_classes; ++c) total += f1_for_class(predicted, labels, c);
  return total / num_classes;
}

double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw ShapeError("accuracy: length mismatch");
  if (labels.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predicted[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace leakage
