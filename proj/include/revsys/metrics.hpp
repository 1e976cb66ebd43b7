#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

namespace revsys {

struct BinaryMetrics {
  double precision = 0;
  double recall = 0;
  double auc = 0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  std::size_t true_negatives = 0;
};

/// ROC AUC as the Mann-Whitney statistic; tied scores count one half.
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double positives = 0;
  double negatives = 0;
  double rank_sum = 0;  // sum of (average) ranks of positives, 1-based
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        rank_sum += avg_rank;
        ++positives;
      } else {
        ++negatives;
      }
    }
    i = j;
  }
  if (positives == 0 || negatives == 0) return 0.5;
  return (rank_sum - positives * (positives + 1) / 2.0) / (positives * negatives);
}

/// Predicted positive iff score >= threshold.
inline BinaryMetrics evaluate_scores(std::span<const double> scores, std::span<const int> labels, double threshold) {
  BinaryMetrics m;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    bool predicted = scores[i] >= threshold;
    bool actual = labels[i] != 0;
    if (predicted && actual) ++m.true_positives;
    else if (predicted) ++m.false_positives;
    else if (actual) ++m.false_negatives;
    else ++m.true_negatives;
  }
  auto tp = static_cast<double>(m.true_positives);
  m.precision = m.true_positives + m.false_positives ? tp / static_cast<double>(m.true_positives + m.false_positives) : 0.0;
  m.recall = m.true_positives + m.false_negatives ? tp / static_cast<double>(m.true_positives + m.false_negatives) : 0.0;
  m.auc = roc_auc(scores, labels);
  return m;
}

}  // namespace revsys
