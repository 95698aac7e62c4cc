#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

#include "pebg/error.hpp"

namespace pebg {

struct Prediction {
  double probability = 0.0;
  bool label = false;
  std::size_t student = 0;
  std::size_t question = 0;
};

using PredictionSet = std::vector<Prediction>;

/// Mann-Whitney AUC: fraction of (positive, negative) pairs ranked correctly,
/// ties counted as one half. Twice the statistic is accumulated as an integer
/// so the result equals the pairwise definition exactly.
inline double auc(std::vector<double> scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::uint64_t negatives_below = 0, positives = 0, negatives = 0;
  std::uint64_t twice_u = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? pos : neg) += 1;
      ++j;
    }
    twice_u += pos * (2 * negatives_below + neg);
    negatives_below += neg;
    positives += pos;
    negatives += neg;
    i = j;
  }
  if (positives == 0 || negatives == 0) throw DataError("AUC is undefined unless both labels are present");
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

inline double auc(const PredictionSet& predictions) {
  std::vector<double> scores;
  std::vector<bool> labels;
  scores.reserve(predictions.size());
  labels.reserve(predictions.size());
  for (const auto& p : predictions) {
    scores.push_back(p.probability);
    labels.push_back(p.label);
  }
  return auc(std::move(scores), labels);
}

}  // namespace pebg
