#include "pier/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pier/errors.hpp"

namespace pier {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ContractError("auc: " + std::to_string(scores.size()) + " scores for " +
                        std::to_string(labels.size()) + " labels");
  }
  std::size_t pos = 0;
  for (const int y : labels) {
    if (y != 0 && y != 1) throw ContractError("auc: labels must be 0 or 1");
    pos += static_cast<std::size_t>(y);
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) {
    throw UndefinedMetricError("auc: needs at least one positive and one negative label, got " +
                               std::to_string(pos) + " positive and " + std::to_string(neg) +
                               " negative");
  }
  for (const double s : scores) {
    if (std::isnan(s)) throw NumericError("auc: NaN score");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of positive ranks, ties sharing their average rank.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t tied_pos = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      tied_pos += static_cast<std::size_t>(labels[order[j]]);
      ++j;
    }
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += avg_rank * static_cast<double>(tied_pos);
    i = j;
  }
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

double logloss(std::span<const double> pred, std::span<const int> labels) {
  if (pred.size() != labels.size() || pred.empty()) {
    throw ContractError("logloss: need equal, nonzero lengths, got " +
                        std::to_string(pred.size()) + " and " + std::to_string(labels.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(pred[i], 1e-12, 1.0 - 1e-12);
    s -= labels[i] ? std::log(p) : std::log(1.0 - p);
  }
  return s / static_cast<double>(pred.size());
}

int hr_at_1(std::span<const Permutation> selected, const Permutation& best) {
  return std::find(selected.begin(), selected.end(), best) != selected.end() ? 1 : 0;
}

}  // namespace pier
