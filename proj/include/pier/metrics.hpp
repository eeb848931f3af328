#pragma once

#include <span>
#include <vector>

#include "pier/types.hpp"

namespace pier {

/// Mann-Whitney statistic with average ranks for ties. Throws
/// UndefinedMetricError unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Mean per-entry BCE with predictions clamped to [1e-12, 1 - 1e-12].
double logloss(std::span<const double> pred, std::span<const int> labels);

/// 1 iff `best` appears, as an exact ordered sequence, in `selected`.
int hr_at_1(std::span<const Permutation> selected, const Permutation& best);

}  // namespace pier
