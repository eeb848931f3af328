#include "pier/types.hpp"

#include <string>

#include "pier/errors.hpp"

namespace pier {

std::vector<FeatureId> permutation_features(const CandidateSet& candidates,
                                            const Permutation& perm) {
  std::vector<FeatureId> out;
  if (perm.size() == 0) return out;
  out.reserve(perm.size() * candidates.items.at(perm.item_indices[0]).features.size());
  for (const auto idx : perm.item_indices) {
    const auto& feats = candidates.items.at(static_cast<std::size_t>(idx)).features;
    out.insert(out.end(), feats.begin(), feats.end());
  }
  return out;
}

std::vector<FeatureId> behavior_features(const Behavior& behavior) {
  std::vector<FeatureId> out;
  for (const auto& item : behavior.items_features) out.insert(out.end(), item.begin(), item.end());
  return out;
}

std::vector<double> permutation_point_scores(const CandidateSet& candidates,
                                             const Permutation& perm) {
  std::vector<double> out;
  out.reserve(perm.size());
  for (const auto idx : perm.item_indices) {
    out.push_back(candidates.items.at(static_cast<std::size_t>(idx)).point_pctr);
  }
  return out;
}

void validate_permutation(const Permutation& perm, std::size_t candidate_count,
                          std::size_t length) {
  if (perm.size() != length) {
    throw ContractError("permutation has " + std::to_string(perm.size()) + " items, expected " +
                        std::to_string(length));
  }
  std::vector<bool> seen(candidate_count, false);
  for (const auto idx : perm.item_indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= candidate_count) {
      throw ContractError("permutation index " + std::to_string(idx) + " outside " +
                          std::to_string(candidate_count) + " candidates");
    }
    if (seen[static_cast<std::size_t>(idx)]) {
      throw ContractError("permutation repeats index " + std::to_string(idx));
    }
    seen[static_cast<std::size_t>(idx)] = true;
  }
}

}  // namespace pier
