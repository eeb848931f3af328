#pragma once

// Domain records shared by every module: items, candidate sets,
// permutations, behavior histories and logged requests.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace pier {

using FeatureId = std::int32_t;

struct Item {
  std::vector<FeatureId> features;  // one id per feature field
  double point_pctr = 0.0;          // upstream point-wise click estimate

  friend bool operator==(const Item&, const Item&) = default;
};

/// Ranking-stage list handed to the re-ranker.
struct CandidateSet {
  std::vector<Item> items;

  std::size_t size() const noexcept { return items.size(); }
  friend bool operator==(const CandidateSet&, const CandidateSet&) = default;
};

/// Ordered selection of distinct indices into a CandidateSet.
struct Permutation {
  std::vector<std::int32_t> item_indices;

  std::size_t size() const noexcept { return item_indices.size(); }
  friend bool operator==(const Permutation&, const Permutation&) = default;
  friend auto operator<=>(const Permutation&, const Permutation&) = default;
};

/// One past clicked permutation, stored as the feature ids of its items in
/// display order. recency_rank 0 is the most recent.
struct Behavior {
  std::vector<std::vector<FeatureId>> items_features;
  std::int32_t recency_rank = 0;

  friend bool operator==(const Behavior&, const Behavior&) = default;
};

/// Most recent first.
using BehaviorSequence = std::vector<Behavior>;

/// One logged request.
struct LogRecord {
  std::int64_t request_id = 0;
  std::int64_t user_id = 0;
  CandidateSet candidates;
  Permutation displayed;
  std::vector<std::int32_t> clicks;  // one 0/1 label per displayed position
  BehaviorSequence behaviors;

  friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

using Dataset = std::vector<LogRecord>;

/// Feature ids of a permutation, row-major [items x fields].
std::vector<FeatureId> permutation_features(const CandidateSet& candidates,
                                            const Permutation& perm);

/// Feature ids of a behavior, row-major [items x fields].
std::vector<FeatureId> behavior_features(const Behavior& behavior);

/// Point pCTRs of a permutation's items in display order.
std::vector<double> permutation_point_scores(const CandidateSet& candidates,
                                             const Permutation& perm);

/// Throws ContractError unless indices are distinct, in range, and the
/// permutation has `length` entries.
void validate_permutation(const Permutation& perm, std::size_t candidate_count,
                          std::size_t length);

}  // namespace pier
