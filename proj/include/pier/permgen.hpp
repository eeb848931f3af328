#pragma once

#include <cstdint>
#include <vector>

#include "pier/types.hpp"

namespace pier {

/// Guard on N_o for exhaustive enumeration; 10 items / 3 slots gives 720.
inline constexpr std::size_t kMaxEnumerationItems = 10;

/// N_o! / (N_o - N_d)!, saturating at SIZE_MAX.
std::size_t arrangement_count(std::size_t n_items, std::size_t n_display);

/// All k-permutations of [0, n_items) in lexicographic order. Requires
/// 1 <= n_display <= n_items <= kMaxEnumerationItems unless `unsafe`.
std::vector<Permutation> enumerate_permutations(std::size_t n_items, std::size_t n_display,
                                                bool unsafe = false);

struct BeamResult {
  std::vector<Permutation> permutations;  // best first
  std::vector<double> scores;             // cumulative point pCTR
  /// Set when fewer than K sequences were reachable.
  bool truncated = false;
};

/// Position-by-position beam search of width K scored by cumulative
/// point-wise pCTR. Equal scores are ordered by index sequence.
BeamResult beam_search_generate(const CandidateSet& candidates, std::size_t n_display,
                                std::size_t k);

/// K distinct permutations drawn uniformly without replacement from the
/// enumeration, reproducible from `seed`, returned in draw order.
std::vector<Permutation> random_generate(const CandidateSet& candidates, std::size_t n_display,
                                         std::size_t k, std::uint64_t seed);

}  // namespace pier
