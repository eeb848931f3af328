#include "pier/permgen.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <string>

#include "pier/errors.hpp"

namespace pier {

std::size_t arrangement_count(std::size_t n_items, std::size_t n_display) {
  if (n_display > n_items) return 0;
  std::size_t total = 1;
  for (std::size_t i = 0; i < n_display; ++i) {
    const std::size_t factor = n_items - i;
    if (total > std::numeric_limits<std::size_t>::max() / factor) {
      return std::numeric_limits<std::size_t>::max();
    }
    total *= factor;
  }
  return total;
}

std::vector<Permutation> enumerate_permutations(std::size_t n_items, std::size_t n_display,
                                                bool unsafe) {
  if (n_display < 1 || n_display > n_items ||
      (!unsafe && n_items > kMaxEnumerationItems)) {
    throw ContractError("enumerate_permutations(" + std::to_string(n_items) + ", " +
                        std::to_string(n_display) + ") would yield " +
                        std::to_string(arrangement_count(n_items, n_display)) +
                        " arrangements; requires 1 <= N_d <= N_o <= " +
                        std::to_string(kMaxEnumerationItems));
  }
  std::vector<Permutation> out;
  out.reserve(arrangement_count(n_items, n_display));
  std::vector<std::int32_t> prefix;
  std::vector<bool> used(n_items, false);
  // Depth-first in ascending index order yields lexicographic output.
  auto recurse = [&](auto&& self) -> void {
    if (prefix.size() == n_display) {
      out.push_back(Permutation{prefix});
      return;
    }
    for (std::size_t i = 0; i < n_items; ++i) {
      if (used[i]) continue;
      used[i] = true;
      prefix.push_back(static_cast<std::int32_t>(i));
      self(self);
      prefix.pop_back();
      used[i] = false;
    }
  };
  recurse(recurse);
  return out;
}

BeamResult beam_search_generate(const CandidateSet& candidates, std::size_t n_display,
                                std::size_t k) {
  const std::size_t n = candidates.size();
  if (k < 1) throw ContractError("beam search needs K >= 1");
  if (n_display < 1 || n_display > n) {
    throw ContractError("beam search: N_d = " + std::to_string(n_display) + " with " +
                        std::to_string(n) + " candidates");
  }
  struct Partial {
    std::vector<std::int32_t> seq;
    double score = 0.0;
  };
  const auto better = [](const Partial& a, const Partial& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.seq < b.seq;
  };
  std::vector<Partial> beam{Partial{}};
  for (std::size_t step = 0; step < n_display; ++step) {
    std::vector<Partial> grown;
    grown.reserve(beam.size() * (n - step));
    for (const Partial& p : beam) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto idx = static_cast<std::int32_t>(i);
        if (std::find(p.seq.begin(), p.seq.end(), idx) != p.seq.end()) continue;
        Partial next = p;
        next.seq.push_back(idx);
        next.score += candidates.items[i].point_pctr;
        grown.push_back(std::move(next));
      }
    }
    const std::size_t keep = std::min(k, grown.size());
    std::partial_sort(grown.begin(), grown.begin() + static_cast<std::ptrdiff_t>(keep),
                      grown.end(), better);
    grown.resize(keep);
    beam = std::move(grown);
  }
  BeamResult result;
  result.truncated = beam.size() < k;
  for (Partial& p : beam) {
    result.scores.push_back(p.score);
    result.permutations.push_back(Permutation{std::move(p.seq)});
  }
  return result;
}

std::vector<Permutation> random_generate(const CandidateSet& candidates, std::size_t n_display,
                                         std::size_t k, std::uint64_t seed) {
  const std::size_t total = arrangement_count(candidates.size(), n_display);
  if (k > total) {
    throw ContractError("random_generate: K = " + std::to_string(k) + " exceeds " +
                        std::to_string(total) + " arrangements");
  }
  std::vector<Permutation> all = enumerate_permutations(candidates.size(), n_display);
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first k slots become a uniform sample.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(k);
  return all;
}

}  // namespace pier
