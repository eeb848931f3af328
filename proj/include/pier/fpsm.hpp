#pragma once

// Permutation selection by time-aware SimHash distance.
//
// A permutation is summarized as h = (1/N_f) sum_j avgpool_items(E_j * PE),
// hashed with one fixed random-projection bank per behavior slot, and scored
// by the recency-weighted Hamming distance between its signatures and those
// of the user's clicked permutations. The K closest candidates survive.
// Nothing here is trainable; signatures follow the shared embedding table.

#include <cstdint>
#include <span>
#include <vector>

#include "pier/embedding.hpp"
#include "pier/types.hpp"

namespace pier {

inline constexpr std::size_t kDefaultSignatureBits = 48;
inline constexpr double kDefaultTimeDecay = 0.8;

/// M banks of B x D standard-normal projection rows, fixed at construction.
class HashFamily {
 public:
  HashFamily() = default;
  HashFamily(std::size_t banks, std::size_t bits, std::size_t dim, std::uint64_t seed);

  std::size_t banks() const noexcept { return banks_.size(); }
  std::size_t bits() const noexcept { return bits_; }
  std::size_t dim() const noexcept { return dim_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const Tensor& bank(std::size_t m) const { return banks_.at(m); }

  friend bool operator==(const HashFamily&, const HashFamily&) = default;

 private:
  std::vector<Tensor> banks_;
  std::size_t bits_ = 0;
  std::size_t dim_ = 0;
  std::uint64_t seed_ = 0;
};

/// Packed sign bits; bit b set iff bank row b . h >= 0.
class Signature {
 public:
  Signature() = default;
  explicit Signature(std::size_t bits);

  std::size_t bits() const noexcept { return bits_; }
  bool test(std::size_t b) const { return (words_[b / 64] >> (b % 64)) & 1u; }
  void set(std::size_t b) { words_[b / 64] |= std::uint64_t{1} << (b % 64); }
  std::span<const std::uint64_t> words() const noexcept { return words_; }

  friend bool operator==(const Signature&, const Signature&) = default;

 private:
  std::vector<std::uint64_t> words_;
  std::size_t bits_ = 0;
};

/// Permutation representation h (length D) from an [N_d x N_f x D]
/// embedding and the [N_d x D] position encoding.
Tensor perm_representation(const Tensor& perm_embedding, const Tensor& pe);

/// Same, straight from feature ids [N_d x N_f].
Tensor perm_representation(std::span<const FeatureId> features, const EmbeddingTable& table);

Signature simhash(std::span<const double> h, const Tensor& bank);

/// Number of differing bits; ContractError on length mismatch.
int hamming(const Signature& a, const Signature& b);

/// w_m proportional to decay^m for m in [0, count), normalized to sum 1.
/// decay = 1 gives uniform weights.
std::vector<double> time_weights(std::size_t count, double decay = kDefaultTimeDecay);

/// Scores candidates against one user's behavior history. Behavior m is
/// hashed with bank m; its signature is computed once at construction.
class FpsmScorer {
 public:
  FpsmScorer(const EmbeddingTable& table, const HashFamily& family,
             const BehaviorSequence& behaviors, std::span<const double> weights);

  /// Time-aware Hamming distance of a permutation given by its feature ids.
  /// With no behaviors the neutral score B/2 is returned.
  double distance(std::span<const FeatureId> perm_features) const;

 private:
  const EmbeddingTable& table_;
  const HashFamily& family_;
  std::vector<Signature> behavior_signatures_;
  std::vector<double> weights_;
};

/// d_k = sum_m w_m * hamming(simhash(h_perm, bank_m), simhash(h_b_m, bank_m)).
/// Requires |weights| == |behaviors| <= banks.
double time_aware_distance(const CandidateSet& candidates, const Permutation& perm,
                           const BehaviorSequence& behaviors, const HashFamily& family,
                           std::span<const double> weights, const EmbeddingTable& table);

/// Indices (into `candidates`) of the K smallest distances, ascending by
/// distance with ties broken by candidate index.
std::vector<std::size_t> select_top_k_indices(const CandidateSet& items,
                                              std::span<const Permutation> candidates,
                                              std::size_t k, const BehaviorSequence& behaviors,
                                              const HashFamily& family,
                                              std::span<const double> weights,
                                              const EmbeddingTable& table);

std::vector<Permutation> select_top_k(const CandidateSet& items,
                                      std::span<const Permutation> candidates, std::size_t k,
                                      const BehaviorSequence& behaviors, const HashFamily& family,
                                      std::span<const double> weights,
                                      const EmbeddingTable& table);

}  // namespace pier
