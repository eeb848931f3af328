#include "pier/fpsm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "pier/errors.hpp"

namespace pier {

HashFamily::HashFamily(std::size_t banks, std::size_t bits, std::size_t dim, std::uint64_t seed)
    : bits_(bits), dim_(dim), seed_(seed) {
  if (bits == 0 || dim == 0) throw ContractError("hash family needs bits >= 1 and dim >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  banks_.reserve(banks);
  for (std::size_t m = 0; m < banks; ++m) {
    Tensor bank({bits, dim});
    for (double& v : bank.values()) v = normal(rng);
    banks_.push_back(std::move(bank));
  }
}

Signature::Signature(std::size_t bits) : words_((bits + 63) / 64, 0), bits_(bits) {}

Tensor perm_representation(const Tensor& perm_embedding, const Tensor& pe) {
  if (perm_embedding.rank() != 3 || pe.rank() != 2 || perm_embedding.shape()[0] != pe.rows() ||
      perm_embedding.shape()[2] != pe.cols()) {
    throw DimensionError("perm_representation: embedding " +
                         shape_string(perm_embedding.shape()) + " vs position encoding " +
                         shape_string(pe.shape()));
  }
  const std::size_t nd = perm_embedding.shape()[0];
  const std::size_t nf = perm_embedding.shape()[1];
  const std::size_t d = perm_embedding.shape()[2];
  Tensor h({d});
  const double norm = 1.0 / static_cast<double>(nd * nf);
  for (std::size_t i = 0; i < nd; ++i) {
    for (std::size_t j = 0; j < nf; ++j) {
      const double* e = perm_embedding.data() + (i * nf + j) * d;
      for (std::size_t c = 0; c < d; ++c) h[c] += e[c] * pe.at(i, c);
    }
  }
  for (double& v : h.values()) v *= norm;
  return h;
}

Tensor perm_representation(std::span<const FeatureId> features, const EmbeddingTable& table) {
  const std::size_t nf = table.fields(), d = table.dim();
  if (nf == 0 || features.size() % nf != 0) {
    throw DimensionError("perm_representation: " + std::to_string(features.size()) +
                         " ids do not split into " + std::to_string(nf) + " fields");
  }
  const std::size_t nd = features.size() / nf;
  const Tensor& pe = position_encoding(nd, d);
  // Same accumulation order as the tensor overload.
  Tensor h({d});
  for (std::size_t i = 0; i < nd; ++i) {
    for (std::size_t j = 0; j < nf; ++j) {
      const auto e = table.lookup(j, features[i * nf + j]);
      for (std::size_t c = 0; c < d; ++c) h[c] += e[c] * pe.at(i, c);
    }
  }
  const double norm = 1.0 / static_cast<double>(nd * nf);
  for (double& v : h.values()) v *= norm;
  return h;
}

Signature simhash(std::span<const double> h, const Tensor& bank) {
  if (bank.cols() != h.size()) {
    throw DimensionError("simhash: bank " + shape_string(bank.shape()) + " vs vector of " +
                         std::to_string(h.size()));
  }
  Signature sig(bank.rows());
  for (std::size_t b = 0; b < bank.rows(); ++b) {
    const double* row = bank.data() + b * h.size();
    double dot = 0.0;
    for (std::size_t c = 0; c < h.size(); ++c) dot += row[c] * h[c];
    if (dot >= 0.0) sig.set(b);
  }
  return sig;
}

int hamming(const Signature& a, const Signature& b) {
  if (a.bits() != b.bits()) {
    throw ContractError("hamming: signatures of " + std::to_string(a.bits()) + " and " +
                        std::to_string(b.bits()) + " bits");
  }
  int total = 0;
  const auto wa = a.words(), wb = b.words();
  for (std::size_t i = 0; i < wa.size(); ++i) total += std::popcount(wa[i] ^ wb[i]);
  return total;
}

std::vector<double> time_weights(std::size_t count, double decay) {
  if (!(decay > 0.0 && decay <= 1.0)) {
    throw ContractError("time decay must lie in (0, 1], got " + std::to_string(decay));
  }
  std::vector<double> w(count);
  double acc = 1.0, total = 0.0;
  for (std::size_t m = 0; m < count; ++m) {
    w[m] = acc;
    total += acc;
    acc *= decay;
  }
  for (double& v : w) v /= total;
  return w;
}

FpsmScorer::FpsmScorer(const EmbeddingTable& table, const HashFamily& family,
                       const BehaviorSequence& behaviors, std::span<const double> weights)
    : table_(table), family_(family), weights_(weights.begin(), weights.end()) {
  if (weights.size() != behaviors.size()) {
    throw ContractError("time-aware distance: " + std::to_string(behaviors.size()) +
                        " behaviors but " + std::to_string(weights.size()) + " weights");
  }
  if (behaviors.size() > family.banks()) {
    throw ContractError("time-aware distance: " + std::to_string(behaviors.size()) +
                        " behaviors but only " + std::to_string(family.banks()) + " hash banks");
  }
  behavior_signatures_.reserve(behaviors.size());
  for (std::size_t m = 0; m < behaviors.size(); ++m) {
    const auto feats = behavior_features(behaviors[m]);
    const Tensor h = perm_representation(feats, table);
    behavior_signatures_.push_back(simhash(h.values(), family.bank(m)));
  }
}

double FpsmScorer::distance(std::span<const FeatureId> perm_features) const {
  if (behavior_signatures_.empty()) return static_cast<double>(family_.bits()) / 2.0;
  const Tensor h = perm_representation(perm_features, table_);
  double d = 0.0;
  for (std::size_t m = 0; m < behavior_signatures_.size(); ++m) {
    const Signature sig = simhash(h.values(), family_.bank(m));
    d += weights_[m] * hamming(sig, behavior_signatures_[m]);
  }
  return d;
}

double time_aware_distance(const CandidateSet& candidates, const Permutation& perm,
                           const BehaviorSequence& behaviors, const HashFamily& family,
                           std::span<const double> weights, const EmbeddingTable& table) {
  const FpsmScorer scorer(table, family, behaviors, weights);
  return scorer.distance(permutation_features(candidates, perm));
}

std::vector<std::size_t> select_top_k_indices(const CandidateSet& items,
                                              std::span<const Permutation> candidates,
                                              std::size_t k, const BehaviorSequence& behaviors,
                                              const HashFamily& family,
                                              std::span<const double> weights,
                                              const EmbeddingTable& table) {
  if (k > candidates.size()) {
    throw ContractError("select_top_k: K = " + std::to_string(k) + " exceeds " +
                        std::to_string(candidates.size()) + " candidates");
  }
  const FpsmScorer scorer(table, family, behaviors, weights);
  std::vector<double> dist(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    dist[i] = scorer.distance(permutation_features(items, candidates[i]));
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto closer = [&](std::size_t a, std::size_t b) {
    return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    closer);
  order.resize(k);
  return order;
}

std::vector<Permutation> select_top_k(const CandidateSet& items,
                                      std::span<const Permutation> candidates, std::size_t k,
                                      const BehaviorSequence& behaviors, const HashFamily& family,
                                      std::span<const double> weights,
                                      const EmbeddingTable& table) {
  std::vector<Permutation> out;
  for (const std::size_t i :
       select_top_k_indices(items, candidates, k, behaviors, family, weights, table)) {
    out.push_back(candidates[i]);
  }
  return out;
}

}  // namespace pier
