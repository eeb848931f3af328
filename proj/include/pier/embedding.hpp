#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pier/autograd.hpp"
#include "pier/types.hpp"

namespace pier {

/// Bottom embedding layers, one [vocab_j x D] matrix per feature field.
/// Shared between permutation selection and permutation evaluation.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  /// Uniform init in [-1/sqrt(D), 1/sqrt(D)]. D must be even and >= 2.
  EmbeddingTable(std::vector<std::size_t> vocab_sizes, std::size_t dim, std::uint64_t seed);
  /// Wraps existing matrices (e.g. from a checkpoint).
  explicit EmbeddingTable(std::vector<Parameter> fields);

  std::size_t fields() const noexcept { return tables_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t vocab_size(std::size_t field) const { return tables_.at(field).value.rows(); }
  std::vector<std::size_t> vocab_sizes() const;

  const Parameter& field(std::size_t j) const { return tables_.at(j); }
  Parameter& field(std::size_t j) { return tables_.at(j); }

  /// Embedding row of `id` in field `j`; LookupError names field and id.
  std::span<const double> lookup(std::size_t j, FeatureId id) const;
  void check_id(std::size_t j, FeatureId id) const;

  std::vector<Parameter*> parameters();

 private:
  std::vector<Parameter> tables_;
  std::size_t dim_ = 0;
};

/// M[i][j] = table_j[features(i, j)], shape [N_d x N_f x D]. `features` is
/// row-major [N_d x N_f].
Tensor embed_permutation(std::span<const FeatureId> features, const EmbeddingTable& table);

/// Sinusoidal position encoding, [N_d x D]: PE[i][2d] = sin(i / 10000^(2d/D)),
/// PE[i][2d+1] = cos(same). Computed once per (N_d, D) and cached.
const Tensor& position_encoding(std::size_t n_display, std::size_t dim);

}  // namespace pier
