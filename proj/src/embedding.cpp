#include "pier/embedding.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>

#include "pier/errors.hpp"

namespace pier {

EmbeddingTable::EmbeddingTable(std::vector<std::size_t> vocab_sizes, std::size_t dim,
                               std::uint64_t seed)
    : dim_(dim) {
  if (dim < 2 || dim % 2 != 0) {
    throw ContractError("embedding dimension must be even and >= 2, got " + std::to_string(dim));
  }
  std::mt19937_64 rng(seed);
  const double limit = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (std::size_t j = 0; j < vocab_sizes.size(); ++j) {
    if (vocab_sizes[j] == 0) throw ContractError("field " + std::to_string(j) + " has empty vocab");
    Tensor m({vocab_sizes[j], dim});
    for (double& v : m.values()) v = dist(rng);
    tables_.push_back(Parameter{"embedding.field" + std::to_string(j), std::move(m)});
  }
}

EmbeddingTable::EmbeddingTable(std::vector<Parameter> fields) : tables_(std::move(fields)) {
  if (tables_.empty()) throw ContractError("embedding table needs at least one field");
  dim_ = tables_.front().value.cols();
  for (const auto& t : tables_) {
    if (t.value.rank() != 2 || t.value.cols() != dim_) {
      throw DimensionError("embedding field '" + t.name + "' has shape " +
                           shape_string(t.value.shape()) + ", expected [* x " +
                           std::to_string(dim_) + "]");
    }
  }
  if (dim_ < 2 || dim_ % 2 != 0) {
    throw ContractError("embedding dimension must be even and >= 2, got " + std::to_string(dim_));
  }
}

std::vector<std::size_t> EmbeddingTable::vocab_sizes() const {
  std::vector<std::size_t> out;
  for (const auto& t : tables_) out.push_back(t.value.rows());
  return out;
}

void EmbeddingTable::check_id(std::size_t j, FeatureId id) const {
  if (j >= tables_.size()) {
    throw LookupError("feature field " + std::to_string(j) + " does not exist (" +
                      std::to_string(tables_.size()) + " fields)");
  }
  if (id < 0 || static_cast<std::size_t>(id) >= tables_[j].value.rows()) {
    throw LookupError("feature field " + std::to_string(j) + ": id " + std::to_string(id) +
                      " outside vocab of " + std::to_string(tables_[j].value.rows()));
  }
}

std::span<const double> EmbeddingTable::lookup(std::size_t j, FeatureId id) const {
  check_id(j, id);
  return tables_[j].value.row(static_cast<std::size_t>(id));
}

std::vector<Parameter*> EmbeddingTable::parameters() {
  std::vector<Parameter*> out;
  for (auto& t : tables_) out.push_back(&t);
  return out;
}

Tensor embed_permutation(std::span<const FeatureId> features, const EmbeddingTable& table) {
  const std::size_t nf = table.fields(), d = table.dim();
  if (nf == 0 || features.size() % nf != 0) {
    throw DimensionError("embed_permutation: " + std::to_string(features.size()) +
                         " ids do not split into " + std::to_string(nf) + " fields");
  }
  const std::size_t nd = features.size() / nf;
  Tensor out({nd, nf, d});
  for (std::size_t i = 0; i < nd; ++i) {
    for (std::size_t j = 0; j < nf; ++j) {
      const auto row = table.lookup(j, features[i * nf + j]);
      std::copy(row.begin(), row.end(), out.data() + (i * nf + j) * d);
    }
  }
  return out;
}

const Tensor& position_encoding(std::size_t n_display, std::size_t dim) {
  if (dim < 2 || dim % 2 != 0) {
    throw ContractError("position encoding needs an even dimension >= 2, got " +
                        std::to_string(dim));
  }
  static std::mutex mu;
  static std::map<std::pair<std::size_t, std::size_t>, std::unique_ptr<Tensor>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[{n_display, dim}];
  if (!slot) {
    auto pe = std::make_unique<Tensor>(Shape{n_display, dim});
    for (std::size_t i = 0; i < n_display; ++i) {
      for (std::size_t d = 0; d < dim / 2; ++d) {
        const double angle = static_cast<double>(i) /
                             std::pow(10000.0, static_cast<double>(2 * d) / static_cast<double>(dim));
        pe->at(i, 2 * d) = std::sin(angle);
        pe->at(i, 2 * d + 1) = std::cos(angle);
      }
    }
    slot = std::move(pe);
  }
  return *slot;
}

}  // namespace pier
