#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pier/autograd.hpp"

namespace pier {

using ag::Activation;

/// Affine layer y = act(x W + b) with W stored [in x out].
struct Dense {
  Parameter weight;
  Parameter bias;
  Activation activation = Activation::kIdentity;

  std::size_t in_features() const { return weight.value.rows(); }
  std::size_t out_features() const { return weight.value.cols(); }
};

struct Mlp {
  std::vector<Dense> layers;

  std::size_t in_features() const { return layers.front().in_features(); }
  std::size_t out_features() const { return layers.back().out_features(); }
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

/// Builds an MLP with the given layer widths. Hidden layers use `hidden`,
/// the final layer uses `output`. Weights are Glorot-uniform from `rng`,
/// biases zero. Parameter names are `<prefix>.<layer>.weight|bias`.
Mlp make_mlp(const std::string& prefix, std::size_t in_features,
             std::span<const std::size_t> widths, Activation hidden, Activation output,
             std::mt19937_64& rng);

Var dense_forward(Graph& g, Var x, const Dense& layer);
Var mlp_forward(Graph& g, Var x, const Mlp& mlp);

/// Value-only MLP evaluation, x is [n x in].
Tensor mlp_forward(const Tensor& x, const Mlp& mlp);

}  // namespace pier
