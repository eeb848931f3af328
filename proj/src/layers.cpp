#include "pier/layers.hpp"

#include <cmath>

#include "pier/errors.hpp"

namespace pier {

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (Dense& layer : layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
  std::vector<const Parameter*> out;
  for (const Dense& layer : layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

Mlp make_mlp(const std::string& prefix, std::size_t in_features,
             std::span<const std::size_t> widths, Activation hidden, Activation output,
             std::mt19937_64& rng) {
  Mlp mlp;
  std::size_t fan_in = in_features;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::size_t fan_out = widths[i];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor w({fan_in, fan_out});
    for (double& v : w.values()) v = dist(rng);
    const std::string name = prefix + "." + std::to_string(i);
    mlp.layers.push_back(Dense{Parameter{name + ".weight", std::move(w)},
                               Parameter{name + ".bias", Tensor({fan_out})},
                               i + 1 == widths.size() ? output : hidden});
    fan_in = fan_out;
  }
  return mlp;
}

Var dense_forward(Graph& g, Var x, const Dense& layer) {
  if (x.value().cols() != layer.in_features()) {
    throw DimensionError("dense '" + layer.weight.name + "': input " + shape_string(x.shape()) +
                         " vs weight " + shape_string(layer.weight.value.shape()));
  }
  Var y = ag::add_bias(ag::matmul(x, g.parameter(layer.weight)), g.parameter(layer.bias));
  return ag::activate(y, layer.activation);
}

Var mlp_forward(Graph& g, Var x, const Mlp& mlp) {
  for (const Dense& layer : mlp.layers) x = dense_forward(g, x, layer);
  return x;
}

Tensor mlp_forward(const Tensor& x, const Mlp& mlp) {
  Graph g(/*record=*/false);
  return mlp_forward(g, g.constant(x), mlp).value();
}

}  // namespace pier
