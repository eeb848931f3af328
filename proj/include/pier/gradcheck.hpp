#pragma once

#include <functional>
#include <span>
#include <string>

#include "pier/autograd.hpp"

namespace pier {

/// Builds a scalar loss on the given graph. Must bind its parameters through
/// Graph::parameter() so both the recorded and the perturbed evaluations see
/// the current parameter values.
using LossBuilder = std::function<Var(Graph&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;
};

/// Compares backward() against central differences for every entry of every
/// parameter. The relative error of an entry is
/// |analytic - numeric| / max(1, |analytic|). eps must lie in [1e-7, 1e-3].
/// Parameters are restored bit-exactly before returning.
GradCheckResult grad_check(const LossBuilder& loss, std::span<Parameter* const> params,
                           double eps = 1e-6);

}  // namespace pier
