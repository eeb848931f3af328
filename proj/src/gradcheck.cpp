#include "pier/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "pier/errors.hpp"

namespace pier {
namespace {

double evaluate(const LossBuilder& loss, const std::string& param_name) {
  Graph g(/*record=*/false);
  const double value = loss(g).value()[0];
  if (!std::isfinite(value)) {
    throw NumericError("grad_check: non-finite loss while perturbing '" + param_name + "'");
  }
  return value;
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& loss, std::span<Parameter* const> params,
                           double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw ContractError("grad_check: eps " + std::to_string(eps) + " outside [1e-7, 1e-3]");
  }
  Graph g;
  for (Parameter* p : params) g.parameter(*p);
  Var out = loss(g);
  if (!out.value().all_finite()) {
    std::string names;
    for (const Parameter* p : params) {
      const bool bad = !p->value.all_finite();
      if (bad || params.size() == 1) names += (names.empty() ? "'" : ", '") + p->name + "'";
    }
    throw NumericError("grad_check: non-finite loss at the unperturbed state" +
                       (names.empty() ? std::string() : " (parameter " + names + ")"));
  }
  const Gradients grads = g.backward(out);

  GradCheckResult result;
  for (Parameter* p : params) {
    const Tensor& analytic = grads.of(*p);
    if (!analytic.all_finite()) {
      throw NumericError("grad_check: non-finite analytic gradient for '" + p->name + "'");
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      double up = 0.0, down = 0.0;
      try {
        p->value[i] = saved + eps;
        up = evaluate(loss, p->name);
        p->value[i] = saved - eps;
        down = evaluate(loss, p->name);
      } catch (...) {
        p->value[i] = saved;
        throw;
      }
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
      ++result.entries_checked;
      if (err > result.max_relative_error || result.worst_parameter.empty()) {
        if (err >= result.max_relative_error) {
          result.max_relative_error = err;
          result.worst_parameter = p->name;
          result.worst_index = i;
        }
      }
    }
  }
  return result;
}

}  // namespace pier
