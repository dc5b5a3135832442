#pragma once

#include <functional>
#include <random>

#include "dagl/tape.hpp"

namespace dagl::testing {

struct GradCheck {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::string worst;  // "<param>[index] (analytic a, numeric n)" of the worst entry
};

/// |a - b| / max(|a|, |b|, 1e-6)
double relative_error(double a, double b);

/// Compares reverse-mode gradients of `loss` with central finite differences
/// (step h) on up to `per_tensor` random entries of every parameter
/// (all entries when per_tensor == 0).
GradCheck check_parameter_gradients(ParameterList& params, const std::function<Var(Tape&)>& loss,
                                    std::size_t per_tensor, std::mt19937_64& rng, double h = 1e-5);

/// Parameter check for l2_loss(forward(tape), target, batch). The numeric side
/// forms L(w+h) - L(w-h) per pixel as (p- - p+)(2t - p+ - p-) / batch, which
/// avoids subtracting two large rounded sums, so entries with tiny gradients
/// stay resolvable at h = 1e-5.
GradCheck check_l2_parameter_gradients(ParameterList& params, const std::function<Var(Tape&)>& forward,
                                       const Tensor& target, std::size_t batch, std::size_t per_tensor,
                                       std::mt19937_64& rng, double h = 1e-5);

/// Same for a non-parameter input tensor x, all entries.
GradCheck check_input_gradient(const Tensor& x, const std::function<Var(const Var&)>& loss, double h = 1e-5);

}  // namespace dagl::testing
