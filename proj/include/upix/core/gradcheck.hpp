#pragma once

#include <functional>
#include <string>

#include "upix/core/tensor.hpp"

namespace upix {

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coordinates = 0;
};

using ScalarFunction = std::function<Tensor(const ParamTree&)>;

// Compares reverse-mode gradients of `function` with central differences over
// every coordinate of `params`:
//   max |analytic - numeric| / (|numeric| + 1e-12)
// Throws NonFiniteError if the function returns a non-finite value and
// UnsupportedError if it contains a non-differentiable primitive.
GradCheckReport finite_difference_check(const ScalarFunction& function, const ParamTree& params, double step);

}  // namespace upix
