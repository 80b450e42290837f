#include "upix/core/gradcheck.hpp"

#include <cmath>

#include "upix/core/tape.hpp"

namespace upix {

namespace {

double evaluate(const ScalarFunction& function, const ParamTree& params) {
    TapeScope no_recording(nullptr);
    auto value = function(params).item();
    if (!std::isfinite(value)) {
        throw NonFiniteError("finite_difference_check: function returned a non-finite value");
    }
    return value;
}

}  // namespace

GradCheckReport finite_difference_check(const ScalarFunction& function, const ParamTree& params, double step) {
    if (!(step > 0.0)) {
        throw std::invalid_argument("finite_difference_check: step must be positive");
    }
    ParamTree work = clone_tree(params);
    set_requires_grad(work, true);

    Gradients grads;
    {
        Tape tape;
        TapeScope scope(tape);
        auto loss = function(work);
        if (!std::isfinite(loss.item())) {
            throw NonFiniteError("finite_difference_check: function returned a non-finite value");
        }
        grads = backward(loss);
    }

    GradCheckReport report;
    for (auto& [name, tensor] : work) {
        auto analytic = grads(tensor);
        auto values = tensor.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            double saved = values[i];
            values[i] = saved + step;
            double up = evaluate(function, work);
            values[i] = saved - step;
            double down = evaluate(function, work);
            values[i] = saved;
            double numeric = (up - down) / (2.0 * step);
            double a = analytic.at(i);
            double err = std::abs(a - numeric) / (std::abs(numeric) + 1e-12);
            ++report.coordinates;
            if (err > report.max_relative_error || report.worst_parameter.empty()) {
                report.max_relative_error = err;
                report.worst_parameter = name;
                report.worst_index = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace upix
