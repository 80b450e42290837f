#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "upix/core/tensor.hpp"
#include "upix/model/model.hpp"

namespace upix {

inline constexpr std::size_t teacher_steps = 50;
inline constexpr std::size_t distilled_steps = 28;
inline constexpr double terminal_guard = 1e-4;

struct SamplerConfig {
    std::size_t steps = teacher_steps;
    // t_0 = 0 < ... < t_N = 1; empty means uniform.
    std::vector<double> grid;
    double guard = terminal_guard;

    std::vector<double> times() const;
    void validate() const;

    static SamplerConfig uniform(std::size_t steps) { return {steps, {}, terminal_guard}; }
};

// v = (x_hat - x_t) / (1 - t). Throws std::domain_error when t >= 1 - guard.
Tensor xpred_to_velocity(const Tensor& x_hat, const Tensor& x_t, double t, double guard = terminal_guard);

Tensor euler_step(const Tensor& x_t, const Tensor& velocity, double dt);

using XPredictor = std::function<Tensor(const Tensor& x_t, double t)>;
using TrajectoryObserver = std::function<void(std::size_t step, double t, const Tensor& state)>;

// Integrates from x_0 = noise along the grid; clamps to [-1, 1] only at the end.
Tensor integrate(const XPredictor& predictor, const Tensor& noise, const SamplerConfig& config,
                 const TrajectoryObserver& observer = {});

Tensor draw_noise(const Shape& shape, std::uint64_t seed);

XPredictor model_predictor(const ModelParameters& params, const ModelConfig& config, const Prompt& prompt);

Tensor sample(const ModelParameters& params, const ModelConfig& config, const Prompt& prompt,
              std::size_t resolution, const SamplerConfig& sampler, std::uint64_t seed);

}  // namespace upix
