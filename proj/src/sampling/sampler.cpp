#include "upix/sampling/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "upix/core/ops.hpp"
#include "upix/core/tape.hpp"

namespace upix {

std::vector<double> SamplerConfig::times() const {
    if (!grid.empty()) return grid;
    std::vector<double> ts(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) {
        ts[i] = static_cast<double>(i) / static_cast<double>(steps);
    }
    ts.back() = 1.0;
    return ts;
}

void SamplerConfig::validate() const {
    if (steps == 0) {
        throw std::invalid_argument("sampler: steps must be >= 1");
    }
    auto ts = times();
    if (ts.size() != steps + 1 || ts.front() != 0.0 || ts.back() != 1.0) {
        throw std::invalid_argument("sampler: grid must have steps + 1 points from 0 to 1");
    }
    for (std::size_t i = 1; i < ts.size(); ++i) {
        if (!(ts[i] > ts[i - 1])) {
            throw std::invalid_argument("sampler: grid must be strictly increasing");
        }
    }
    if (ts[ts.size() - 2] >= 1.0 - guard) {
        throw std::invalid_argument("sampler: last interval starts inside the terminal guard");
    }
}

Tensor xpred_to_velocity(const Tensor& x_hat, const Tensor& x_t, double t, double guard) {
    if (!(t < 1.0 - guard)) {
        throw std::domain_error("xpred_to_velocity: t = " + std::to_string(t) + " within the terminal guard");
    }
    if (x_hat.shape() != x_t.shape()) {
        throw ShapeError("xpred_to_velocity: shape mismatch");
    }
    auto a = x_hat.data();
    auto b = x_t.data();
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (a[i] - b[i]) / (1.0 - t);
    return Tensor::from_data(x_t.shape(), std::move(v));
}

Tensor euler_step(const Tensor& x_t, const Tensor& velocity, double dt) {
    if (!(dt > 0.0)) {
        throw std::invalid_argument("euler_step: dt must be positive");
    }
    if (x_t.shape() != velocity.shape()) {
        throw ShapeError("euler_step: shape mismatch");
    }
    auto x = x_t.data();
    auto v = velocity.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + dt * v[i];
    return Tensor::from_data(x_t.shape(), std::move(out));
}

Tensor integrate(const XPredictor& predictor, const Tensor& noise, const SamplerConfig& config,
                 const TrajectoryObserver& observer) {
    config.validate();
    TapeScope no_recording(nullptr);
    auto ts = config.times();
    Tensor x = noise.detach();
    if (observer) observer(0, ts[0], x);
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
        auto x_hat = predictor(x, ts[i]);
        auto v = xpred_to_velocity(x_hat, x, ts[i], config.guard);
        x = euler_step(x, v, ts[i + 1] - ts[i]);
        for (double value : x.data()) {
            if (!std::isfinite(value)) {
                throw NonFiniteError("sampler: non-finite state at step " + std::to_string(i + 1));
            }
        }
        if (observer) observer(i + 1, ts[i + 1], x);
    }
    std::vector<double> clamped(x.data().begin(), x.data().end());
    for (auto& value : clamped) value = std::clamp(value, -1.0, 1.0);
    return Tensor::from_data(x.shape(), std::move(clamped));
}

Tensor draw_noise(const Shape& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return Tensor::randn(shape, 1.0, rng);
}

XPredictor model_predictor(const ModelParameters& params, const ModelConfig& config, const Prompt& prompt) {
    return [&params, config, prompt](const Tensor& x_t, double t) {
        return predict(prompt, x_t, t, params, config).clean.detach();
    };
}

Tensor sample(const ModelParameters& params, const ModelConfig& config, const Prompt& prompt,
              std::size_t resolution, const SamplerConfig& sampler, std::uint64_t seed) {
    auto noise = draw_noise({resolution, resolution, config.channels}, seed);
    return integrate(model_predictor(params, config, prompt), noise, sampler);
}

}  // namespace upix
