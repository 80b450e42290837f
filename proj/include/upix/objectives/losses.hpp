#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "upix/core/tensor.hpp"

namespace upix {

struct LossWeights {
    double perceptual = 0.1;
    double lm = 0.1;

    void validate() const;
};

enum class SamplerMode : std::uint8_t { logit_normal, uniform };

struct TimestepSampler {
    SamplerMode mode = SamplerMode::logit_normal;
    double mu = 0.0;
    double sigma = 1.0;

    static TimestepSampler logit_normal(double mu = 0.0, double sigma = 1.0) {
        return {SamplerMode::logit_normal, mu, sigma};
    }
    static TimestepSampler uniform() { return {SamplerMode::uniform, 0.0, 1.0}; }
};

inline constexpr double timestep_margin = 1e-4;

// Uniform draws lie in [1e-4, 1 - 1e-4]; logit-normal draws are sigmoid(z).
// Both are clamped to that band so t never touches 0 or 1.
double sample_timestep(const TimestepSampler& sampler, std::mt19937_64& rng);

// Mean squared error over every coordinate.
Tensor flow_matching_loss(const Tensor& predicted, const Tensor& truth);

// Frozen random convolutional features at strides 1, 2 and 4.
struct FeatureNet {
    Tensor conv1;  // 3*3*C x F, stride 1, zero padded
    Tensor conv2;  // 2*2*F x F, stride 2
    Tensor conv3;  // 2*2*F x F, stride 2

    static FeatureNet random(std::size_t channels, std::uint64_t seed, std::size_t features = 8);
    std::vector<Tensor> features(const Tensor& image) const;
};

// Sum over levels of the mean squared feature distance.
Tensor perceptual_loss(const Tensor& predicted, const Tensor& truth, const FeatureNet& net);

// Next-token cross-entropy within the text block: position i predicts ids[i + 1].
Tensor lm_loss(const Tensor& logits, std::span<const std::int32_t> ids);

struct LossTerms {
    Tensor flow;
    Tensor perceptual;
    Tensor lm;
};

struct LossMetrics {
    double total = 0.0;
    double flow = 0.0;
    double perceptual = 0.0;
    double lm = 0.0;
};

// flow + w.perceptual * perceptual + w.lm * lm; undefined terms count as zero.
std::pair<Tensor, LossMetrics> total_loss(const LossTerms& terms, const LossWeights& weights);

}  // namespace upix
