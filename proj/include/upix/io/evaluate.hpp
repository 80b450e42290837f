#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "upix/io/synthetic.hpp"
#include "upix/model/model.hpp"

namespace upix {

struct EvalReport {
    double flow = 0.0;  // mean x-prediction MSE over the probe timesteps
    double lm = 0.0;    // mean caption cross-entropy
    CheckResult caption;
    std::size_t records = 0;

    // "records=.. flow=.. lm=.. caption_correct=.. caption_total=.. caption_accuracy=.."
    std::string record() const;
};

inline constexpr double eval_probe_times[] = {0.25, 0.5, 0.75};

// Seed of the held-out split drawn for a run seeded with `seed`.
std::uint64_t held_out_seed(std::uint64_t seed);

// Losses at fixed probe timesteps and checker accuracy of samples drawn with
// `sample_steps` Euler steps; every draw is seeded from `seed` and the record index.
EvalReport evaluate(const ModelParameters& params, const ModelConfig& config,
                    const std::vector<DatasetRecord>& records, std::size_t sample_steps, std::uint64_t seed);

// Mean LM loss of the captions alone (no image tokens).
double caption_lm_loss(const ModelParameters& params, const ModelConfig& config,
                       const std::vector<DatasetRecord>& records);

}  // namespace upix
