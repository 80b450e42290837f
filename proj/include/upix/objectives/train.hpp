#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "upix/core/tape.hpp"
#include "upix/model/model.hpp"
#include "upix/objectives/losses.hpp"

namespace upix {

enum class TaskTag : std::uint8_t { t2i, edit, subject };

std::string_view task_name(TaskTag tag);

// One training item. Text-only items carry no image and train only the LM head.
struct TrainingSample {
    Tensor image;  // H x W x C in [-1, 1]
    std::string caption;
    std::vector<Tensor> conditions;
    TaskTag task = TaskTag::t2i;
    bool text_only = false;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double clip_norm = 1.0;
};

struct AdamState {
    std::uint64_t step = 0;
    std::map<std::string, std::vector<double>> m;
    std::map<std::string, std::vector<double>> v;
};

// Clips the global gradient norm, then applies one Adam update to every
// tracked tensor in `params` that has an entry in `grads`. Returns the
// pre-clip gradient norm.
double adam_update(ParamTree& params, const Gradients& grads, AdamState& state, const AdamConfig& config);

struct StepMetrics {
    std::uint64_t step = 0;
    std::size_t stage = 0;
    LossMetrics loss;
    double grad_norm = 0.0;
    std::size_t condition_tokens = 0;

    // "step=3 stage=1 total=... flow=... perceptual=... lm=..."
    std::string record() const;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct StepOptions {
    // Overrides the sampled timestep for every image item.
    std::optional<double> fixed_t;
};

// Per-sample loss terms for a fixed (t, noise) draw. Text-only samples yield
// only the LM term; terms whose weight is zero are not computed.
LossTerms sample_loss_terms(const TrainingSample& sample, double t, const Tensor& noise,
                            const ModelParameters& params, const ModelConfig& config, const FeatureNet& features,
                            const LossWeights& weights);

struct TrainContext {
    ModelConfig config;
    LossWeights weights;
    AdamConfig adam;
    FeatureNet features;
};

// One optimizer step on the batch mean of per-sample totals. `params` is
// updated in place. Non-finite losses throw TrainingError before any update.
StepMetrics train_step(std::span<const TrainingSample> batch, ModelParameters& params, AdamState& state,
                       const TrainContext& ctx, const TimestepSampler& sampler, std::mt19937_64& rng,
                       const StepOptions& options = {});

}  // namespace upix
