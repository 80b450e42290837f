#pragma once

#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "upix/objectives/train.hpp"

namespace upix {

struct StageSpec {
    std::string name;
    std::size_t resolution = 16;
    std::size_t steps = 100;
    std::size_t batch_size = 8;
    // Relative draw weights of image-text items versus text-only LM items.
    double t2i_weight = 1.0;
    double lm_weight = 0.0;
    // Probability that an image item is an in-context (edit/subject) record.
    double condition_prob = 0.0;
    SamplerMode sampler = SamplerMode::logit_normal;
};

struct StagePlan {
    std::vector<StageSpec> stages;
    // Post-training refinement at the top resolution with uniform timesteps;
    // skipped when steps == 0.
    StageSpec refine{"refine", 0, 0, 8, 1.0, 0.0, 0.0, SamplerMode::uniform};

    void validate() const;
    // 8 -> 16 -> 32 with the given step counts; refinement disabled.
    static StagePlan toy(std::size_t steps_per_stage, std::size_t batch_size = 4);
};

// Samples available at each resolution.
using StageDataset = std::map<std::size_t, std::vector<TrainingSample>>;

struct BatchDraw {
    std::vector<TrainingSample> items;
    std::size_t conditioned = 0;
    std::size_t image_items = 0;
    std::size_t text_only = 0;
};

BatchDraw compose_batch(const StageSpec& stage, const std::vector<TrainingSample>& pool, std::mt19937_64& rng);

struct StageLog {
    std::size_t index = 0;  // 1-based
    std::string name;
    std::size_t resolution = 0;
    std::size_t steps = 0;
    SamplerMode sampler = SamplerMode::logit_normal;
    std::size_t image_items = 0;
    std::size_t conditioned_items = 0;
    std::size_t condition_tokens = 0;
    LossMetrics first;
    LossMetrics last;
};

struct ScheduleHooks {
    std::function<void(const StepMetrics&)> on_step;
    std::function<void(const StageLog&, const ModelParameters&)> on_stage_end;
};

// Runs every stage in order (then refinement, if configured) on `params`.
// Throws std::invalid_argument when `dataset` lacks a stage's resolution.
std::vector<StageLog> run_stage_schedule(const StagePlan& plan, const StageDataset& dataset, ModelParameters& params,
                                         const TrainContext& ctx, const TimestepSampler& logit_normal,
                                         std::uint64_t seed, const ScheduleHooks& hooks = {});

}  // namespace upix
