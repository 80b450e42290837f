#include "upix/objectives/schedule.hpp"

#include <stdexcept>

namespace upix {

void StagePlan::validate() const {
    if (stages.empty()) {
        throw std::invalid_argument("stage plan: no stages");
    }
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const auto& s = stages[i];
        if (i > 0 && s.resolution < stages[i - 1].resolution) {
            throw std::invalid_argument("stage plan: resolutions must be non-decreasing");
        }
        if (s.batch_size == 0 || s.t2i_weight < 0.0 || s.lm_weight < 0.0 || s.t2i_weight + s.lm_weight <= 0.0 ||
            s.condition_prob < 0.0 || s.condition_prob > 1.0) {
            throw std::invalid_argument("stage plan: invalid task mix in stage '" + s.name + "'");
        }
    }
    if (refine.steps > 0 && refine.batch_size == 0) {
        throw std::invalid_argument("stage plan: refinement batch size must be >= 1");
    }
}

StagePlan StagePlan::toy(std::size_t steps_per_stage, std::size_t batch_size) {
    StagePlan plan;
    plan.stages = {
        {"foundational-alignment", 8, steps_per_stage, batch_size, 1.0, 0.25, 0.0, SamplerMode::logit_normal},
        {"in-context", 16, steps_per_stage, batch_size, 1.0, 0.25, 0.5, SamplerMode::logit_normal},
        {"high-fidelity", 32, steps_per_stage, batch_size, 1.0, 0.0, 0.5, SamplerMode::logit_normal},
    };
    plan.refine.resolution = 32;
    return plan;
}

BatchDraw compose_batch(const StageSpec& stage, const std::vector<TrainingSample>& pool, std::mt19937_64& rng) {
    std::vector<std::size_t> plain, conditioned;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool[i].text_only) continue;
        (pool[i].conditions.empty() ? plain : conditioned).push_back(i);
    }
    if (plain.empty() && stage.condition_prob < 1.0) {
        throw std::invalid_argument("compose_batch: stage '" + stage.name + "' has no text-to-image samples");
    }
    if (conditioned.empty() && stage.condition_prob > 0.0) {
        throw std::invalid_argument("compose_batch: stage '" + stage.name + "' has no conditioned samples");
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double lm_share = stage.lm_weight / (stage.t2i_weight + stage.lm_weight);
    BatchDraw draw;
    auto pick = [&rng](const std::vector<std::size_t>& from) {
        std::uniform_int_distribution<std::size_t> d(0, from.size() - 1);
        return from[d(rng)];
    };
    for (std::size_t i = 0; i < stage.batch_size; ++i) {
        bool text_only = unit(rng) < lm_share;
        bool with_condition = unit(rng) < stage.condition_prob;
        const auto& source = with_condition ? conditioned : plain;
        TrainingSample item = pool[pick(source)];
        if (text_only) {
            item.text_only = true;
            item.image = Tensor();
            item.conditions.clear();
            ++draw.text_only;
        } else {
            ++draw.image_items;
            if (with_condition) ++draw.conditioned;
        }
        draw.items.push_back(std::move(item));
    }
    return draw;
}

std::vector<StageLog> run_stage_schedule(const StagePlan& plan, const StageDataset& dataset, ModelParameters& params,
                                         const TrainContext& ctx, const TimestepSampler& logit_normal,
                                         std::uint64_t seed, const ScheduleHooks& hooks) {
    plan.validate();
    std::vector<StageSpec> stages = plan.stages;
    if (plan.refine.steps > 0) {
        auto refine = plan.refine;
        refine.sampler = SamplerMode::uniform;
        if (refine.resolution == 0) refine.resolution = stages.back().resolution;
        stages.push_back(refine);
    }
    for (const auto& s : stages) {
        if (dataset.count(s.resolution) == 0 || dataset.at(s.resolution).empty()) {
            throw std::invalid_argument("dataset has no samples at resolution " + std::to_string(s.resolution) +
                                        " required by stage '" + s.name + "'");
        }
    }
    std::mt19937_64 rng(seed);
    AdamState state;
    std::vector<StageLog> logs;
    for (std::size_t si = 0; si < stages.size(); ++si) {
        const auto& stage = stages[si];
        const auto& pool = dataset.at(stage.resolution);
        TimestepSampler sampler = stage.sampler == SamplerMode::uniform ? TimestepSampler::uniform() : logit_normal;
        StageLog log;
        log.index = si + 1;
        log.name = stage.name;
        log.resolution = stage.resolution;
        log.steps = stage.steps;
        log.sampler = stage.sampler;
        for (std::size_t step = 0; step < stage.steps; ++step) {
            auto draw = compose_batch(stage, pool, rng);
            auto metrics = train_step(draw.items, params, state, ctx, sampler, rng);
            metrics.stage = si + 1;
            log.image_items += draw.image_items;
            log.conditioned_items += draw.conditioned;
            log.condition_tokens += metrics.condition_tokens;
            if (step == 0) log.first = metrics.loss;
            log.last = metrics.loss;
            if (hooks.on_step) hooks.on_step(metrics);
        }
        if (hooks.on_stage_end) hooks.on_stage_end(log, params);
        logs.push_back(log);
    }
    return logs;
}

}  // namespace upix
