#include <doctest.h>

#include <filesystem>
#include <set>

#include "upix/core/ops.hpp"
#include "upix/distill/distill.hpp"
#include "upix/io/checkpoint.hpp"
#include "upix/io/evaluate.hpp"
#include "upix/io/image.hpp"
#include "upix/io/synthetic.hpp"
#include "upix/objectives/schedule.hpp"
#include "upix/sampling/sampler.hpp"

using namespace upix;
namespace fs = std::filesystem;

namespace {

// A toy teacher trained once on 8x8 and 16x16 data through the stage schedule.
struct Trained {
    ModelConfig config = ModelConfig::toy();
    ModelParameters params;
    StageDataset data;
    std::vector<StageLog> logs;
    std::vector<StepMetrics> steps;
};

const Trained& trained() {
    static const Trained t = [] {
        Trained t;
        t.params = init_parameters(t.config, 0);
        StagePlan plan;
        plan.stages = {{"align", 8, 120, 8, 1.0, 0.25, 0.0, SamplerMode::logit_normal},
                       {"in-context", 16, 40, 4, 1.0, 0.25, 0.5, SamplerMode::logit_normal}};
        plan.refine = {"refine", 16, 10, 4, 1.0, 0.0, 0.0, SamplerMode::uniform};
        for (std::size_t r : {8, 16}) t.data[r] = to_training_samples(gen_synthetic_dataset(32, r, r), true);
        TrainContext ctx{t.config, LossWeights{}, AdamConfig{}, FeatureNet::random(3, 1)};
        ctx.adam.lr = 3e-3;
        ScheduleHooks hooks;
        hooks.on_step = [&t](const StepMetrics& m) { t.steps.push_back(m); };
        t.logs = run_stage_schedule(plan, t.data, t.params, ctx, TimestepSampler::logit_normal(), 0, hooks);
        return t;
    }();
    return t;
}

}  // namespace

TEST_CASE("tokens flow through the model and back into an image") {
    auto config = ModelConfig::toy();
    auto params = init_parameters(config, 1);
    std::mt19937_64 rng(1);
    for (auto& [name, t] : params) t = Tensor::randn(t.shape(), 0.05, rng);
    auto source = render_scene({{{ShapeKind::circle, Color::red, Cell::center}}, 0}, 16);
    auto noisy = Tensor::randn({16, 16, 3}, 1.0, rng);
    Prompt prompt{"recolor red circle center to blue", {source}};

    auto seq = build_sequence(prompt, noisy, 0.3, params, config);
    CHECK(seq.count(SegmentKind::condition) == 16);
    CHECK(seq.count(SegmentKind::text) == prompt.text.size() + 2);
    CHECK(seq.count(SegmentKind::timestep) == 1);
    CHECK(seq.count(SegmentKind::generation) == 64);
    CHECK_NOTHROW(validate_sequence(seq));

    auto mask = build_hybrid_mask(seq.kinds);
    auto [gen_first, gen_last] = seq.block(SegmentKind::generation);
    for (std::size_t i = 0; i < seq.size(); ++i) {
        bool generation = i >= gen_first;
        CHECK(mask.at(i, seq.size() - 1) == (generation || i == seq.size() - 1));
    }

    auto out = forward_model(seq, params, config);
    auto image = reassemble({out.patches, 8, 8, 2, 3});
    auto pred = predict(prompt, noisy, 0.3, params, config);
    CHECK(bitwise_equal(image, pred.clean));
    CHECK(out.text_logits.dim(0) == prompt.text.size() + 2);
}

TEST_CASE("staged training lowers the losses and respects the task mix") {
    const auto& t = trained();
    REQUIRE(t.logs.size() == 3);
    CHECK(t.logs[0].condition_tokens == 0);
    CHECK(t.logs[0].conditioned_items == 0);
    CHECK(t.logs[1].condition_tokens > 0);
    CHECK(t.logs[2].sampler == SamplerMode::uniform);
    CHECK(t.steps.size() == 170);
    double early = 0.0, late = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
        early += t.steps[i].loss.flow;
        late += t.steps[110 + i].loss.flow;
    }
    CHECK(late < 0.5 * early);
}

TEST_CASE("a checkpointed model samples exactly like the live one") {
    const auto& t = trained();
    auto dir = fs::temp_directory_path() / "upix_pipeline";
    fs::create_directories(dir);
    auto path = (dir / "teacher.ckpt").string();
    save_checkpoint(path, t.config, t.params);
    auto [config, params] = load_checkpoint(path);
    Prompt prompt{"green square top-left; blue triangle bottom", {}};
    auto live = sample(t.params, t.config, prompt, 16, SamplerConfig::uniform(10), 3);
    auto loaded = sample(params, config, prompt, 16, SamplerConfig::uniform(10), 3);
    CHECK(bitwise_equal(live, loaded));

    auto img_path = (dir / "sample.ppm").string();
    write_image(img_path, live);
    CHECK(max_abs_diff(read_image(img_path), live) <= 1.0 / 127.5);
}

TEST_CASE("evaluation on the held-out split is reproducible") {
    const auto& t = trained();
    auto held_out = gen_synthetic_dataset(6, 16, held_out_seed(0), 2, TaskMix::text_to_image());
    auto train_captions = std::set<std::string>();
    for (const auto& s : t.data.at(16)) train_captions.insert(s.caption);
    auto a = evaluate(t.params, t.config, held_out, 8, 0);
    auto b = evaluate(t.params, t.config, held_out, 8, 0);
    CHECK(a.record() == b.record());
    CHECK(a.records == 6);
    CHECK(a.caption.total > 0);
    auto untrained = evaluate(init_parameters(t.config, 0), t.config, held_out, 8, 0);
    CHECK(a.flow < untrained.flow);
    CHECK(a.lm < untrained.lm);
}

TEST_CASE("distilling the trained teacher keeps it frozen") {
    const auto& t = trained();
    auto teacher = clone_tree(t.params);
    DistillConfig d;
    d.fake_ratio = 2;
    d.student_steps = 4;
    auto state = DistillState::from_teacher(teacher, t.config, d, 0);
    auto batch = to_training_samples(gen_synthetic_dataset(4, 8, 5, 2, TaskMix::text_to_image()), false);
    std::mt19937_64 rng(0);
    std::vector<Prompt> prompts;
    std::vector<Tensor> noises;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        prompts.push_back({batch[i].caption, {}});
        noises.push_back(draw_noise({8, 8, 3}, 100 + i));
    }
    double before = flow_consistency(state.student, teacher, t.config, prompts, noises, 4);
    for (int i = 0; i < 3; ++i) {
        auto m = distill_step(state, teacher, batch, t.config, d, rng);
        CHECK(std::isfinite(m.dmd));
        CHECK(std::isfinite(m.disc));
    }
    CHECK(bitwise_equal(teacher, t.params));
    double after = flow_consistency(state.student, teacher, t.config, prompts, noises, 4);
    CHECK(std::isfinite(before));
    CHECK(std::isfinite(after));
}
