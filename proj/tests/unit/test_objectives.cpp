#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "support.hpp"
#include "upix/io/synthetic.hpp"
#include "upix/objectives/losses.hpp"
#include "upix/objectives/probe.hpp"
#include "upix/objectives/schedule.hpp"
#include "upix/objectives/train.hpp"

using namespace upix;
using upix::test::vec;

namespace {

TrainContext toy_context(double lr = 3e-3) {
    TrainContext ctx{ModelConfig::toy(), LossWeights{}, AdamConfig{}, FeatureNet::random(3, 1)};
    ctx.adam.lr = lr;
    return ctx;
}

std::vector<TrainingSample> synthetic_batch(std::size_t count, std::size_t res, std::uint64_t seed) {
    return to_training_samples(gen_synthetic_dataset(count, res, seed, 2, TaskMix::text_to_image()), false);
}

// Mean flow term over the batch at fixed timesteps and fixed noise.
double probe_flow(const std::vector<TrainingSample>& batch, const ModelParameters& params, const TrainContext& ctx) {
    TapeScope none(nullptr);
    std::mt19937_64 rng(77);
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& s : batch) {
        for (double t : {0.25, 0.5, 0.75}) {
            auto noise = Tensor::randn(s.image.shape(), 1.0, rng);
            auto terms = sample_loss_terms(s, t, noise, params, ctx.config, ctx.features, LossWeights{0.0, 0.0});
            total += terms.flow.item();
            ++n;
        }
    }
    return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("timestep samplers") {
    std::mt19937_64 rng(1);
    std::vector<double> draws;
    for (int i = 0; i < 100001; ++i) draws.push_back(sample_timestep(TimestepSampler::logit_normal(), rng));
    std::nth_element(draws.begin(), draws.begin() + 50000, draws.end());
    CHECK(std::abs(draws[50000] - 0.5) <= 0.01);

    double mean = 0.0;
    for (int i = 0; i < 100000; ++i) mean += sample_timestep(TimestepSampler::uniform(), rng);
    CHECK(std::abs(mean / 1e5 - 0.5) <= 0.01);

    bool inside = true;
    auto wide = TimestepSampler::logit_normal(0.0, 30.0);
    for (int i = 0; i < 1000000; ++i) {
        double a = sample_timestep(wide, rng);
        double b = sample_timestep(TimestepSampler::uniform(), rng);
        inside = inside && a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0;
    }
    CHECK(inside);
    CHECK_THROWS_AS(sample_timestep(TimestepSampler::logit_normal(0.0, 0.0), rng), std::invalid_argument);
}

TEST_CASE("flow matching loss examples") {
    std::mt19937_64 rng(2);
    auto truth = Tensor::randn({4, 4, 3}, 1.0, rng);
    CHECK(flow_matching_loss(truth, truth).item() == 0.0);
    auto shifted = add(truth, Tensor::full({4, 4, 3}, 0.5));
    CHECK(std::abs(flow_matching_loss(shifted, truth).item() - 0.25) <= 1e-12);
    CHECK(flow_matching_loss(vec({1, 3}), vec({0, 0})).item() == 5.0);
    CHECK_THROWS_AS(flow_matching_loss(vec({1}), vec({1, 2})), ShapeError);
}

TEST_CASE("perceptual loss examples") {
    auto net = FeatureNet::random(3, 4);
    std::mt19937_64 rng(3);
    auto a = Tensor::randn({8, 8, 3}, 1.0, rng);
    auto b = Tensor::randn({8, 8, 3}, 1.0, rng);
    CHECK(perceptual_loss(a, a, net).item() == 0.0);
    double ab = perceptual_loss(a, b, net).item();
    CHECK(ab > 0.0);
    CHECK(std::abs(ab - perceptual_loss(b, a, net).item()) <= 1e-12);
    CHECK(net.features(a).size() == 3);
    CHECK(net.features(a)[2].dim(0) == 2);
    CHECK_THROWS_AS(perceptual_loss(a, Tensor::zeros({4, 4, 3}), net), ShapeError);

    auto pred = a.clone();
    pred.set_requires_grad(true);
    Tape tape;
    TapeScope scope(tape);
    auto g = backward(perceptual_loss(pred, b, net));
    CHECK(g.contains(pred));
    CHECK_FALSE(g.contains(net.conv1));
    CHECK_FALSE(g.contains(net.conv2));
    CHECK_FALSE(g.contains(net.conv3));
}

TEST_CASE("lm loss examples") {
    auto ids = text_to_ids("hello");
    auto uniform = Tensor::zeros({ids.size(), vocab_size});
    CHECK(std::abs(lm_loss(uniform, ids).item() - std::log(259.0)) <= 1e-12);

    auto sharp = Tensor::zeros({ids.size(), vocab_size});
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
        sharp.mutable_data()[i * vocab_size + static_cast<std::size_t>(ids[i + 1])] = 100.0;
    }
    CHECK(lm_loss(sharp, ids).item() < 1e-6);

    // Single byte: BOS -> byte and byte -> EOS only; logits of the EOS row never matter.
    auto one = text_to_ids("q");
    auto logits = Tensor::zeros({3, vocab_size});
    logits.mutable_data()[2 * vocab_size + 5] = 50.0;
    CHECK(std::abs(lm_loss(logits, one).item() - std::log(259.0)) <= 1e-12);
    logits.mutable_data()[0 * vocab_size + 'q'] = 100.0;
    CHECK(std::abs(lm_loss(logits, one).item() - std::log(259.0) / 2) <= 1e-9);

    std::vector<std::int32_t> lone{bos_id};
    CHECK_THROWS_AS(lm_loss(Tensor::zeros({1, vocab_size}), lone), std::invalid_argument);
}

TEST_CASE("total loss combines weighted terms") {
    LossTerms terms{Tensor::scalar(2), Tensor::scalar(3), Tensor::scalar(4)};
    auto [total, metrics] = total_loss(terms, LossWeights{0.1, 0.1});
    CHECK(std::abs(total.item() - 2.7) <= 1e-12);
    CHECK(metrics.flow == 2.0);
    CHECK(metrics.perceptual == 3.0);
    CHECK(metrics.lm == 4.0);
    CHECK(total_loss(terms, LossWeights{0, 0}).first.item() == 2.0);
    LossTerms zeros{Tensor::scalar(0), Tensor::scalar(0), Tensor::scalar(0)};
    CHECK(total_loss(zeros, LossWeights{}).first.item() == 0.0);
    CHECK_THROWS_AS((LossWeights{-0.1, 0.0}.validate()), std::invalid_argument);
}

TEST_CASE("total loss gradient is the weighted sum of term gradients") {
    auto setup = gradient_probe_setup(3);
    set_requires_grad(setup.params, true);
    auto grad_for = [&](LossWeights w, bool flow, bool perc, bool lm) {
        Tape tape;
        TapeScope scope(tape);
        auto terms = sample_loss_terms(setup.sample, setup.t, setup.noise, setup.params, setup.config, setup.features,
                                       LossWeights{1.0, 1.0});
        if (!flow) terms.flow = scale(terms.flow, 0.0);
        if (!perc) terms.perceptual = scale(terms.perceptual, 0.0);
        if (!lm) terms.lm = scale(terms.lm, 0.0);
        return backward(total_loss(terms, w).first);
    };
    LossWeights w{0.3, 0.7};
    auto all = grad_for(w, true, true, true);
    auto f = grad_for(w, true, false, false);
    auto p = grad_for(w, false, true, false);
    auto l = grad_for(w, false, false, true);
    double worst = 0.0;
    for (const auto& [name, t] : setup.params) {
        auto a = all(t), gf = f(t), gp = p(t), gl = l(t);
        for (std::size_t i = 0; i < a.numel(); ++i) {
            worst = std::max(worst, std::abs(a.at(i) - (gf.at(i) + gp.at(i) + gl.at(i))));
        }
    }
    CHECK(worst <= 1e-10);
}

TEST_CASE("each loss matches central differences on its inputs") {
    std::mt19937_64 rng(4);
    auto net = FeatureNet::random(3, 5);
    ParamTree images{{"pred", Tensor::randn({8, 8, 3}, 0.5, rng)}};
    auto truth = Tensor::randn({8, 8, 3}, 0.5, rng);
    auto flow = finite_difference_check([&](const ParamTree& p) { return flow_matching_loss(p.at("pred"), truth); },
                                        images, 1e-5);
    CHECK(flow.max_relative_error <= 1e-5);
    auto perc = finite_difference_check(
        [&](const ParamTree& p) { return perceptual_loss(p.at("pred"), truth, net); }, images, 1e-5);
    CHECK(perc.max_relative_error <= 1e-5);
    auto ids = text_to_ids("abc");
    ParamTree logits{{"logits", Tensor::randn({ids.size(), vocab_size}, 1.0, rng)}};
    auto lm = finite_difference_check([&](const ParamTree& p) { return lm_loss(p.at("logits"), ids); }, logits, 1e-5);
    CHECK(lm.max_relative_error <= 1e-5);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
    auto ctx = toy_context(0.0);
    auto params = init_parameters(ctx.config, 1);
    auto before = clone_tree(params);
    auto batch = synthetic_batch(4, 8, 1);
    AdamState state;
    std::mt19937_64 rng(1);
    for (int i = 0; i < 3; ++i) train_step(batch, params, state, ctx, TimestepSampler::logit_normal(), rng);
    CHECK(bitwise_equal(params, before));
}

TEST_CASE("training is deterministic under a seed") {
    auto ctx = toy_context();
    auto batch = synthetic_batch(4, 8, 2);
    auto run = [&] {
        auto params = init_parameters(ctx.config, 2);
        AdamState state;
        std::mt19937_64 rng(9);
        std::vector<std::string> lines;
        for (int i = 0; i < 4; ++i) {
            lines.push_back(train_step(batch, params, state, ctx, TimestepSampler::logit_normal(), rng).record());
        }
        return std::make_pair(lines, params);
    };
    auto [a, pa] = run();
    auto [b, pb] = run();
    CHECK(a == b);
    CHECK(bitwise_equal(pa, pb));
    CHECK(a[0].starts_with("step=1 stage=0 total="));
}

TEST_CASE("sampler mode changes nothing when t is fixed") {
    auto ctx = toy_context();
    auto batch = synthetic_batch(3, 8, 3);
    auto run = [&](const TimestepSampler& sampler) {
        auto params = init_parameters(ctx.config, 3);
        AdamState state;
        std::mt19937_64 rng(5);
        StepOptions opt;
        opt.fixed_t = 0.4;
        std::vector<std::string> lines;
        for (int i = 0; i < 2; ++i) lines.push_back(train_step(batch, params, state, ctx, sampler, rng, opt).record());
        return lines;
    };
    CHECK(run(TimestepSampler::logit_normal()) == run(TimestepSampler::uniform()));
}

TEST_CASE("feature net stays frozen through training") {
    auto ctx = toy_context();
    FeatureNet copy{ctx.features.conv1.clone(), ctx.features.conv2.clone(), ctx.features.conv3.clone()};
    auto params = init_parameters(ctx.config, 4);
    auto batch = synthetic_batch(2, 8, 4);
    AdamState state;
    std::mt19937_64 rng(4);
    for (int i = 0; i < 5; ++i) train_step(batch, params, state, ctx, TimestepSampler::uniform(), rng);
    CHECK(bitwise_equal(ctx.features.conv1, copy.conv1));
    CHECK(bitwise_equal(ctx.features.conv2, copy.conv2));
    CHECK(bitwise_equal(ctx.features.conv3, copy.conv3));
    for (const auto& [name, t] : params) CHECK(name.rfind("feature", 0) != 0);
}

TEST_CASE("non-finite loss aborts before any update") {
    auto ctx = toy_context();
    auto params = init_parameters(ctx.config, 5);
    auto batch = synthetic_batch(2, 8, 5);
    batch[0].image.mutable_data()[0] = std::nan("");
    auto before = clone_tree(params);
    AdamState state;
    std::mt19937_64 rng(5);
    CHECK_THROWS(train_step(batch, params, state, ctx, TimestepSampler::uniform(), rng));
    CHECK(bitwise_equal(params, before));
    CHECK(state.step == 0);
}

TEST_CASE("overfitting one fixed batch of eight") {
    auto ctx = toy_context(3e-3);
    auto params = init_parameters(ctx.config, 0);
    auto batch = synthetic_batch(8, 8, 0);
    double initial = probe_flow(batch, params, ctx);
    AdamState state;
    std::mt19937_64 rng(0);
    for (int i = 0; i < 500; ++i) train_step(batch, params, state, ctx, TimestepSampler::logit_normal(), rng);
    double final_flow = probe_flow(batch, params, ctx);
    INFO("initial " << initial << " final " << final_flow);
    CHECK(final_flow < 0.1 * initial);
}

TEST_CASE("stage plan validation") {
    auto plan = StagePlan::toy(5);
    CHECK_NOTHROW(plan.validate());
    CHECK(plan.stages.size() == 3);
    CHECK(plan.stages[0].condition_prob == 0.0);
    auto bad = plan;
    std::swap(bad.stages[0].resolution, bad.stages[2].resolution);
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("stage one batches carry no conditions") {
    auto plan = StagePlan::toy(1);
    auto pool = to_training_samples(gen_synthetic_dataset(64, 8, 6), true);
    std::mt19937_64 rng(6);
    std::size_t text_only = 0;
    for (int i = 0; i < 2000; ++i) {
        auto draw = compose_batch(plan.stages[0], pool, rng);
        CHECK(draw.conditioned == 0);
        for (const auto& item : draw.items) CHECK(item.conditions.empty());
        text_only += draw.text_only;
    }
    CHECK(text_only > 0);
}

TEST_CASE("stage two condition frequency matches the plan") {
    auto plan = StagePlan::toy(1, 1);
    auto pool = to_training_samples(gen_synthetic_dataset(64, 16, 7), true);
    std::mt19937_64 rng(7);
    std::size_t image = 0, conditioned = 0;
    for (int i = 0; i < 10000; ++i) {
        auto draw = compose_batch(plan.stages[1], pool, rng);
        image += draw.image_items;
        conditioned += draw.conditioned;
    }
    double freq = static_cast<double>(conditioned) / static_cast<double>(image);
    CHECK(std::abs(freq - plan.stages[1].condition_prob) <= 0.05);
}

TEST_CASE("schedule runs stages in order and reports missing resolutions") {
    auto ctx = toy_context();
    ctx.config = ModelConfig::tiny();
    auto params = init_parameters(ctx.config, 8);
    auto plan = StagePlan::toy(2, 2);
    plan.refine.steps = 1;
    plan.refine.batch_size = 2;
    StageDataset data;
    for (std::size_t r : {8, 16, 32}) data[r] = to_training_samples(gen_synthetic_dataset(8, r, r), true);
    std::vector<std::uint64_t> steps;
    ScheduleHooks hooks;
    hooks.on_step = [&](const StepMetrics& m) { steps.push_back(m.step); };
    auto logs = run_stage_schedule(plan, data, params, ctx, TimestepSampler::logit_normal(), 8, hooks);
    REQUIRE(logs.size() == 4);
    CHECK(logs[0].resolution == 8);
    CHECK(logs[1].resolution == 16);
    CHECK(logs[2].resolution == 32);
    CHECK(logs[3].sampler == SamplerMode::uniform);
    CHECK(logs[0].condition_tokens == 0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(logs[i].steps == 2);
    CHECK(steps.size() == 7);

    data.erase(16);
    CHECK_THROWS_AS(run_stage_schedule(plan, data, params, ctx, TimestepSampler::logit_normal(), 8),
                    std::invalid_argument);
}
