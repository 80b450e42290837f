#include "upix/distill/distill.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "upix/core/ops.hpp"
#include "upix/core/tape.hpp"

namespace upix {

void DistillConfig::validate() const {
    if (!(lambda_diff >= 0.0) || !(lambda_adv >= 0.0)) {
        throw std::invalid_argument("distill: lambda_diff and lambda_adv must be >= 0");
    }
    if (fake_ratio < 1) {
        throw std::invalid_argument("distill: fake-score update ratio must be >= 1");
    }
    if (student_steps < 1) {
        throw std::invalid_argument("distill: student step count must be >= 1");
    }
    if (disc_hidden < 1) {
        throw std::invalid_argument("distill: discriminator width must be >= 1");
    }
}

DmdGradient dmd_generator_gradient(const Tensor& x_g, double t, const Tensor& noise, const XPredictor& teacher,
                                   const XPredictor& fake, double guard) {
    if (!(t < 1.0 - guard) || !(t >= 0.0)) {
        throw std::domain_error("dmd_generator_gradient: t = " + std::to_string(t) + " inside the terminal guard");
    }
    TapeScope no_recording(nullptr);
    auto x = x_g.detach();
    auto x_t = interpolate(x, noise, t);
    auto real_pred = teacher(x_t, t);
    auto fake_pred = fake(x_t, t);
    auto raw = sub(fake_pred, real_pred);
    auto xd = x.data();
    auto rd = real_pred.data();
    std::vector<double> residual(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) residual[i] = std::abs(xd[i] - rd[i]);
    double normalizer = pairwise_sum(residual.data(), residual.size()) / static_cast<double>(residual.size());
    auto gradient = normalizer > 0.0 ? scale(raw, 1.0 / normalizer) : raw.detach();
    return {raw, normalizer, gradient};
}

Tensor dmd_surrogate_loss(const Tensor& x_g, const Tensor& gradient) {
    Tensor target;
    {
        TapeScope no_recording(nullptr);
        target = sub(x_g.detach(), gradient.detach());
    }
    auto diff = sub(x_g, target);
    return scale(mean(mul(diff, diff)), 0.5);
}

// ---- discriminator -------------------------------------------------------

std::vector<std::size_t> discriminator_levels(std::size_t layers) {
    if (layers == 0) {
        throw std::invalid_argument("discriminator needs a teacher with at least one block");
    }
    return {(layers + 1) / 2, layers};
}

DiscriminatorParams init_discriminator(const ModelConfig& config, std::size_t hidden, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    DiscriminatorParams disc;
    auto levels = discriminator_levels(config.layers);
    for (std::size_t l = 0; l < levels.size(); ++l) {
        disc["disc.level." + std::to_string(l)] =
            Tensor::randn({config.dim, hidden}, 1.0 / std::sqrt(static_cast<double>(config.dim)), rng);
    }
    disc["disc.combine"] = Tensor::randn({levels.size() * hidden, 1},
                                         1.0 / std::sqrt(static_cast<double>(levels.size() * hidden)), rng);
    return disc;
}

Tensor discriminator_logit(const Tensor& image, const Prompt& prompt, double t, const Tensor& noise,
                           const ModelParameters& teacher, const ModelConfig& config,
                           const DiscriminatorParams& disc) {
    auto x_t = interpolate(image, noise, t);
    auto pred = predict(prompt, x_t, t, teacher, config, true);
    std::size_t first = pred.generation_rows[0];
    std::size_t last = pred.generation_rows[1];
    auto pool = Tensor::full({1, last - first}, 1.0 / static_cast<double>(last - first));
    auto levels = discriminator_levels(config.layers);
    std::vector<Tensor> hidden;
    for (std::size_t l = 0; l < levels.size(); ++l) {
        auto act = slice(pred.block_outputs[levels[l] - 1], 0, first, last);
        hidden.push_back(silu(matmul(matmul(pool, act), disc.at("disc.level." + std::to_string(l)))));
    }
    auto logit = matmul(concat(hidden, 1), disc.at("disc.combine"));
    return reshape(logit, {});
}

AdversarialLosses adversarial_losses(const DiscriminatorParams& disc, std::span<const Tensor> real,
                                     std::span<const Tensor> student, std::span<const Prompt> prompts,
                                     const ModelParameters& teacher, const ModelConfig& config, double t,
                                     std::span<const Tensor> real_noise, std::span<const Tensor> student_noise) {
    if (real.size() != student.size() || real.size() != prompts.size() || real.empty() ||
        real_noise.size() != real.size() || student_noise.size() != student.size()) {
        throw ShapeError("adversarial losses: real, student, prompt and noise counts must match");
    }
    std::vector<Tensor> disc_terms, gen_terms;
    for (std::size_t i = 0; i < real.size(); ++i) {
        if (real[i].shape() != student[i].shape()) {
            throw ShapeError("adversarial losses: real " + shape_str(real[i].shape()) + " vs student " +
                             shape_str(student[i].shape()));
        }
        auto logit_real = discriminator_logit(real[i], prompts[i], t, real_noise[i], teacher, config, disc);
        auto logit_fake = discriminator_logit(student[i], prompts[i], t, student_noise[i], teacher, config, disc);
        disc_terms.push_back(reshape(add(softplus(scale(logit_real, -1.0)), softplus(logit_fake)), {1}));
        gen_terms.push_back(reshape(softplus(scale(logit_fake, -1.0)), {1}));
    }
    return {mean(concat(disc_terms, 0)), mean(concat(gen_terms, 0))};
}

namespace {

std::vector<Tensor> draw_noises(std::span<const Tensor> like, std::mt19937_64& rng) {
    std::vector<Tensor> out;
    for (const auto& x : like) out.push_back(Tensor::randn(x.shape(), 1.0, rng));
    return out;
}

}  // namespace

AdversarialResult adversarial_step(const DiscriminatorParams& disc, std::span<const Tensor> real,
                                   std::span<const Tensor> student, std::span<const Prompt> prompts,
                                   const ModelParameters& teacher, const ModelConfig& config, double t,
                                   std::mt19937_64& rng) {
    auto real_noise = draw_noises(real, rng);
    auto student_noise = draw_noises(student, rng);
    std::vector<Tensor> fixed_student;
    for (const auto& s : student) fixed_student.push_back(s.detach());
    auto frozen_teacher = frozen_copy(teacher);
    AdversarialResult result;
    Tape tape;
    TapeScope scope(tape);
    auto losses = adversarial_losses(disc, real, fixed_student, prompts, frozen_teacher, config, t, real_noise,
                                     student_noise);
    result.disc_loss = losses.disc.item();
    result.generator_loss = losses.generator.item();
    result.disc_grads = backward(losses.disc);
    return result;
}

Tensor generator_adversarial_loss(const DiscriminatorParams& disc, std::span<const Tensor> student,
                                  std::span<const Prompt> prompts, const ModelParameters& teacher,
                                  const ModelConfig& config, double t, std::mt19937_64& rng) {
    auto student_noise = draw_noises(student, rng);
    auto frozen_disc = frozen_copy(disc);
    std::vector<Tensor> terms;
    for (std::size_t i = 0; i < student.size(); ++i) {
        auto logit = discriminator_logit(student[i], prompts[i], t, student_noise[i], teacher, config, frozen_disc);
        terms.push_back(reshape(softplus(scale(logit, -1.0)), {1}));
    }
    return mean(concat(terms, 0));
}

// ---- student / fake score ------------------------------------------------

Tensor student_generate(const ModelParameters& student, const ModelConfig& config, const Prompt& prompt,
                        const Tensor& noise, std::size_t steps) {
    auto ts = SamplerConfig::uniform(steps).times();
    Tensor x = noise.detach();
    {
        TapeScope no_recording(nullptr);
        for (std::size_t i = 0; i + 2 < ts.size(); ++i) {
            auto x_hat = predict(prompt, x, ts[i], student, config).clean;
            x = euler_step(x, xpred_to_velocity(x_hat, x, ts[i]), ts[i + 1] - ts[i]);
        }
    }
    // The final interval ends at t = 1, where the Euler update equals the clean prediction.
    return predict(prompt, x, ts[ts.size() - 2], student, config).clean;
}

StepMetrics update_fake_score(ModelParameters& fake, AdamState& state, std::span<const TrainingSample> student_samples,
                              const ModelConfig& config, const AdamConfig& adam, const TimestepSampler& sampler,
                              std::mt19937_64& rng) {
    TrainContext ctx{config, LossWeights{0.0, 0.0}, adam, FeatureNet{}};
    return train_step(student_samples, fake, state, ctx, sampler, rng);
}

DistillState DistillState::from_teacher(const ModelParameters& teacher, const ModelConfig& config,
                                        const DistillConfig& distill, std::uint64_t seed) {
    DistillState s;
    s.student = clone_tree(teacher);
    s.fake = clone_tree(teacher);
    set_requires_grad(s.student, true);
    set_requires_grad(s.fake, true);
    s.disc = init_discriminator(config, distill.disc_hidden, seed);
    set_requires_grad(s.disc, true);
    return s;
}

std::string DistillMetrics::record() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "step=%llu dmd=%.9g diff=%.9g adv=%.9g disc=%.9g fake=%.9g",
                  static_cast<unsigned long long>(step), dmd, diff, adv, disc, fake);
    return buf;
}

namespace {

double draw_renoise_t(const DistillConfig& distill, std::mt19937_64& rng) {
    return sample_timestep(distill.renoise, rng);
}

std::vector<Prompt> prompts_of(std::span<const TrainingSample> batch) {
    std::vector<Prompt> prompts;
    for (const auto& s : batch) prompts.push_back({s.caption, s.conditions});
    return prompts;
}

}  // namespace

StudentLossParts student_losses(const DistillState& state, const ModelParameters& teacher,
                                std::span<const TrainingSample> batch, const ModelConfig& config,
                                const DistillConfig& distill, std::mt19937_64& rng) {
    auto prompts = prompts_of(batch);
    auto teacher_frozen = frozen_copy(teacher);
    std::vector<Tensor> generated, dmd_terms, diff_terms;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& item = batch[i];
        auto noise = Tensor::randn(item.image.shape(), 1.0, rng);
        auto x_g = student_generate(state.student, config, prompts[i], noise, distill.student_steps);
        generated.push_back(x_g);

        double t = draw_renoise_t(distill, rng);
        auto renoise = Tensor::randn(item.image.shape(), 1.0, rng);
        auto grad = dmd_generator_gradient(x_g, t, renoise, model_predictor(teacher_frozen, config, prompts[i]),
                                           model_predictor(state.fake, config, prompts[i]));
        dmd_terms.push_back(reshape(dmd_surrogate_loss(x_g, grad.gradient), {1}));

        double td = draw_renoise_t(distill, rng);
        auto diff_noise = Tensor::randn(item.image.shape(), 1.0, rng);
        auto pred = predict(prompts[i], interpolate(item.image, diff_noise, td), td, state.student, config);
        diff_terms.push_back(reshape(flow_matching_loss(pred.clean, item.image), {1}));
    }
    double t_adv = draw_renoise_t(distill, rng);
    auto adv = generator_adversarial_loss(state.disc, generated, prompts, teacher_frozen, config, t_adv, rng);
    return {mean(concat(dmd_terms, 0)), mean(concat(diff_terms, 0)), adv};
}

DistillMetrics distill_step(DistillState& state, const ModelParameters& teacher,
                            std::span<const TrainingSample> batch, const ModelConfig& config,
                            const DistillConfig& distill, std::mt19937_64& rng) {
    distill.validate();
    if (batch.empty()) {
        throw std::invalid_argument("distill_step: empty batch");
    }
    DistillMetrics metrics;
    auto prompts = prompts_of(batch);

    // Student samples are fixed while the student is; the r fake updates share them.
    std::vector<TrainingSample> fake_data;
    std::vector<Tensor> student_images;
    {
        TapeScope no_recording(nullptr);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            auto noise = Tensor::randn(batch[i].image.shape(), 1.0, rng);
            auto x = student_generate(state.student, config, prompts[i], noise, distill.student_steps).detach();
            student_images.push_back(x);
            fake_data.push_back({x, batch[i].caption, batch[i].conditions, batch[i].task, false});
        }
    }
    for (std::size_t r = 0; r < distill.fake_ratio; ++r) {
        auto m = update_fake_score(state.fake, state.fake_opt, fake_data, config, distill.fake_adam,
                                   distill.renoise, rng);
        metrics.fake = m.loss.flow;
    }

    std::vector<Tensor> real_images;
    for (const auto& item : batch) real_images.push_back(item.image);
    double t_disc = draw_renoise_t(distill, rng);
    auto adv = adversarial_step(state.disc, real_images, student_images, prompts, teacher, config, t_disc, rng);
    metrics.disc = adv.disc_loss;
    adam_update(state.disc, adv.disc_grads, state.disc_opt, distill.disc_adam);

    Gradients grads;
    {
        Tape tape;
        TapeScope scope(tape);
        auto parts = student_losses(state, teacher, batch, config, distill, rng);
        auto total = add(add(parts.dmd, scale(parts.diff, distill.lambda_diff)), scale(parts.adv, distill.lambda_adv));
        metrics.dmd = parts.dmd.item();
        metrics.diff = parts.diff.item();
        metrics.adv = parts.adv.item();
        grads = backward(total);
    }
    adam_update(state.student, grads, state.student_opt, distill.student_adam);
    metrics.step = state.student_opt.step;
    return metrics;
}

double flow_consistency(const ModelParameters& student, const ModelParameters& teacher, const ModelConfig& config,
                        std::span<const Prompt> prompts, std::span<const Tensor> noises, std::size_t student_steps,
                        std::span<const Tensor> teacher_samples) {
    if (prompts.size() != noises.size() || prompts.empty()) {
        throw std::invalid_argument("flow_consistency: need one noise draw per prompt");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        auto s = integrate(model_predictor(student, config, prompts[i]), noises[i],
                           SamplerConfig::uniform(student_steps));
        Tensor ref = i < teacher_samples.size()
                         ? teacher_samples[i]
                         : integrate(model_predictor(teacher, config, prompts[i]), noises[i],
                                     SamplerConfig::uniform(teacher_steps));
        auto a = s.data();
        auto b = ref.data();
        double acc = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
        total += acc / static_cast<double>(a.size());
    }
    return total / static_cast<double>(prompts.size());
}

}  // namespace upix
