#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "upix/model/model.hpp"
#include "upix/objectives/train.hpp"
#include "upix/sampling/sampler.hpp"

namespace upix {

struct DistillConfig {
    double lambda_diff = 0.25;
    double lambda_adv = 0.01;
    std::size_t student_steps = 4;
    std::size_t fake_ratio = 5;
    std::size_t disc_hidden = 16;
    AdamConfig student_adam{1e-4};
    AdamConfig fake_adam{1e-4};
    AdamConfig disc_adam{1e-4};
    TimestepSampler renoise = TimestepSampler::uniform();

    void validate() const;
};

struct DmdGradient {
    Tensor raw;         // x_fake - x_teacher at the re-noised point
    double normalizer;  // mean |x_g - x_teacher|
    Tensor gradient;    // raw / normalizer (raw when the normalizer is 0)
};

// Re-noises x_g to x_t = t x_g + (1 - t) noise and differences the fake and
// teacher clean predictions there. Neither predictor is differentiated.
DmdGradient dmd_generator_gradient(const Tensor& x_g, double t, const Tensor& noise, const XPredictor& teacher,
                                   const XPredictor& fake, double guard = terminal_guard);

// Surrogate whose gradient w.r.t. x_g is `gradient` / numel: 0.5 * mean((x_g - sg(x_g - g))^2).
Tensor dmd_surrogate_loss(const Tensor& x_g, const Tensor& gradient);

// ---- discriminator -------------------------------------------------------

using DiscriminatorParams = ParamTree;

// 1-based teacher block indices read by the discriminator: ceil(L/2) and L.
std::vector<std::size_t> discriminator_levels(std::size_t layers);
DiscriminatorParams init_discriminator(const ModelConfig& config, std::size_t hidden, std::uint64_t seed);

// Scalar logit for one image re-noised at (t, noise), read off frozen teacher activations.
Tensor discriminator_logit(const Tensor& image, const Prompt& prompt, double t, const Tensor& noise,
                           const ModelParameters& teacher, const ModelConfig& config,
                           const DiscriminatorParams& disc);

struct AdversarialLosses {
    Tensor disc;
    Tensor generator;
};

// Both losses from one set of logits with caller-supplied re-noising draws.
AdversarialLosses adversarial_losses(const DiscriminatorParams& disc, std::span<const Tensor> real,
                                     std::span<const Tensor> student, std::span<const Prompt> prompts,
                                     const ModelParameters& teacher, const ModelConfig& config, double t,
                                     std::span<const Tensor> real_noise, std::span<const Tensor> student_noise);

struct AdversarialResult {
    double disc_loss = 0.0;
    double generator_loss = 0.0;
    Gradients disc_grads;
};

// Non-saturating logistic losses, all images re-noised at the shared t:
//   disc = mean(softplus(-logit_real) + softplus(logit_fake)), gen = mean(softplus(-logit_fake)).
// Gradients are taken w.r.t. `disc` only.
AdversarialResult adversarial_step(const DiscriminatorParams& disc, std::span<const Tensor> real,
                                   std::span<const Tensor> student, std::span<const Prompt> prompts,
                                   const ModelParameters& teacher, const ModelConfig& config, double t,
                                   std::mt19937_64& rng);

Tensor generator_adversarial_loss(const DiscriminatorParams& disc, std::span<const Tensor> student,
                                  std::span<const Prompt> prompts, const ModelParameters& teacher,
                                  const ModelConfig& config, double t, std::mt19937_64& rng);

// ---- student / fake score ------------------------------------------------

// Runs the student's N-step sampler; the last step is left on the active tape
// so the returned (unclamped) image is differentiable in the student weights.
Tensor student_generate(const ModelParameters& student, const ModelConfig& config, const Prompt& prompt,
                        const Tensor& noise, std::size_t steps);

// One flow-matching step of the fake-score net on student samples.
StepMetrics update_fake_score(ModelParameters& fake, AdamState& state, std::span<const TrainingSample> student_samples,
                              const ModelConfig& config, const AdamConfig& adam, const TimestepSampler& sampler,
                              std::mt19937_64& rng);

struct DistillState {
    ModelParameters student;
    ModelParameters fake;
    DiscriminatorParams disc;
    AdamState student_opt;
    AdamState fake_opt;
    AdamState disc_opt;

    // Student and fake start as copies of the teacher.
    static DistillState from_teacher(const ModelParameters& teacher, const ModelConfig& config,
                                     const DistillConfig& distill, std::uint64_t seed);
};

struct DistillMetrics {
    std::uint64_t step = 0;
    double dmd = 0.0;
    double diff = 0.0;
    double adv = 0.0;
    double disc = 0.0;
    double fake = 0.0;

    // "step=.. dmd=.. diff=.. adv=.. disc=.. fake=.."
    std::string record() const;
};

struct StudentLossParts {
    Tensor dmd;
    Tensor diff;
    Tensor adv;
};

// Student objective pieces for one batch; each is a scalar on the active tape.
StudentLossParts student_losses(const DistillState& state, const ModelParameters& teacher,
                                std::span<const TrainingSample> batch, const ModelConfig& config,
                                const DistillConfig& distill, std::mt19937_64& rng);

// r fake-score updates, one discriminator update, one student update.
DistillMetrics distill_step(DistillState& state, const ModelParameters& teacher,
                            std::span<const TrainingSample> batch, const ModelConfig& config,
                            const DistillConfig& distill, std::mt19937_64& rng);

// Mean squared gap between the student's N-step samples and the teacher's
// 50-step samples from the same prompts and noise draws.
double flow_consistency(const ModelParameters& student, const ModelParameters& teacher, const ModelConfig& config,
                        std::span<const Prompt> prompts, std::span<const Tensor> noises, std::size_t student_steps,
                        std::span<const Tensor> teacher_samples = {});

}  // namespace upix
