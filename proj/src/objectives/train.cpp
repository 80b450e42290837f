#include "upix/objectives/train.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "upix/core/ops.hpp"
#include "upix/core/tape.hpp"

namespace upix {

std::string_view task_name(TaskTag tag) {
    switch (tag) {
        case TaskTag::t2i:
            return "t2i";
        case TaskTag::edit:
            return "edit";
        case TaskTag::subject:
            return "subject";
    }
    return "?";
}

double adam_update(ParamTree& params, const Gradients& grads, AdamState& state, const AdamConfig& config) {
    std::vector<double> sq;
    for (auto& [name, p] : params) {
        if (!p.requires_grad() || !grads.contains(p)) continue;
        auto g = grads(p).data();
        double s = 0.0;
        for (double x : g) s += x * x;
        sq.push_back(s);
    }
    double norm = std::sqrt(pairwise_sum(sq.data(), sq.size()));
    if (!std::isfinite(norm)) {
        throw TrainingError("non-finite gradient norm; update skipped");
    }
    double clip = (config.clip_norm > 0.0 && norm > config.clip_norm) ? config.clip_norm / norm : 1.0;

    ++state.step;
    double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
    for (auto& [name, p] : params) {
        if (!p.requires_grad() || !grads.contains(p)) continue;
        auto g = grads(p).data();
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.empty()) {
            m.assign(g.size(), 0.0);
            v.assign(g.size(), 0.0);
        }
        auto w = p.mutable_data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            double gi = g[i] * clip;
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            w[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
        }
    }
    return norm;
}

std::string StepMetrics::record() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "step=%llu stage=%zu total=%.9g flow=%.9g perceptual=%.9g lm=%.9g grad_norm=%.9g",
                  static_cast<unsigned long long>(step), stage, loss.total, loss.flow, loss.perceptual, loss.lm,
                  grad_norm);
    return buf;
}

LossTerms sample_loss_terms(const TrainingSample& sample, double t, const Tensor& noise,
                            const ModelParameters& params, const ModelConfig& config, const FeatureNet& features,
                            const LossWeights& weights) {
    LossTerms terms;
    if (sample.text_only) {
        auto text = encode_text(sample.caption, params.at("text_embed"));
        ForwardOptions options;
        options.require_patches = false;
        auto out = forward_model(text, params, config, options);
        terms.lm = lm_loss(out.text_logits, text.text_ids);
        return terms;
    }
    Prompt prompt{sample.caption, sample.conditions};
    auto noisy = interpolate(sample.image, noise, t);
    auto pred = predict(prompt, noisy, t, params, config);
    auto truth = patchify(sample.image, config.patch).patches;
    auto predicted = patchify(pred.clean, config.patch).patches;
    terms.flow = flow_matching_loss(predicted, truth);
    if (weights.perceptual > 0.0) {
        terms.perceptual = perceptual_loss(pred.clean, sample.image, features);
    }
    if (weights.lm > 0.0) {
        terms.lm = lm_loss(pred.text_logits, text_to_ids(sample.caption));
    }
    return terms;
}

StepMetrics train_step(std::span<const TrainingSample> batch, ModelParameters& params, AdamState& state,
                       const TrainContext& ctx, const TimestepSampler& sampler, std::mt19937_64& rng,
                       const StepOptions& options) {
    if (batch.empty()) {
        throw std::invalid_argument("train_step: empty batch");
    }
    ctx.weights.validate();
    for (auto& [name, p] : params) p.set_requires_grad(true);

    StepMetrics metrics;
    Gradients grads;
    {
        Tape tape;
        TapeScope scope(tape);
        std::vector<Tensor> totals;
        std::size_t image_items = 0;
        double flow = 0.0, perceptual = 0.0, lm = 0.0;
        for (const auto& sample : batch) {
            double t = 0.0;
            Tensor noise;
            if (!sample.text_only) {
                t = options.fixed_t ? *options.fixed_t : sample_timestep(sampler, rng);
                noise = Tensor::randn(sample.image.shape(), 1.0, rng);
                metrics.condition_tokens += sample.conditions.size() *
                                            (sample.image.dim(0) / condition_stride) *
                                            (sample.image.dim(1) / condition_stride);
            }
            auto terms = sample_loss_terms(sample, t, noise, params, ctx.config, ctx.features, ctx.weights);
            auto [total, m] = total_loss(terms, ctx.weights);
            totals.push_back(total);
            if (!sample.text_only) {
                ++image_items;
                flow += m.flow;
                perceptual += m.perceptual;
            }
            lm += m.lm;
        }
        std::vector<Tensor> flat;
        for (const auto& t : totals) flat.push_back(reshape(t, {1}));
        auto loss = scale(sum(concat(flat, 0)), 1.0 / static_cast<double>(batch.size()));
        metrics.loss.total = loss.item();
        if (!std::isfinite(metrics.loss.total)) {
            throw TrainingError("train_step: non-finite loss");
        }
        metrics.loss.flow = image_items ? flow / static_cast<double>(image_items) : 0.0;
        metrics.loss.perceptual = image_items ? perceptual / static_cast<double>(image_items) : 0.0;
        metrics.loss.lm = lm / static_cast<double>(batch.size());
        grads = backward(loss);
    }
    metrics.grad_norm = adam_update(params, grads, state, ctx.adam);
    metrics.step = state.step;
    return metrics;
}

}  // namespace upix
