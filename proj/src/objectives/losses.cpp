#include "upix/objectives/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "upix/core/ops.hpp"
#include "upix/tokenize/tokens.hpp"

namespace upix {

void LossWeights::validate() const {
    if (!(perceptual >= 0.0) || !(lm >= 0.0)) {
        throw std::invalid_argument("loss weights must be >= 0");
    }
}

double sample_timestep(const TimestepSampler& sampler, std::mt19937_64& rng) {
    if (sampler.mode == SamplerMode::uniform) {
        std::uniform_real_distribution<double> u(timestep_margin, 1.0 - timestep_margin);
        return u(rng);
    }
    if (!(sampler.sigma > 0.0)) {
        throw std::invalid_argument("logit-normal sampler needs sigma > 0");
    }
    std::normal_distribution<double> normal(sampler.mu, sampler.sigma);
    double z = normal(rng);
    double t = 1.0 / (1.0 + std::exp(-z));
    return std::clamp(t, timestep_margin, 1.0 - timestep_margin);
}

Tensor flow_matching_loss(const Tensor& predicted, const Tensor& truth) {
    if (predicted.shape() != truth.shape()) {
        throw ShapeError("flow_matching_loss: " + shape_str(predicted.shape()) + " vs " + shape_str(truth.shape()));
    }
    auto diff = sub(predicted, truth);
    return mean(mul(diff, diff));
}

namespace {

// im2col for a k x k window, stride 1, zero padding k / 2.
std::shared_ptr<const std::vector<std::int64_t>> window_index(std::size_t h, std::size_t w, std::size_t c,
                                                              std::size_t k) {
    auto idx = std::make_shared<std::vector<std::int64_t>>();
    idx->reserve(h * w * k * k * c);
    auto pad = static_cast<std::int64_t>(k / 2);
    for (std::int64_t y = 0; y < static_cast<std::int64_t>(h); ++y)
        for (std::int64_t x = 0; x < static_cast<std::int64_t>(w); ++x)
            for (std::int64_t dy = 0; dy < static_cast<std::int64_t>(k); ++dy)
                for (std::int64_t dx = 0; dx < static_cast<std::int64_t>(k); ++dx)
                    for (std::int64_t ch = 0; ch < static_cast<std::int64_t>(c); ++ch) {
                        auto sy = y + dy - pad;
                        auto sx = x + dx - pad;
                        bool inside = sy >= 0 && sx >= 0 && sy < static_cast<std::int64_t>(h) &&
                                      sx < static_cast<std::int64_t>(w);
                        idx->push_back(inside ? (sy * static_cast<std::int64_t>(w) + sx) *
                                                        static_cast<std::int64_t>(c) +
                                                    ch
                                              : -1);
                    }
    return idx;
}

}  // namespace

FeatureNet FeatureNet::random(std::size_t channels, std::uint64_t seed, std::size_t features) {
    std::mt19937_64 rng(seed);
    FeatureNet net;
    net.conv1 = Tensor::randn({9 * channels, features}, 1.0 / std::sqrt(9.0 * static_cast<double>(channels)), rng);
    net.conv2 = Tensor::randn({4 * features, features}, 1.0 / std::sqrt(4.0 * static_cast<double>(features)), rng);
    net.conv3 = Tensor::randn({4 * features, features}, 1.0 / std::sqrt(4.0 * static_cast<double>(features)), rng);
    return net;
}

std::vector<Tensor> FeatureNet::features(const Tensor& image) const {
    if (image.rank() != 3 || image.dim(0) % 4 != 0 || image.dim(1) % 4 != 0) {
        throw ShapeError("perceptual features need an H x W x C image with H, W divisible by 4, got " +
                         shape_str(image.shape()));
    }
    std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
    std::size_t f = conv1.dim(1);
    auto cols = gather(image, window_index(h, w, c, 3), {h * w, 9 * c});
    auto level1 = reshape(silu(matmul(cols, conv1)), {h, w, f});
    auto level2 = reshape(silu(matmul(patchify(level1, 2).patches, conv2)), {h / 2, w / 2, f});
    auto level3 = reshape(silu(matmul(patchify(level2, 2).patches, conv3)), {h / 4, w / 4, f});
    return {level1, level2, level3};
}

Tensor perceptual_loss(const Tensor& predicted, const Tensor& truth, const FeatureNet& net) {
    if (predicted.shape() != truth.shape()) {
        throw ShapeError("perceptual_loss: " + shape_str(predicted.shape()) + " vs " + shape_str(truth.shape()));
    }
    auto fa = net.features(predicted);
    auto fb = net.features(truth);
    Tensor total;
    for (std::size_t i = 0; i < fa.size(); ++i) {
        auto diff = sub(fa[i], fb[i]);
        auto level = mean(mul(diff, diff));
        total = total.defined() ? add(total, level) : level;
    }
    return total;
}

Tensor lm_loss(const Tensor& logits, std::span<const std::int32_t> ids) {
    if (ids.size() < 2) {
        throw std::invalid_argument("lm_loss: text block needs at least 2 tokens");
    }
    if (logits.rank() != 2 || logits.dim(0) != ids.size()) {
        throw ShapeError("lm_loss: logits " + shape_str(logits.shape()) + " for " + std::to_string(ids.size()) +
                         " ids");
    }
    std::size_t v = logits.dim(1);
    std::size_t n = ids.size() - 1;
    auto logp = log_softmax(slice(logits, 0, 0, n));
    auto index = std::make_shared<std::vector<std::int64_t>>(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto target = ids[i + 1];
        if (target < 0 || static_cast<std::size_t>(target) >= v) {
            throw std::invalid_argument("lm_loss: target id outside the vocabulary");
        }
        (*index)[i] = static_cast<std::int64_t>(i * v + static_cast<std::size_t>(target));
    }
    return scale(mean(gather(logp, index, {n})), -1.0);
}

std::pair<Tensor, LossMetrics> total_loss(const LossTerms& terms, const LossWeights& weights) {
    weights.validate();
    LossMetrics m;
    Tensor total;
    auto accumulate = [&total](const Tensor& term, double w) {
        if (!term.defined()) return;
        auto weighted = w == 1.0 ? term : scale(term, w);
        total = total.defined() ? add(total, weighted) : weighted;
    };
    accumulate(terms.flow, 1.0);
    accumulate(terms.perceptual, weights.perceptual);
    accumulate(terms.lm, weights.lm);
    if (!total.defined()) {
        throw std::invalid_argument("total_loss: no loss terms");
    }
    m.flow = terms.flow.defined() ? terms.flow.item() : 0.0;
    m.perceptual = terms.perceptual.defined() ? terms.perceptual.item() : 0.0;
    m.lm = terms.lm.defined() ? terms.lm.item() : 0.0;
    m.total = total.item();
    return {total, m};
}

}  // namespace upix
