#include "upix/objectives/probe.hpp"

#include <random>

#include "upix/core/ops.hpp"

namespace upix {

ProbeSetup gradient_probe_setup(std::uint64_t seed, double spread) {
    ProbeSetup s;
    s.config = ModelConfig::tiny(4);
    s.params = init_parameters(s.config, seed);
    std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ull);
    for (auto& [name, p] : s.params) {
        auto fresh = Tensor::randn(p.shape(), spread, rng);
        bool gain = name.find("norm") != std::string::npos;
        if (gain) {
            auto d = fresh.mutable_data();
            for (auto& v : d) v += 1.0;
        }
        p = fresh;
    }
    s.sample.image = Tensor::randn({4, 8, 3}, 0.5, rng);
    s.sample.caption = "a";
    s.noise = Tensor::randn({4, 8, 3}, 1.0, rng);
    s.features = FeatureNet::random(s.config.channels, seed + 1);
    s.image_readout = Tensor::randn({4, 8, 3}, 1.0, rng);
    s.text_readout = Tensor::randn({3, s.config.vocab}, 1.0, rng);
    return s;
}

ScalarFunction model_readout_probe(const ProbeSetup& setup) {
    return [setup](const ParamTree& params) {
        Prompt prompt{setup.sample.caption, setup.sample.conditions};
        auto noisy = interpolate(setup.sample.image, setup.noise, setup.t);
        auto pred = predict(prompt, noisy, setup.t, params, setup.config);
        return add(sum(mul(pred.clean, setup.image_readout)), sum(mul(pred.text_logits, setup.text_readout)));
    };
}

ScalarFunction model_loss_probe(const ProbeSetup& setup) {
    return [setup](const ParamTree& params) {
        auto terms = sample_loss_terms(setup.sample, setup.t, setup.noise, params, setup.config, setup.features,
                                       setup.weights);
        return total_loss(terms, setup.weights).first;
    };
}

}  // namespace upix
