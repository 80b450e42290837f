#pragma once

#include <cstdint>

#include "upix/core/gradcheck.hpp"
#include "upix/objectives/train.hpp"

namespace upix {

// A small fixed problem for finite-difference checks of the whole model:
// one block at width 16, patch 4, a 4 x 8 image and the caption "a"
// (3 text, 1 timestep and 2 generation tokens).
struct ProbeSetup {
    ModelConfig config;
    ModelParameters params;
    TrainingSample sample;
    double t = 0.37;
    Tensor noise;
    FeatureNet features;
    LossWeights weights;
    // Fixed random readout of the model outputs.
    Tensor image_readout;  // 4 x 8 x 3
    Tensor text_readout;   // 3 x vocab
};

// Weights are redrawn at `spread` (gains at 1 + spread * N(0,1)) so that no
// path is zeroed by the usual output-projection initialisation.
ProbeSetup gradient_probe_setup(std::uint64_t seed, double spread = 0.3);

// <image_readout, predicted clean image> + <text_readout, text logits> as a
// function of every model weight.
ScalarFunction model_readout_probe(const ProbeSetup& setup);

// Total training loss of the probe sample as a function of the model weights.
ScalarFunction model_loss_probe(const ProbeSetup& setup);

}  // namespace upix
