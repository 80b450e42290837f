#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "upix/attention/attention.hpp"
#include "upix/core/tensor.hpp"
#include "upix/tokenize/tokens.hpp"

namespace upix {

struct ModelConfig {
    std::size_t layers = 2;
    std::size_t dim = 64;
    std::size_t heads = 4;
    std::size_t mlp_ratio = 4;
    std::size_t patch = 2;
    std::size_t channels = 3;
    std::size_t vocab = vocab_size;
    std::size_t cond_stride = condition_stride;
    std::array<std::size_t, 3> rope_split{8, 4, 4};
    double rope_base = 10000.0;

    std::size_t head_dim() const { return dim / heads; }
    std::size_t patch_dim() const { return patch * patch * channels; }
    RopeParams rope() const { return {rope_base, rope_split}; }
    void validate() const;

    // Two blocks, width 64, four heads, patch 2, RGB.
    static ModelConfig toy();
    // Single block at width 16 used for gradient checks.
    static ModelConfig tiny(std::size_t patch = 2);

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

using ModelParameters = ParamTree;

std::map<std::string, Shape> expected_shapes(const ModelConfig& config);
// Normal(0, 0.02) weights, unit norm gains, zero output projections.
ModelParameters init_parameters(const ModelConfig& config, std::uint64_t seed);
// Throws std::invalid_argument on missing, extra, or mis-shaped tensors.
void check_parameters(const ModelConfig& config, const ModelParameters& params);

inline constexpr double rmsnorm_eps = 1e-6;

Tensor rmsnorm(const Tensor& x, const Tensor& gain);
Tensor swiglu_mlp(const Tensor& x, const Tensor& w_gate, const Tensor& w_up, const Tensor& w_down);

struct BlockWeights {
    Tensor attn_norm;
    Tensor wq, wk, wv, wo;
    Tensor mlp_norm;
    Tensor w_gate, w_up, w_down;
};

BlockWeights block_weights(const ModelParameters& params, std::size_t index);

// Pre-norm residual block: h = x + Attn(RMSNorm(x)); out = h + MLP(RMSNorm(h)).
Tensor transformer_block(const Tensor& x, const AttentionMask& mask, std::span<const TokenPosition> positions,
                         const BlockWeights& weights, const ModelConfig& config);

struct ForwardOptions {
    bool require_patches = true;
    bool capture_blocks = false;
};

struct ModelOutput {
    Tensor patches;      // #Generation x (p*p*C), undefined without Generation tokens
    Tensor text_logits;  // #Text x V, undefined without Text tokens
    std::vector<Tensor> block_outputs;  // L x D after each block when captured
};

ModelOutput forward_model(const TokenSequence& seq, const ModelParameters& params, const ModelConfig& config,
                          const ForwardOptions& options = {});

// Inverse of patchify's layout.
Tensor reassemble(const PatchGrid& predictions);

ConditionEncoderWeights condition_weights(const ModelParameters& params);
TimestepWeights timestep_weights(const ModelParameters& params);

// Everything the model is conditioned on besides the noisy image.
struct Prompt {
    std::string text;
    std::vector<Tensor> conditions;  // H x W x C reference images, in order
};

// Assembles condition, text, timestep and generation tokens for one sample.
TokenSequence build_sequence(const Prompt& prompt, const Tensor& noisy, double t, const ModelParameters& params,
                             const ModelConfig& config);

struct Prediction {
    Tensor clean;        // H x W x C image estimate
    Tensor text_logits;  // #Text x V
    std::vector<Tensor> block_outputs;
    std::vector<std::size_t> generation_rows;  // [first, last) in block_outputs
};

Prediction predict(const Prompt& prompt, const Tensor& noisy, double t, const ModelParameters& params,
                   const ModelConfig& config, bool capture_blocks = false);

}  // namespace upix
