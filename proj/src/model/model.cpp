#include "upix/model/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "upix/core/ops.hpp"

namespace upix {

void ModelConfig::validate() const {
    if (layers > 64 || dim == 0 || heads == 0 || mlp_ratio == 0 || patch == 0 || channels == 0 || vocab == 0 ||
        cond_stride == 0) {
        throw std::invalid_argument("model config: counts must be >= 1");
    }
    if (dim % heads != 0) {
        throw std::invalid_argument("model config: dim " + std::to_string(dim) + " not divisible by heads " +
                                    std::to_string(heads));
    }
    if (dim % 2 != 0) {
        throw std::invalid_argument("model config: dim must be even");
    }
    if (vocab != vocab_size) {
        throw std::invalid_argument("model config: vocabulary must have " + std::to_string(vocab_size) + " entries");
    }
    if (cond_stride != condition_stride) {
        throw std::invalid_argument("model config: condition stride must be " + std::to_string(condition_stride));
    }
    auto rp = rope();
    rp.validate();
    if (rp.head_dim() != head_dim()) {
        throw std::invalid_argument("model config: rope split does not sum to the head dimension");
    }
}

ModelConfig ModelConfig::toy() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny(std::size_t patch) {
    ModelConfig c;
    c.layers = 1;
    c.dim = 16;
    c.heads = 2;
    c.patch = patch;
    c.rope_split = {4, 2, 2};
    return c;
}

std::map<std::string, Shape> expected_shapes(const ModelConfig& config) {
    config.validate();
    std::size_t d = config.dim;
    std::size_t hidden = config.mlp_ratio * d;
    std::map<std::string, Shape> s;
    s["text_embed"] = {config.vocab, d};
    s["cond.conv1"] = {4 * config.channels, d};
    s["cond.conv2"] = {4 * d, d};
    s["cond.proj"] = {d, d};
    s["time.fc1"] = {d, d};
    s["time.fc2"] = {d, d};
    s["patch_in"] = {config.patch_dim(), d};
    for (std::size_t i = 0; i < config.layers; ++i) {
        auto p = "blocks." + std::to_string(i) + ".";
        s[p + "attn_norm"] = {d};
        s[p + "wq"] = {d, d};
        s[p + "wk"] = {d, d};
        s[p + "wv"] = {d, d};
        s[p + "wo"] = {d, d};
        s[p + "mlp_norm"] = {d};
        s[p + "w_gate"] = {d, hidden};
        s[p + "w_up"] = {d, hidden};
        s[p + "w_down"] = {hidden, d};
    }
    s["final_norm"] = {d};
    s["patch_head"] = {d, config.patch_dim()};
    s["text_head"] = {d, config.vocab};
    return s;
}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

const Tensor& lookup(const ModelParameters& params, const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) {
        throw std::invalid_argument("missing parameter '" + name + "'");
    }
    return it->second;
}

}  // namespace

ModelParameters init_parameters(const ModelConfig& config, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ModelParameters params;
    for (const auto& [name, shape] : expected_shapes(config)) {
        if (ends_with(name, "norm")) {
            params[name] = Tensor::full(shape, 1.0);
        } else if (ends_with(name, ".wo") || ends_with(name, ".w_down")) {
            params[name] = Tensor::zeros(shape);
        } else {
            params[name] = Tensor::randn(shape, 0.02, rng);
        }
    }
    return params;
}

void check_parameters(const ModelConfig& config, const ModelParameters& params) {
    auto shapes = expected_shapes(config);
    for (const auto& [name, shape] : shapes) {
        const auto& t = lookup(params, name);
        if (t.shape() != shape) {
            throw std::invalid_argument("parameter '" + name + "' has shape " + shape_str(t.shape()) +
                                        ", config requires " + shape_str(shape));
        }
    }
    for (const auto& [name, t] : params) {
        if (shapes.count(name) == 0) {
            throw std::invalid_argument("unexpected parameter '" + name + "'");
        }
    }
}

Tensor rmsnorm(const Tensor& x, const Tensor& gain) {
    auto ms = mean_last(mul(x, x));
    auto inv = power(add(ms, Tensor::full(ms.shape(), rmsnorm_eps)), -0.5);
    return mul_bcast(mul_bcast(x, inv), gain);
}

Tensor swiglu_mlp(const Tensor& x, const Tensor& w_gate, const Tensor& w_up, const Tensor& w_down) {
    return matmul(mul(silu(matmul(x, w_gate)), matmul(x, w_up)), w_down);
}

BlockWeights block_weights(const ModelParameters& params, std::size_t index) {
    auto p = "blocks." + std::to_string(index) + ".";
    return {lookup(params, p + "attn_norm"), lookup(params, p + "wq"),     lookup(params, p + "wk"),
            lookup(params, p + "wv"),        lookup(params, p + "wo"),     lookup(params, p + "mlp_norm"),
            lookup(params, p + "w_gate"),    lookup(params, p + "w_up"),   lookup(params, p + "w_down")};
}

namespace {

Tensor split_heads(const Tensor& x, std::size_t heads) {
    std::size_t len = x.dim(0), d = x.dim(1);
    return transpose(reshape(x, {len, heads, d / heads}), {1, 0, 2});
}

Tensor merge_heads(const Tensor& x) {
    std::size_t heads = x.dim(0), len = x.dim(1), hd = x.dim(2);
    return reshape(transpose(x, {1, 0, 2}), {len, heads * hd});
}

}  // namespace

Tensor transformer_block(const Tensor& x, const AttentionMask& mask, std::span<const TokenPosition> positions,
                         const BlockWeights& w, const ModelConfig& config) {
    if (x.rank() != 2 || x.dim(1) != config.dim || x.dim(0) != mask.size || positions.size() != mask.size) {
        throw ShapeError("transformer_block: input " + shape_str(x.shape()) + " does not match mask of size " +
                         std::to_string(mask.size));
    }
    auto rope = config.rope();
    auto h = rmsnorm(x, w.attn_norm);
    auto q = apply_rope(split_heads(matmul(h, w.wq), config.heads), positions, rope);
    auto k = apply_rope(split_heads(matmul(h, w.wk), config.heads), positions, rope);
    auto v = split_heads(matmul(h, w.wv), config.heads);
    auto attn = matmul(merge_heads(attention_forward(q, k, v, mask)), w.wo);
    auto mid = add(x, attn);
    return add(mid, swiglu_mlp(rmsnorm(mid, w.mlp_norm), w.w_gate, w.w_up, w.w_down));
}

ModelOutput forward_model(const TokenSequence& seq, const ModelParameters& params, const ModelConfig& config,
                          const ForwardOptions& options) {
    validate_sequence(seq);
    if (seq.empty()) {
        throw std::invalid_argument("forward_model: empty sequence");
    }
    auto [gen_first, gen_last] = seq.block(SegmentKind::generation);
    if (options.require_patches && gen_last == gen_first) {
        throw std::invalid_argument("forward_model: patch predictions requested but sequence has no generation tokens");
    }
    auto mask = build_hybrid_mask(seq.kinds);
    ModelOutput out;
    auto x = seq.embeddings;
    for (std::size_t i = 0; i < config.layers; ++i) {
        x = transformer_block(x, mask, seq.positions, block_weights(params, i), config);
        if (options.capture_blocks) out.block_outputs.push_back(x);
    }
    auto h = rmsnorm(x, lookup(params, "final_norm"));
    if (gen_last > gen_first) {
        out.patches = matmul(slice(h, 0, gen_first, gen_last), lookup(params, "patch_head"));
    }
    auto [text_first, text_last] = seq.block(SegmentKind::text);
    if (text_last > text_first) {
        out.text_logits = matmul(slice(h, 0, text_first, text_last), lookup(params, "text_head"));
    }
    return out;
}

Tensor reassemble(const PatchGrid& predictions) { return unpatchify(predictions); }

ConditionEncoderWeights condition_weights(const ModelParameters& params) {
    return {lookup(params, "cond.conv1"), lookup(params, "cond.conv2"), lookup(params, "cond.proj")};
}

TimestepWeights timestep_weights(const ModelParameters& params) {
    return {lookup(params, "time.fc1"), lookup(params, "time.fc2")};
}

TokenSequence build_sequence(const Prompt& prompt, const Tensor& noisy, double t, const ModelParameters& params,
                             const ModelConfig& config) {
    std::vector<TokenSequence> conds;
    auto cw = condition_weights(params);
    for (const auto& image : prompt.conditions) conds.push_back(encode_condition(image, cw));
    auto condition = concat_fragments(conds);
    auto text = encode_text(prompt.text, lookup(params, "text_embed"));
    auto timestep = timestep_token(t, timestep_weights(params));
    auto generation = generation_fragment(noisy, lookup(params, "patch_in"), config.patch);
    return assemble_sequence(condition, text, timestep, generation);
}

Prediction predict(const Prompt& prompt, const Tensor& noisy, double t, const ModelParameters& params,
                   const ModelConfig& config, bool capture_blocks) {
    auto seq = build_sequence(prompt, noisy, t, params, config);
    ForwardOptions options;
    options.capture_blocks = capture_blocks;
    auto out = forward_model(seq, params, config, options);
    PatchGrid grid{out.patches, noisy.dim(0) / config.patch, noisy.dim(1) / config.patch, config.patch,
                   config.channels};
    auto [first, last] = seq.block(SegmentKind::generation);
    return {reassemble(grid), out.text_logits, std::move(out.block_outputs), {first, last}};
}

}  // namespace upix
