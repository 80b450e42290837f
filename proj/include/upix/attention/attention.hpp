#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "upix/core/tensor.hpp"
#include "upix/tokenize/tokens.hpp"

namespace upix {

// allowed[i * size + j] != 0 means query token i may attend key token j.
struct AttentionMask {
    std::size_t size = 0;
    std::shared_ptr<const std::vector<std::uint8_t>> allowed;

    bool at(std::size_t i, std::size_t j) const { return (*allowed)[i * size + j] != 0; }
};

// Generation rows see every token; condition, text and timestep rows see
// themselves and earlier tokens only.
AttentionMask build_hybrid_mask(std::span<const SegmentKind> kinds);

struct RopeParams {
    double base = 10000.0;
    std::array<std::size_t, 3> split{};  // stream, row, column sub-dimensions

    std::size_t head_dim() const { return split[0] + split[1] + split[2]; }
    void validate() const;
    // (d/2, d/4, d/4)
    static RopeParams for_head_dim(std::size_t head_dim, double base = 10000.0);
};

// x: heads x L x d. Each axis sub-block rotates coordinate pairs by
// position * base^(-2k / sub_dim); spatial positions of -1 count as 0.
Tensor apply_rope(const Tensor& x, std::span<const TokenPosition> positions, const RopeParams& params);

// q, k, v: heads x L x d. Softmax(q k^T / sqrt(d)) restricted to allowed keys.
Tensor attention_forward(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask& mask);

// Masked softmax over raw logits (heads x L x L) followed by the value product.
Tensor attend_logits(const Tensor& logits, const Tensor& v, const AttentionMask& mask);

}  // namespace upix
