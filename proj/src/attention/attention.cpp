#include "upix/attention/attention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "upix/core/ops.hpp"

namespace upix {

AttentionMask build_hybrid_mask(std::span<const SegmentKind> kinds) {
    if (kinds.empty()) {
        throw std::invalid_argument("build_hybrid_mask: empty sequence");
    }
    std::size_t n = kinds.size();
    auto allowed = std::make_shared<std::vector<std::uint8_t>>(n * n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t visible = kinds[i] == SegmentKind::generation ? n : i + 1;
        for (std::size_t j = 0; j < visible; ++j) (*allowed)[i * n + j] = 1;
    }
    return {n, std::move(allowed)};
}

void RopeParams::validate() const {
    for (auto s : split) {
        if (s < 2 || s % 2 != 0) {
            throw std::invalid_argument("rope: every axis sub-dimension must be even and >= 2");
        }
    }
    if (!(base > 0.0)) {
        throw std::invalid_argument("rope: base must be positive");
    }
}

RopeParams RopeParams::for_head_dim(std::size_t head_dim, double base) {
    RopeParams p;
    p.base = base;
    p.split = {head_dim / 2, head_dim / 4, head_dim - head_dim / 2 - head_dim / 4};
    p.validate();
    return p;
}

Tensor apply_rope(const Tensor& x, std::span<const TokenPosition> positions, const RopeParams& params) {
    params.validate();
    if (x.rank() != 3 || x.dim(2) != params.head_dim() || x.dim(1) != positions.size()) {
        throw ShapeError("apply_rope: input " + shape_str(x.shape()) + " does not match " +
                         std::to_string(positions.size()) + " positions with head dim " +
                         std::to_string(params.head_dim()));
    }
    std::size_t len = positions.size();
    std::size_t d = params.head_dim();
    std::vector<double> cosv(len * d), sinv(len * d);
    auto swap_index = std::make_shared<std::vector<std::int64_t>>(x.numel());
    for (std::size_t i = 0; i < len; ++i) {
        const std::int64_t axis_pos[3] = {positions[i].stream, std::max<std::int64_t>(positions[i].row, 0),
                                          std::max<std::int64_t>(positions[i].col, 0)};
        std::size_t offset = 0;
        for (std::size_t a = 0; a < 3; ++a) {
            std::size_t sub = params.split[a];
            for (std::size_t k = 0; k < sub / 2; ++k) {
                double theta = std::pow(params.base, -2.0 * static_cast<double>(k) / static_cast<double>(sub));
                double angle = static_cast<double>(axis_pos[a]) * theta;
                std::size_t c0 = i * d + offset + 2 * k;
                cosv[c0] = cosv[c0 + 1] = std::cos(angle);
                sinv[c0] = -std::sin(angle);
                sinv[c0 + 1] = std::sin(angle);
            }
            offset += sub;
        }
    }
    for (std::size_t flat = 0; flat < x.numel(); ++flat) {
        (*swap_index)[flat] = static_cast<std::int64_t>(flat ^ 1U);
    }
    auto cos_t = Tensor::from_data({len, d}, std::move(cosv));
    auto sin_t = Tensor::from_data({len, d}, std::move(sinv));
    auto swapped = gather(x, swap_index, x.shape());
    return add(mul_bcast(x, cos_t), mul_bcast(swapped, sin_t));
}

Tensor attend_logits(const Tensor& logits, const Tensor& v, const AttentionMask& mask) {
    if (logits.rank() != 3 || logits.dim(1) != mask.size || logits.dim(2) != mask.size) {
        throw ShapeError("attention: logits " + shape_str(logits.shape()) + " do not match mask size " +
                         std::to_string(mask.size));
    }
    return matmul(softmax(logits, mask.allowed), v);
}

Tensor attention_forward(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask& mask) {
    if (q.rank() != 3 || q.shape() != k.shape() || k.shape() != v.shape()) {
        throw ShapeError("attention: q/k/v must share a heads x L x d shape");
    }
    double scale_factor = 1.0 / std::sqrt(static_cast<double>(q.dim(2)));
    auto logits = scale(matmul(q, transpose(k)), scale_factor);
    return attend_logits(logits, v, mask);
}

}  // namespace upix
