#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "upix/core/tape.hpp"
#include "upix/core/tensor.hpp"

namespace upix {

// Per-primitive attributes. Unused fields are ignored.
//
// Shape rules:
//   add, sub, mul      equal shapes
//   scale              any; multiplies by `scalar`
//   matmul             [M,K]x[K,N] or batched [B,M,K]x[B,K,N]
//   transpose          permutes axes by `perm` (empty = swap last two)
//   reshape            same element count, new `shape`
//   concat             equal shapes except along `axis`
//   slice              [begin, end) along `axis`
//   sum, mean          all elements -> rank 0, or last axis (keepdim) when !all
//   exp .. softplus    elementwise
//   softmax            last axis; optional `mask` over the last two axes
//   log_softmax        last axis
//   power              elementwise x^scalar
//   broadcast          to `shape`; the input must equal a suffix of `shape`
//                      (trailing expansion) or its leading axes followed by
//                      size-1 axes (keepdim expansion)
//   gather             out[i] = in[index[i]], index -1 yields 0; output `shape`
//   argmax             last axis; not differentiable
struct PrimitiveAttrs {
    double scalar = 0.0;
    std::size_t axis = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
    bool all = true;
    Shape shape;
    std::vector<std::size_t> perm;
    std::shared_ptr<const std::vector<std::int64_t>> index;
    std::shared_ptr<const std::vector<std::uint8_t>> mask;
};

Tensor apply_primitive(Primitive op, std::span<const Tensor> inputs, const PrimitiveAttrs& attrs = {});
Tensor apply_primitive(std::string_view op_name, std::span<const Tensor> inputs,
                       const PrimitiveAttrs& attrs = {});

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a, std::vector<std::size_t> perm = {});
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor sum(const Tensor& a);
Tensor sum_last(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mean_last(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor softmax(const Tensor& a, std::shared_ptr<const std::vector<std::uint8_t>> mask = nullptr);
Tensor log_softmax(const Tensor& a);
Tensor power(const Tensor& a, double exponent);
Tensor broadcast(const Tensor& a, Shape shape);
Tensor gather(const Tensor& a, std::shared_ptr<const std::vector<std::int64_t>> index, Shape shape);
Tensor argmax_last(const Tensor& a);

// a + broadcast(b) and a * broadcast(b) with b broadcast to a's shape.
Tensor add_bcast(const Tensor& a, const Tensor& b);
Tensor mul_bcast(const Tensor& a, const Tensor& b);

// Sum using a fixed pairwise tree; identical results regardless of caller.
double pairwise_sum(const double* values, std::size_t count, std::size_t stride = 1);

}  // namespace upix
