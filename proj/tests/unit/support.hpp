#pragma once

#include <cmath>
#include <random>

#include "upix/core/ops.hpp"
#include "upix/core/tape.hpp"
#include "upix/core/tensor.hpp"

namespace upix::test {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double stddev = 1.0) {
    return Tensor::randn(std::move(shape), stddev, rng);
}

inline Tensor vec(std::vector<double> v) {
    auto n = v.size();
    return Tensor::from_data({n}, std::move(v));
}

// Gradient of a scalar function of one tensor.
template <typename F>
Tensor grad_of(F&& f, const Tensor& x) {
    auto leaf = x.clone();
    leaf.set_requires_grad(true);
    Tape tape;
    TapeScope scope(tape);
    auto g = backward(f(leaf));
    return g(leaf);
}

}  // namespace upix::test
