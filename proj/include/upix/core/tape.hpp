#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "upix/core/tensor.hpp"

namespace upix {

class Gradients;

enum class Primitive : std::uint8_t {
    add,
    sub,
    mul,
    scale,
    matmul,
    transpose,
    reshape,
    concat,
    slice,
    sum,
    mean,
    exp,
    log,
    sigmoid,
    silu,
    softplus,
    softmax,
    log_softmax,
    power,
    broadcast,
    gather,
    argmax,
    count_,
};

std::string_view primitive_name(Primitive op);
// Throws std::invalid_argument for names outside the primitive table.
Primitive primitive_from_name(std::string_view name);

class GradSink {
public:
    GradSink(std::vector<std::vector<double>>& grads, std::span<const std::size_t> slots,
             std::span<const std::size_t> sizes)
        : grads_(grads), slots_(slots), sizes_(sizes) {}

    bool wants(std::size_t input) const;
    // Zero-initialized on first access. Empty when the input is not tracked.
    std::span<double> grad(std::size_t input);

private:
    std::vector<std::vector<double>>& grads_;
    std::span<const std::size_t> slots_;
    std::span<const std::size_t> sizes_;
};

using BackwardFn = std::function<void(std::span<const double> grad_out, GradSink& sink)>;

inline constexpr std::size_t untracked_slot = static_cast<std::size_t>(-1);

// Ordered record of primitive applications. Thread-confined: activate with a
// TapeScope on the thread that builds the step.
class Tape {
public:
    Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    struct Record {
        Primitive op;
        std::vector<std::size_t> input_slots;
        std::vector<std::size_t> input_sizes;
        std::size_t output_slot;
        BackwardFn backward;
    };

    std::uint64_t serial() const { return serial_; }
    std::size_t size() const { return records_.size(); }
    const Record& record(std::size_t i) const { return records_[i]; }

    // Appends a record; assigns `output` a slot on this tape.
    void record(Primitive op, std::span<const Tensor> inputs, const Tensor& output, BackwardFn backward);

    static Tape* active();

private:
    friend class TapeScope;
    friend Gradients backward(const Tensor& loss);

    std::size_t slot_for_input(const Tensor& t);

    std::uint64_t serial_;
    std::size_t slot_count_ = 0;
    std::vector<Record> records_;
    std::unordered_map<std::uint64_t, std::size_t> leaf_slots_;
    std::vector<Tensor> leaves_;
};

// Makes `tape` the active tape for this thread until destruction. A scope
// constructed with nullptr suspends recording.
class TapeScope {
public:
    explicit TapeScope(Tape* tape);
    explicit TapeScope(Tape& tape) : TapeScope(&tape) {}
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

class Gradients {
public:
    bool contains(const Tensor& leaf) const { return by_id_.count(leaf.id()) != 0; }
    // Gradient for `leaf`, zeros of the leaf's shape when it was never reached.
    Tensor operator()(const Tensor& leaf) const;
    std::size_t size() const { return by_id_.size(); }

    void insert(const Tensor& leaf, Tensor grad) { by_id_[leaf.id()] = std::move(grad); }

private:
    std::unordered_map<std::uint64_t, Tensor> by_id_;
};

// Reverse sweep of the active tape from a scalar loss.
Gradients backward(const Tensor& loss);

}  // namespace upix
