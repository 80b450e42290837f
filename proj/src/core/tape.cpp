#include "upix/core/tape.hpp"

#include <array>
#include <atomic>
#include <stdexcept>
#include <string>

namespace upix {

namespace {

constexpr std::array<std::string_view, static_cast<std::size_t>(Primitive::count_)> primitive_names = {
    "add",  "sub",     "mul",      "scale",   "matmul",      "transpose", "reshape",   "concat",
    "slice", "sum",    "mean",     "exp",     "log",         "sigmoid",   "silu",      "softplus",
    "softmax", "log_softmax", "power", "broadcast", "gather", "argmax",
};

thread_local Tape* active_tape = nullptr;

std::uint64_t next_tape_serial() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace

std::string_view primitive_name(Primitive op) {
    auto i = static_cast<std::size_t>(op);
    if (i >= primitive_names.size()) {
        throw std::invalid_argument("unknown primitive identifier " + std::to_string(i));
    }
    return primitive_names[i];
}

Primitive primitive_from_name(std::string_view name) {
    for (std::size_t i = 0; i < primitive_names.size(); ++i) {
        if (primitive_names[i] == name) {
            return static_cast<Primitive>(i);
        }
    }
    throw std::invalid_argument("unknown primitive identifier '" + std::string(name) + "'");
}

bool GradSink::wants(std::size_t input) const { return slots_[input] != untracked_slot; }

std::span<double> GradSink::grad(std::size_t input) {
    auto slot = slots_[input];
    if (slot == untracked_slot) {
        return {};
    }
    auto& g = grads_[slot];
    if (g.empty()) {
        g.assign(sizes_[input], 0.0);
    }
    return g;
}

Tape::Tape() : serial_(next_tape_serial()) {}

Tape* Tape::active() { return active_tape; }

std::size_t Tape::slot_for_input(const Tensor& t) {
    const auto& node = *t.node();
    if (!node.requires_grad) {
        return untracked_slot;
    }
    if (node.tape_serial == serial_) {
        return node.slot;
    }
    if (node.tape_serial != 0) {
        throw TapeError("input was recorded on a different tape");
    }
    auto [it, inserted] = leaf_slots_.try_emplace(node.id, slot_count_);
    if (inserted) {
        ++slot_count_;
        leaves_.push_back(t);
    }
    return it->second;
}

void Tape::record(Primitive op, std::span<const Tensor> inputs, const Tensor& output, BackwardFn backward) {
    Record r{op, {}, {}, 0, std::move(backward)};
    r.input_slots.reserve(inputs.size());
    r.input_sizes.reserve(inputs.size());
    for (const auto& in : inputs) {
        r.input_slots.push_back(slot_for_input(in));
        r.input_sizes.push_back(in.numel());
    }
    auto& node = *output.node();
    node.requires_grad = true;
    node.tape_serial = serial_;
    node.slot = slot_count_++;
    r.output_slot = node.slot;
    records_.push_back(std::move(r));
}

TapeScope::TapeScope(Tape* tape) : previous_(active_tape) { active_tape = tape; }

TapeScope::~TapeScope() { active_tape = previous_; }

Tensor Gradients::operator()(const Tensor& leaf) const {
    auto it = by_id_.find(leaf.id());
    if (it == by_id_.end()) {
        return Tensor::zeros(leaf.shape());
    }
    return it->second;
}

Gradients backward(const Tensor& loss) {
    Tape* tape = Tape::active();
    if (tape == nullptr) {
        throw TapeError("backward called without an active tape");
    }
    if (loss.numel() != 1) {
        throw TapeError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    }
    if (loss.node()->tape_serial != tape->serial()) {
        throw TapeError("loss was not produced on the active tape");
    }
    std::vector<std::vector<double>> grads(tape->slot_count_);
    grads[loss.node()->slot].assign(1, 1.0);
    for (auto it = tape->records_.rbegin(); it != tape->records_.rend(); ++it) {
        auto& out = grads[it->output_slot];
        if (out.empty()) {
            continue;
        }
        GradSink sink(grads, it->input_slots, it->input_sizes);
        it->backward(out, sink);
        // Intermediate gradients are dead once their producer has run.
        std::vector<double>().swap(out);
    }
    Gradients result;
    for (const auto& leaf : tape->leaves_) {
        auto slot = tape->leaf_slots_.at(leaf.id());
        auto& g = grads[slot];
        if (g.empty()) {
            result.insert(leaf, Tensor::zeros(leaf.shape()));
        } else {
            result.insert(leaf, Tensor::from_data(leaf.shape(), std::move(g)));
        }
    }
    return result;
}

}  // namespace upix
