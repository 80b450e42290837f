#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace upix {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised for operations the engine cannot differentiate (e.g. argmax under a tape).
class UnsupportedError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class TapeError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::uint64_t id = 0;
    // Serial of the tape that produced this node; 0 for leaves and constants.
    std::uint64_t tape_serial = 0;
    std::size_t slot = 0;
};

std::uint64_t next_node_id();

}  // namespace detail

// Shared handle to a dense row-major float64 buffer. Copies alias the same
// storage; use clone() for a deep copy.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from_data(Shape shape, std::vector<double> values);
    static Tensor scalar(double value);
    static Tensor randn(Shape shape, double stddev, std::mt19937_64& rng);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    // Writable view. Refused on values produced by a recorded primitive.
    std::span<double> mutable_data();
    double item() const;
    double at(std::size_t flat_index) const { return data()[flat_index]; }

    bool requires_grad() const;
    bool is_leaf() const;
    Tensor& set_requires_grad(bool on = true);

    Tensor detach() const;
    Tensor clone() const;

    std::uint64_t id() const;
    const std::shared_ptr<detail::Node>& node() const { return node_; }

    static Tensor wrap(std::shared_ptr<detail::Node> node);

private:
    std::shared_ptr<detail::Node> node_;
};

bool bitwise_equal(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

// Named parameter tree; ordered so iteration (and serialization) is stable.
using ParamTree = std::map<std::string, Tensor>;

ParamTree clone_tree(const ParamTree& tree);
ParamTree frozen_copy(const ParamTree& tree);
void set_requires_grad(ParamTree& tree, bool on);
bool bitwise_equal(const ParamTree& a, const ParamTree& b);
std::size_t parameter_count(const ParamTree& tree);

}  // namespace upix
