#include "upix/core/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>

namespace upix {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

std::uint64_t next_node_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace detail

namespace {

std::shared_ptr<detail::Node> make_node(Shape shape, std::vector<double> values) {
    for (auto d : shape) {
        if (d == 0) {
            throw ShapeError("tensor axes must be >= 1, got " + shape_str(shape));
        }
    }
    if (values.size() != shape_numel(shape)) {
        throw ShapeError("element count " + std::to_string(values.size()) + " does not match shape " +
                         shape_str(shape));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->id = detail::next_node_id();
    return node;
}

const detail::Node& checked(const std::shared_ptr<detail::Node>& node) {
    if (!node) {
        throw std::logic_error("use of an undefined tensor");
    }
    return *node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape) {
    auto n = shape_numel(shape);
    return wrap(make_node(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::full(Shape shape, double value) {
    auto n = shape_numel(shape);
    return wrap(make_node(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values) {
    return wrap(make_node(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(double value) { return wrap(make_node({}, {value})); }

Tensor Tensor::randn(Shape shape, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) {
        x = stddev * normal(rng);
    }
    return from_data(std::move(shape), std::move(v));
}

Tensor Tensor::wrap(std::shared_ptr<detail::Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
}

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return checked(node_).data.size(); }

std::span<const double> Tensor::data() const { return checked(node_).data; }

std::span<double> Tensor::mutable_data() {
    checked(node_);
    if (node_->tape_serial != 0) {
        throw TapeError("cannot mutate a value recorded on a tape");
    }
    return node_->data;
}

double Tensor::item() const {
    const auto& n = checked(node_);
    if (n.data.size() != 1) {
        throw ShapeError("item() on tensor of shape " + shape_str(n.shape));
    }
    return n.data[0];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

bool Tensor::is_leaf() const { return checked(node_).tape_serial == 0; }

Tensor& Tensor::set_requires_grad(bool on) {
    checked(node_);
    if (node_->tape_serial != 0) {
        throw TapeError("requires_grad can only be changed on leaf tensors");
    }
    node_->requires_grad = on;
    return *this;
}

Tensor Tensor::detach() const {
    const auto& n = checked(node_);
    return wrap(make_node(n.shape, n.data));
}

Tensor Tensor::clone() const {
    auto t = detach();
    t.node_->requires_grad = checked(node_).requires_grad && is_leaf();
    return t;
}

std::uint64_t Tensor::id() const { return checked(node_).id; }

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        return false;
    }
    auto da = a.data();
    auto db = b.data();
    return std::memcmp(da.data(), db.data(), da.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) {
        throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    double m = 0.0;
    auto da = a.data();
    auto db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) {
        m = std::max(m, std::abs(da[i] - db[i]));
    }
    return m;
}

ParamTree clone_tree(const ParamTree& tree) {
    ParamTree out;
    for (const auto& [name, t] : tree) {
        out.emplace(name, t.clone());
    }
    return out;
}

ParamTree frozen_copy(const ParamTree& tree) {
    ParamTree out;
    for (const auto& [name, t] : tree) {
        out.emplace(name, t.detach());
    }
    return out;
}

void set_requires_grad(ParamTree& tree, bool on) {
    for (auto& [name, t] : tree) {
        t.set_requires_grad(on);
    }
}

bool bitwise_equal(const ParamTree& a, const ParamTree& b) {
    if (a.size() != b.size()) {
        return false;
    }
    for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
        if (ia->first != ib->first || !bitwise_equal(ia->second, ib->second)) {
            return false;
        }
    }
    return true;
}

std::size_t parameter_count(const ParamTree& tree) {
    std::size_t n = 0;
    for (const auto& [name, t] : tree) {
        n += t.numel();
    }
    return n;
}

}  // namespace upix
