#include "upix/core/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace upix {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void require(bool ok, Primitive op, const std::string& what) {
    if (!ok) {
        throw ShapeError(std::string(primitive_name(op)) + ": " + what);
    }
}

void require_arity(Primitive op, std::span<const Tensor> inputs, std::size_t n) {
    require(inputs.size() == n, op, "expected " + std::to_string(n) + " inputs, got " + std::to_string(inputs.size()));
    for (const auto& t : inputs) {
        require(t.defined(), op, "undefined input");
    }
}

bool any_tracked(std::span<const Tensor> inputs) {
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
}

Tensor finish(Primitive op, std::span<const Tensor> inputs, Shape shape, std::vector<double> values,
              BackwardFn backward) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NonFiniteError(std::string(primitive_name(op)) + " produced a non-finite value");
        }
    }
    auto out = Tensor::from_data(std::move(shape), std::move(values));
    Tape* tape = Tape::active();
    if (tape != nullptr && any_tracked(inputs)) {
        tape->record(op, inputs, out, std::move(backward));
    }
    return out;
}

std::shared_ptr<detail::Node> keep(const Tensor& t) { return t.node(); }

// ---- elementwise ---------------------------------------------------------

template <class F, class D>
Tensor unary(Primitive op, std::span<const Tensor> inputs, F f, D dfdx) {
    require_arity(op, inputs, 1);
    const auto& x = inputs[0].data();
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = f(x[i]);
    }
    auto xn = keep(inputs[0]);
    auto yv = std::make_shared<std::vector<double>>(y);
    return finish(op, inputs, inputs[0].shape(), std::move(y),
                  [xn, yv, dfdx](std::span<const double> g, GradSink& sink) {
                      auto gx = sink.grad(0);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                          gx[i] += g[i] * dfdx(xn->data[i], (*yv)[i]);
                      }
                  });
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor binary(Primitive op, std::span<const Tensor> inputs) {
    require_arity(op, inputs, 2);
    const auto& a = inputs[0];
    const auto& b = inputs[1];
    require(a.shape() == b.shape(), op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    auto da = a.data();
    auto db = b.data();
    std::vector<double> y(da.size());
    switch (op) {
        case Primitive::add:
            for (std::size_t i = 0; i < y.size(); ++i) y[i] = da[i] + db[i];
            break;
        case Primitive::sub:
            for (std::size_t i = 0; i < y.size(); ++i) y[i] = da[i] - db[i];
            break;
        default:
            for (std::size_t i = 0; i < y.size(); ++i) y[i] = da[i] * db[i];
            break;
    }
    auto an = keep(a);
    auto bn = keep(b);
    return finish(op, inputs, a.shape(), std::move(y), [op, an, bn](std::span<const double> g, GradSink& sink) {
        auto ga = sink.grad(0);
        auto gb = sink.grad(1);
        if (op == Primitive::mul) {
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bn->data[i];
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * an->data[i];
            return;
        }
        double sign_b = op == Primitive::sub ? -1.0 : 1.0;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += sign_b * g[i];
    });
}

// ---- linear algebra ------------------------------------------------------

Tensor matmul_impl(std::span<const Tensor> inputs) {
    constexpr auto op = Primitive::matmul;
    require_arity(op, inputs, 2);
    const auto& as = inputs[0].shape();
    const auto& bs = inputs[1].shape();
    require((as.size() == 2 && bs.size() == 2) || (as.size() == 3 && bs.size() == 3 && as[0] == bs[0]), op,
            "unsupported operand ranks " + shape_str(as) + " x " + shape_str(bs));
    std::size_t batch = as.size() == 3 ? as[0] : 1;
    std::size_t m = as[as.size() - 2];
    std::size_t k = as.back();
    std::size_t n = bs.back();
    require(bs[bs.size() - 2] == k, op, "inner dimensions differ " + shape_str(as) + " x " + shape_str(bs));
    std::vector<double> y(batch * m * n);
    auto da = inputs[0].data().data();
    auto db = inputs[1].data().data();
    for (std::size_t i = 0; i < batch; ++i) {
        MutMap(y.data() + i * m * n, m, n).noalias() = ConstMap(da + i * m * k, m, k) * ConstMap(db + i * k * n, k, n);
    }
    Shape shape = as.size() == 3 ? Shape{batch, m, n} : Shape{m, n};
    auto an = keep(inputs[0]);
    auto bn = keep(inputs[1]);
    return finish(op, inputs, std::move(shape), std::move(y),
                  [an, bn, batch, m, k, n](std::span<const double> g, GradSink& sink) {
                      auto ga = sink.grad(0);
                      auto gb = sink.grad(1);
                      for (std::size_t i = 0; i < batch; ++i) {
                          ConstMap gm(g.data() + i * m * n, m, n);
                          if (!ga.empty()) {
                              MutMap(ga.data() + i * m * k, m, k).noalias() +=
                                  gm * ConstMap(bn->data.data() + i * k * n, k, n).transpose();
                          }
                          if (!gb.empty()) {
                              MutMap(gb.data() + i * k * n, k, n).noalias() +=
                                  ConstMap(an->data.data() + i * m * k, m, k).transpose() * gm;
                          }
                      }
                  });
}

std::vector<std::size_t> strides_of(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) {
        st[i - 1] = st[i] * s[i];
    }
    return st;
}

Tensor transpose_impl(std::span<const Tensor> inputs, std::vector<std::size_t> perm) {
    constexpr auto op = Primitive::transpose;
    require_arity(op, inputs, 1);
    const auto& s = inputs[0].shape();
    require(s.size() >= 2, op, "needs rank >= 2, got " + shape_str(s));
    if (perm.empty()) {
        perm.resize(s.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::swap(perm[s.size() - 1], perm[s.size() - 2]);
    }
    require(perm.size() == s.size(), op, "permutation rank mismatch");
    std::vector<bool> seen(s.size(), false);
    for (auto p : perm) {
        require(p < s.size() && !seen[p], op, "invalid permutation");
        seen[p] = true;
    }
    Shape out_shape(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out_shape[i] = s[perm[i]];
    auto in_strides = strides_of(s);
    auto n = inputs[0].numel();
    auto source = std::make_shared<std::vector<std::size_t>>(n);
    std::vector<std::size_t> idx(s.size(), 0);
    for (std::size_t flat = 0; flat < n; ++flat) {
        std::size_t src = 0;
        for (std::size_t i = 0; i < s.size(); ++i) src += idx[i] * in_strides[perm[i]];
        (*source)[flat] = src;
        for (std::size_t i = s.size(); i-- > 0;) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
    auto x = inputs[0].data();
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[(*source)[i]];
    return finish(op, inputs, std::move(out_shape), std::move(y), [source](std::span<const double> g, GradSink& sink) {
        auto gx = sink.grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[(*source)[i]] += g[i];
    });
}

Tensor reshape_impl(std::span<const Tensor> inputs, const Shape& shape) {
    constexpr auto op = Primitive::reshape;
    require_arity(op, inputs, 1);
    require(shape_numel(shape) == inputs[0].numel(), op,
            "cannot reshape " + shape_str(inputs[0].shape()) + " to " + shape_str(shape));
    auto x = inputs[0].data();
    return finish(op, inputs, shape, std::vector<double>(x.begin(), x.end()),
                  [](std::span<const double> g, GradSink& sink) {
                      auto gx = sink.grad(0);
                      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                  });
}

Tensor concat_impl(std::span<const Tensor> inputs, std::size_t axis) {
    constexpr auto op = Primitive::concat;
    require(!inputs.empty(), op, "no inputs");
    const auto& first = inputs[0].shape();
    require(axis < first.size(), op, "axis out of range for " + shape_str(first));
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& t : inputs) {
        require(t.defined(), op, "undefined input");
        const auto& s = t.shape();
        require(s.size() == first.size(), op, "rank mismatch");
        for (std::size_t i = 0; i < s.size(); ++i) {
            require(i == axis || s[i] == first[i], op, "shape mismatch " + shape_str(s) + " vs " + shape_str(first));
        }
        out_shape[axis] += s[axis];
    }
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
    std::size_t out_row = out_shape[axis] * inner;
    std::vector<double> y(shape_numel(out_shape));
    std::vector<std::size_t> widths;
    std::size_t offset = 0;
    for (const auto& t : inputs) {
        std::size_t w = t.shape()[axis] * inner;
        auto x = t.data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(x.data() + o * w, w, y.data() + o * out_row + offset);
        }
        widths.push_back(w);
        offset += w;
    }
    return finish(op, inputs, std::move(out_shape), std::move(y),
                  [widths, outer, out_row](std::span<const double> g, GradSink& sink) {
                      std::size_t off = 0;
                      for (std::size_t k = 0; k < widths.size(); ++k) {
                          auto gx = sink.grad(k);
                          if (!gx.empty()) {
                              for (std::size_t o = 0; o < outer; ++o) {
                                  for (std::size_t j = 0; j < widths[k]; ++j) {
                                      gx[o * widths[k] + j] += g[o * out_row + off + j];
                                  }
                              }
                          }
                          off += widths[k];
                      }
                  });
}

Tensor slice_impl(std::span<const Tensor> inputs, std::size_t axis, std::size_t begin, std::size_t end) {
    constexpr auto op = Primitive::slice;
    require_arity(op, inputs, 1);
    const auto& s = inputs[0].shape();
    require(axis < s.size(), op, "axis out of range for " + shape_str(s));
    require(begin < end && end <= s[axis], op,
            "range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " + shape_str(s));
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    std::size_t in_row = s[axis] * inner;
    std::size_t w = (end - begin) * inner;
    std::size_t off = begin * inner;
    Shape out_shape = s;
    out_shape[axis] = end - begin;
    auto x = inputs[0].data();
    std::vector<double> y(outer * w);
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(x.data() + o * in_row + off, w, y.data() + o * w);
    }
    return finish(op, inputs, std::move(out_shape), std::move(y),
                  [outer, in_row, w, off](std::span<const double> g, GradSink& sink) {
                      auto gx = sink.grad(0);
                      for (std::size_t o = 0; o < outer; ++o) {
                          for (std::size_t j = 0; j < w; ++j) gx[o * in_row + off + j] += g[o * w + j];
                      }
                  });
}

// ---- reductions ----------------------------------------------------------

Tensor reduce_impl(Primitive op, std::span<const Tensor> inputs, bool all) {
    require_arity(op, inputs, 1);
    const auto& s = inputs[0].shape();
    auto x = inputs[0].data();
    bool is_mean = op == Primitive::mean;
    if (all || s.empty()) {
        double total = pairwise_sum(x.data(), x.size());
        double factor = is_mean ? 1.0 / static_cast<double>(x.size()) : 1.0;
        return finish(op, inputs, {}, {total * factor}, [factor](std::span<const double> g, GradSink& sink) {
            auto gx = sink.grad(0);
            for (auto& v : gx) v += g[0] * factor;
        });
    }
    std::size_t cols = s.back();
    std::size_t rows = x.size() / cols;
    double factor = is_mean ? 1.0 / static_cast<double>(cols) : 1.0;
    std::vector<double> y(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        y[r] = pairwise_sum(x.data() + r * cols, cols) * factor;
    }
    Shape out_shape = s;
    out_shape.back() = 1;
    return finish(op, inputs, std::move(out_shape), std::move(y),
                  [cols, factor](std::span<const double> g, GradSink& sink) {
                      auto gx = sink.grad(0);
                      for (std::size_t r = 0; r < g.size(); ++r) {
                          for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[r] * factor;
                      }
                  });
}

Tensor softmax_impl(std::span<const Tensor> inputs, const std::shared_ptr<const std::vector<std::uint8_t>>& mask) {
    constexpr auto op = Primitive::softmax;
    require_arity(op, inputs, 1);
    const auto& s = inputs[0].shape();
    require(!s.empty(), op, "needs rank >= 1");
    std::size_t cols = s.back();
    std::size_t mask_rows = s.size() >= 2 ? s[s.size() - 2] : 1;
    if (mask) {
        require(mask->size() == mask_rows * cols, op, "mask size does not match the last two axes");
    }
    auto x = inputs[0].data();
    std::size_t rows = x.size() / cols;
    std::vector<double> y(x.size(), 0.0);
    std::vector<double> e(cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * cols;
        const std::uint8_t* mr = mask ? mask->data() + (r % mask_rows) * cols : nullptr;
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cols; ++c) {
            if (!mr || mr[c]) m = std::max(m, xr[c]);
        }
        if (m == -std::numeric_limits<double>::infinity()) {
            throw ShapeError("softmax: row " + std::to_string(r) + " has no allowed entries");
        }
        for (std::size_t c = 0; c < cols; ++c) {
            e[c] = (!mr || mr[c]) ? std::exp(xr[c] - m) : 0.0;
        }
        double z = pairwise_sum(e.data(), cols);
        for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = e[c] / z;
    }
    auto yv = std::make_shared<std::vector<double>>(y);
    return finish(op, inputs, s, std::move(y), [yv, cols](std::span<const double> g, GradSink& sink) {
        auto gx = sink.grad(0);
        std::vector<double> prod(cols);
        for (std::size_t r = 0; r < g.size() / cols; ++r) {
            const double* yr = yv->data() + r * cols;
            const double* gr = g.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) prod[c] = gr[c] * yr[c];
            double dot = pairwise_sum(prod.data(), cols);
            for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += yr[c] * (gr[c] - dot);
        }
    });
}

Tensor log_softmax_impl(std::span<const Tensor> inputs) {
    constexpr auto op = Primitive::log_softmax;
    require_arity(op, inputs, 1);
    const auto& s = inputs[0].shape();
    require(!s.empty(), op, "needs rank >= 1");
    std::size_t cols = s.back();
    auto x = inputs[0].data();
    std::size_t rows = x.size() / cols;
    std::vector<double> y(x.size());
    auto probs = std::make_shared<std::vector<double>>(x.size());
    std::vector<double> e(cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * cols;
        double m = *std::max_element(xr, xr + cols);
        for (std::size_t c = 0; c < cols; ++c) e[c] = std::exp(xr[c] - m);
        double z = pairwise_sum(e.data(), cols);
        double lz = std::log(z);
        for (std::size_t c = 0; c < cols; ++c) {
            y[r * cols + c] = xr[c] - m - lz;
            (*probs)[r * cols + c] = e[c] / z;
        }
    }
    return finish(op, inputs, s, std::move(y), [probs, cols](std::span<const double> g, GradSink& sink) {
        auto gx = sink.grad(0);
        for (std::size_t r = 0; r < g.size() / cols; ++r) {
            double gs = pairwise_sum(g.data() + r * cols, cols);
            for (std::size_t c = 0; c < cols; ++c) {
                gx[r * cols + c] += g[r * cols + c] - (*probs)[r * cols + c] * gs;
            }
        }
    });
}

// ---- broadcast & gather --------------------------------------------------

Tensor broadcast_impl(std::span<const Tensor> inputs, const Shape& target) {
    constexpr auto op = Primitive::broadcast;
    require_arity(op, inputs, 1);
    const auto& s = inputs[0].shape();
    std::size_t n = inputs[0].numel();
    bool suffix = s.size() <= target.size() && std::equal(s.begin(), s.end(), target.end() - static_cast<std::ptrdiff_t>(s.size()));
    bool keepdim = false;
    std::size_t inner = 1;
    if (!suffix && s.size() == target.size()) {
        std::size_t k = 0;
        while (k < s.size() && s[k] == target[k]) ++k;
        keepdim = true;
        for (std::size_t i = k; i < s.size(); ++i) {
            keepdim = keepdim && s[i] == 1;
            inner *= target[i];
        }
    }
    require(suffix || keepdim, op, "cannot broadcast " + shape_str(s) + " to " + shape_str(target));
    auto x = inputs[0].data();
    std::size_t out_n = shape_numel(target);
    std::vector<double> y(out_n);
    if (suffix) {
        for (std::size_t i = 0; i < out_n; ++i) y[i] = x[i % n];
    } else {
        for (std::size_t i = 0; i < out_n; ++i) y[i] = x[i / inner];
    }
    return finish(op, inputs, target, std::move(y), [suffix, n, inner](std::span<const double> g, GradSink& sink) {
        auto gx = sink.grad(0);
        if (suffix) {
            std::size_t reps = g.size() / n;
            for (std::size_t j = 0; j < n; ++j) gx[j] += pairwise_sum(g.data() + j, reps, n);
        } else {
            for (std::size_t j = 0; j < n; ++j) gx[j] += pairwise_sum(g.data() + j * inner, inner);
        }
    });
}

Tensor gather_impl(std::span<const Tensor> inputs, const std::shared_ptr<const std::vector<std::int64_t>>& index,
                   const Shape& shape) {
    constexpr auto op = Primitive::gather;
    require_arity(op, inputs, 1);
    require(index != nullptr, op, "missing index");
    require(index->size() == shape_numel(shape), op, "index count does not match output shape " + shape_str(shape));
    auto x = inputs[0].data();
    auto n = static_cast<std::int64_t>(x.size());
    std::vector<double> y(index->size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        auto j = (*index)[i];
        require(j >= -1 && j < n, op, "index " + std::to_string(j) + " out of range");
        y[i] = j < 0 ? 0.0 : x[static_cast<std::size_t>(j)];
    }
    return finish(op, inputs, shape, std::move(y), [index](std::span<const double> g, GradSink& sink) {
        auto gx = sink.grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            auto j = (*index)[i];
            if (j >= 0) gx[static_cast<std::size_t>(j)] += g[i];
        }
    });
}

Tensor argmax_impl(std::span<const Tensor> inputs) {
    constexpr auto op = Primitive::argmax;
    require_arity(op, inputs, 1);
    if (Tape::active() != nullptr && inputs[0].requires_grad()) {
        throw UnsupportedError("argmax is not differentiable");
    }
    const auto& s = inputs[0].shape();
    require(!s.empty(), op, "needs rank >= 1");
    std::size_t cols = s.back();
    auto x = inputs[0].data();
    std::vector<double> y(x.size() / cols);
    for (std::size_t r = 0; r < y.size(); ++r) {
        const double* xr = x.data() + r * cols;
        y[r] = static_cast<double>(std::max_element(xr, xr + cols) - xr);
    }
    Shape out_shape(s.begin(), s.end() - 1);
    return finish(op, {}, std::move(out_shape), std::move(y), {});
}

}  // namespace

double pairwise_sum(const double* values, std::size_t count, std::size_t stride) {
    if (count <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < count; ++i) s += values[i * stride];
        return s;
    }
    std::size_t half = count / 2;
    return pairwise_sum(values, half, stride) + pairwise_sum(values + half * stride, count - half, stride);
}

Tensor apply_primitive(Primitive op, std::span<const Tensor> inputs, const PrimitiveAttrs& attrs) {
    switch (op) {
        case Primitive::add:
        case Primitive::sub:
        case Primitive::mul:
            return binary(op, inputs);
        case Primitive::scale: {
            double c = attrs.scalar;
            return unary(op, inputs, [c](double x) { return c * x; }, [c](double, double) { return c; });
        }
        case Primitive::matmul:
            return matmul_impl(inputs);
        case Primitive::transpose:
            return transpose_impl(inputs, attrs.perm);
        case Primitive::reshape:
            return reshape_impl(inputs, attrs.shape);
        case Primitive::concat:
            return concat_impl(inputs, attrs.axis);
        case Primitive::slice:
            return slice_impl(inputs, attrs.axis, attrs.begin, attrs.end);
        case Primitive::sum:
        case Primitive::mean:
            return reduce_impl(op, inputs, attrs.all);
        case Primitive::exp:
            return unary(op, inputs, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
        case Primitive::log:
            return unary(op, inputs, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
        case Primitive::sigmoid:
            return unary(op, inputs, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
        case Primitive::silu:
            return unary(
                op, inputs, [](double x) { return x * stable_sigmoid(x); },
                [](double x, double) {
                    double s = stable_sigmoid(x);
                    return s + x * s * (1.0 - s);
                });
        case Primitive::softplus:
            return unary(
                op, inputs, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
                [](double x, double) { return stable_sigmoid(x); });
        case Primitive::softmax:
            return softmax_impl(inputs, attrs.mask);
        case Primitive::log_softmax:
            return log_softmax_impl(inputs);
        case Primitive::power: {
            double p = attrs.scalar;
            return unary(
                op, inputs, [p](double x) { return std::pow(x, p); },
                [p](double x, double) { return p * std::pow(x, p - 1.0); });
        }
        case Primitive::broadcast:
            return broadcast_impl(inputs, attrs.shape);
        case Primitive::gather:
            return gather_impl(inputs, attrs.index, attrs.shape);
        case Primitive::argmax:
            return argmax_impl(inputs);
        case Primitive::count_:
            break;
    }
    throw std::invalid_argument("unknown primitive identifier " + std::to_string(static_cast<int>(op)));
}

Tensor apply_primitive(std::string_view op_name, std::span<const Tensor> inputs, const PrimitiveAttrs& attrs) {
    return apply_primitive(primitive_from_name(op_name), inputs, attrs);
}

namespace {

Tensor call1(Primitive op, const Tensor& a, const PrimitiveAttrs& attrs = {}) {
    std::array<Tensor, 1> in{a};
    return apply_primitive(op, in, attrs);
}

Tensor call2(Primitive op, const Tensor& a, const Tensor& b) {
    std::array<Tensor, 2> in{a, b};
    return apply_primitive(op, in);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return call2(Primitive::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return call2(Primitive::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return call2(Primitive::mul, a, b); }
Tensor matmul(const Tensor& a, const Tensor& b) { return call2(Primitive::matmul, a, b); }

Tensor scale(const Tensor& a, double factor) {
    PrimitiveAttrs attrs;
    attrs.scalar = factor;
    return call1(Primitive::scale, a, attrs);
}

Tensor transpose(const Tensor& a, std::vector<std::size_t> perm) {
    PrimitiveAttrs attrs;
    attrs.perm = std::move(perm);
    return call1(Primitive::transpose, a, attrs);
}

Tensor reshape(const Tensor& a, Shape shape) {
    PrimitiveAttrs attrs;
    attrs.shape = std::move(shape);
    return call1(Primitive::reshape, a, attrs);
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
    PrimitiveAttrs attrs;
    attrs.axis = axis;
    return apply_primitive(Primitive::concat, parts, attrs);
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
    return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
    PrimitiveAttrs attrs;
    attrs.axis = axis;
    attrs.begin = begin;
    attrs.end = end;
    return call1(Primitive::slice, a, attrs);
}

Tensor sum(const Tensor& a) { return call1(Primitive::sum, a); }
Tensor mean(const Tensor& a) { return call1(Primitive::mean, a); }

Tensor sum_last(const Tensor& a) {
    PrimitiveAttrs attrs;
    attrs.all = false;
    return call1(Primitive::sum, a, attrs);
}

Tensor mean_last(const Tensor& a) {
    PrimitiveAttrs attrs;
    attrs.all = false;
    return call1(Primitive::mean, a, attrs);
}

Tensor exp(const Tensor& a) { return call1(Primitive::exp, a); }
Tensor log(const Tensor& a) { return call1(Primitive::log, a); }
Tensor sigmoid(const Tensor& a) { return call1(Primitive::sigmoid, a); }
Tensor silu(const Tensor& a) { return call1(Primitive::silu, a); }
Tensor softplus(const Tensor& a) { return call1(Primitive::softplus, a); }
Tensor log_softmax(const Tensor& a) { return call1(Primitive::log_softmax, a); }
Tensor argmax_last(const Tensor& a) { return call1(Primitive::argmax, a); }

Tensor softmax(const Tensor& a, std::shared_ptr<const std::vector<std::uint8_t>> mask) {
    PrimitiveAttrs attrs;
    attrs.mask = std::move(mask);
    return call1(Primitive::softmax, a, attrs);
}

Tensor power(const Tensor& a, double exponent) {
    PrimitiveAttrs attrs;
    attrs.scalar = exponent;
    return call1(Primitive::power, a, attrs);
}

Tensor broadcast(const Tensor& a, Shape shape) {
    PrimitiveAttrs attrs;
    attrs.shape = std::move(shape);
    return call1(Primitive::broadcast, a, attrs);
}

Tensor gather(const Tensor& a, std::shared_ptr<const std::vector<std::int64_t>> index, Shape shape) {
    PrimitiveAttrs attrs;
    attrs.index = std::move(index);
    attrs.shape = std::move(shape);
    return call1(Primitive::gather, a, attrs);
}

Tensor add_bcast(const Tensor& a, const Tensor& b) {
    return b.shape() == a.shape() ? add(a, b) : add(a, broadcast(b, a.shape()));
}

Tensor mul_bcast(const Tensor& a, const Tensor& b) {
    return b.shape() == a.shape() ? mul(a, b) : mul(a, broadcast(b, a.shape()));
}

}  // namespace upix
