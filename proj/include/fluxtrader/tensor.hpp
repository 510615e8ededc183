#pragma once

// Dense float64 tensors with tape-free reverse-mode differentiation. Every
// op records its parents and a backward closure on the output node; calling
// backward() on a scalar walks the graph in reverse topological order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "fluxtrader/error.hpp"

namespace fluxtrader {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    bool is_leaf() const { return !backward_fn; }

    std::vector<double>& grad_buffer() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

inline thread_local bool grad_mode = true;

} // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode) { detail::grad_mode = false; }
    ~NoGradGuard() { detail::grad_mode = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        auto node = std::make_shared<detail::Node>();
        validate_shape(shape);
        node->data.assign(shape_size(shape), 0.0);
        node->shape = std::move(shape);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
        validate_shape(shape);
        if (shape_size(shape) != values.size())
            throw Error(ErrorCode::ShapeMismatch, "shape " + shape_string(shape) + " does not hold " +
                                                      std::to_string(values.size()) + " values");
        for (double v : values)
            if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "tensor initialised with non-finite value");
        auto node = std::make_shared<detail::Node>();
        node->shape = std::move(shape);
        node->data = std::move(values);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor scalar(double value, bool requires_grad = false) { return from({1}, {value}, requires_grad); }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t size() const { return node_->data.size(); }

    std::span<const double> data() const { return node_->data; }
    /// Direct write access for initialisers and optimisers. Do not use on
    /// tensors that are part of a graph awaiting backward().
    std::span<double> mutable_data() { return node_->data; }

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return node_->grad.size() == node_->data.size() && !node_->data.empty(); }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() { return node_->grad_buffer(); }
    void zero_grad() { std::fill(node_->grad_buffer().begin(), node_->grad_buffer().end(), 0.0); }
    bool has_graph() const { return node_ && !node_->is_leaf(); }

    double item() const {
        if (size() != 1) throw Error(ErrorCode::NotScalar, "item() on tensor of shape " + shape_string(shape()));
        return node_->data[0];
    }

    /// A detached copy: same values, no graph, no grad.
    Tensor detach() const { return from(shape(), node_->data, false); }

    /// Propagates d(this)/d(x) into every reachable tensor that requires
    /// grad. Leaf gradients accumulate across calls; interior ones are reset.
    void backward() const;

    detail::Node& node() const { return *node_; }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    static void validate_shape(const Shape& shape) {
        if (shape.empty()) throw Error(ErrorCode::ShapeMismatch, "empty shape");
        for (auto d : shape)
            if (d == 0) throw Error(ErrorCode::ShapeMismatch, "zero dimension in " + shape_string(shape));
    }

    std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline void check_finite(const Node& node, const char* op) {
    for (double v : node.data)
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, std::string("non-finite output from ") + op);
}

/// Builds the output node of an op. The backward closure is attached only
/// when grad mode is on and some input requires grad.
inline Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                          std::function<void(Node&)> backward_fn, const char* op) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    check_finite(*node, op);
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (needs && grad_mode) {
        node->requires_grad = true;
        for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw Error(ErrorCode::ShapeMismatch,
                    std::string(op) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

} // namespace detail

inline void Tensor::backward() const {
    if (size() != 1) throw Error(ErrorCode::NotScalar, "backward() on tensor of shape " + shape_string(shape()));
    if (!has_graph()) throw Error(ErrorCode::NoRecordedGraph, "backward() on a tensor with no recorded operations");

    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    // iterative post-order DFS
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            detail::Node* p = n->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    // Leaves receive this pass's gradient in a clean buffer, then add it to
    // what they already held, so repeated passes accumulate exactly.
    std::vector<std::pair<detail::Node*, std::vector<double>>> held;
    for (auto* n : order) {
        if (n->is_leaf()) {
            held.emplace_back(n, std::move(n->grad));
            n->grad.clear();
        }
        n->grad.assign(n->data.size(), 0.0);
    }
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if (!(*it)->is_leaf()) (*it)->backward_fn(**it);
    for (auto& [n, previous] : held)
        if (previous.size() == n->grad.size())
            for (std::size_t i = 0; i < previous.size(); ++i) n->grad[i] += previous[i];
}

// ---------------------------------------------------------------------------
// Layers

/// input [N x I] . weight [I x O] + bias [O]
inline Tensor dense_forward(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    if (input.rank() != 2 || weight.rank() != 2 || bias.rank() != 1 || input.dim(1) != weight.dim(0) ||
        bias.dim(0) != weight.dim(1))
        throw Error(ErrorCode::ShapeMismatch, "dense: input " + shape_string(input.shape()) + ", weight " +
                                                  shape_string(weight.shape()) + ", bias " +
                                                  shape_string(bias.shape()));
    const std::size_t n = input.dim(0), in_w = input.dim(1), out_w = weight.dim(1);
    std::vector<double> out(n * out_w);
    const double* x = input.data().data();
    const double* w = weight.data().data();
    const double* b = bias.data().data();
    for (std::size_t r = 0; r < n; ++r) {
        double* o = out.data() + r * out_w;
        std::copy(b, b + out_w, o);
        for (std::size_t i = 0; i < in_w; ++i) {
            const double a = x[r * in_w + i];
            if (a == 0.0) continue;
            const double* wr = w + i * out_w;
            for (std::size_t c = 0; c < out_w; ++c) o[c] += a * wr[c];
        }
    }
    return detail::make_result(
        {n, out_w}, std::move(out), {input, weight, bias},
        [n, in_w, out_w](detail::Node& self) {
            auto& xi = *self.parents[0];
            auto& wi = *self.parents[1];
            auto& bi = *self.parents[2];
            const double* g = self.grad.data();
            if (xi.requires_grad) {
                auto& gx = xi.grad_buffer();
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t i = 0; i < in_w; ++i) {
                        const double* wr = wi.data.data() + i * out_w;
                        const double* gr = g + r * out_w;
                        double acc = 0.0;
                        for (std::size_t c = 0; c < out_w; ++c) acc += gr[c] * wr[c];
                        gx[r * in_w + i] += acc;
                    }
            }
            if (wi.requires_grad) {
                auto& gw = wi.grad_buffer();
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t i = 0; i < in_w; ++i) {
                        const double a = xi.data[r * in_w + i];
                        if (a == 0.0) continue;
                        double* gwr = gw.data() + i * out_w;
                        const double* gr = g + r * out_w;
                        for (std::size_t c = 0; c < out_w; ++c) gwr[c] += a * gr[c];
                    }
            }
            if (bi.requires_grad) {
                auto& gb = bi.grad_buffer();
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < out_w; ++c) gb[c] += g[r * out_w + c];
            }
        },
        "dense");
}

/// Valid cross-correlation: input [N x C x L], kernels [K x C x S], bias [K]
/// -> [N x K x L'] with L' = floor((L - S) / stride) + 1.
inline Tensor conv1d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride = 1) {
    if (input.rank() != 3 || kernels.rank() != 3 || bias.rank() != 1 || input.dim(1) != kernels.dim(1) ||
        bias.dim(0) != kernels.dim(0) || stride == 0)
        throw Error(ErrorCode::ShapeMismatch, "conv1d: input " + shape_string(input.shape()) + ", kernels " +
                                                  shape_string(kernels.shape()) + ", bias " +
                                                  shape_string(bias.shape()));
    const std::size_t n = input.dim(0), ch = input.dim(1), len = input.dim(2);
    const std::size_t k = kernels.dim(0), ks = kernels.dim(2);
    if (ks > len)
        throw Error(ErrorCode::KernelLargerThanInput,
                    "kernel size " + std::to_string(ks) + " > input length " + std::to_string(len));
    const std::size_t out_len = (len - ks) / stride + 1;
    std::vector<double> out(n * k * out_len);
    const double* x = input.data().data();
    const double* w = kernels.data().data();
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < k; ++o) {
            double* row = out.data() + (b * k + o) * out_len;
            std::fill(row, row + out_len, bias.data()[o]);
            for (std::size_t c = 0; c < ch; ++c) {
                const double* xr = x + (b * ch + c) * len;
                const double* wr = w + (o * ch + c) * ks;
                for (std::size_t s = 0; s < ks; ++s) {
                    const double ws = wr[s];
                    for (std::size_t t = 0; t < out_len; ++t) row[t] += ws * xr[t * stride + s];
                }
            }
        }
    return detail::make_result(
        {n, k, out_len}, std::move(out), {input, kernels, bias},
        [n, ch, len, k, ks, out_len, stride](detail::Node& self) {
            auto& xi = *self.parents[0];
            auto& wi = *self.parents[1];
            auto& bi = *self.parents[2];
            const double* g = self.grad.data();
            double* gx = xi.requires_grad ? xi.grad_buffer().data() : nullptr;
            double* gw = wi.requires_grad ? wi.grad_buffer().data() : nullptr;
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t o = 0; o < k; ++o) {
                    const double* gr = g + (b * k + o) * out_len;
                    if (bi.requires_grad) {
                        double acc = 0.0;
                        for (std::size_t t = 0; t < out_len; ++t) acc += gr[t];
                        bi.grad_buffer()[o] += acc;
                    }
                    for (std::size_t c = 0; c < ch; ++c) {
                        const double* xr = xi.data.data() + (b * ch + c) * len;
                        const double* wr = wi.data.data() + (o * ch + c) * ks;
                        for (std::size_t s = 0; s < ks; ++s) {
                            if (gw) {
                                double acc = 0.0;
                                for (std::size_t t = 0; t < out_len; ++t) acc += gr[t] * xr[t * stride + s];
                                gw[(o * ch + c) * ks + s] += acc;
                            }
                            if (gx) {
                                double* gxr = gx + (b * ch + c) * len;
                                const double ws = wr[s];
                                for (std::size_t t = 0; t < out_len; ++t) gxr[t * stride + s] += ws * gr[t];
                            }
                        }
                    }
                }
        },
        "conv1d");
}

/// Max over sliding windows of the last axis of [N x C x L]. Gradient goes to
/// the first maximal element of each window.
inline Tensor max_pool1d(const Tensor& input, std::size_t window, std::size_t stride) {
    if (input.rank() != 3 || window == 0 || stride == 0)
        throw Error(ErrorCode::ShapeMismatch, "max_pool1d: input " + shape_string(input.shape()));
    const std::size_t rows = input.dim(0) * input.dim(1), len = input.dim(2);
    if (window > len)
        throw Error(ErrorCode::WindowLargerThanInput,
                    "pool window " + std::to_string(window) + " > input length " + std::to_string(len));
    const std::size_t out_len = (len - window) / stride + 1;
    std::vector<double> out(rows * out_len);
    std::vector<std::size_t> argmax(rows * out_len);
    const double* x = input.data().data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t t = 0; t < out_len; ++t) {
            std::size_t best = r * len + t * stride;
            for (std::size_t j = best + 1; j < r * len + t * stride + window; ++j)
                if (x[j] > x[best]) best = j;
            out[r * out_len + t] = x[best];
            argmax[r * out_len + t] = best;
        }
    return detail::make_result(
        {input.dim(0), input.dim(1), out_len}, std::move(out), {input},
        [argmax = std::move(argmax)](detail::Node& self) {
            auto& gx = self.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += self.grad[i];
        },
        "max_pool1d");
}

enum class Activation { Relu, Sigmoid, Tanh, Identity };

inline constexpr double kSigmoidClamp = 1e-7;

/// Elementwise activation. Sigmoid output is clamped to [1e-7, 1 - 1e-7].
inline Tensor activation(const Tensor& input, Activation kind) {
    if (kind == Activation::Identity) return input;
    std::vector<double> out(input.size());
    std::vector<double> slope(input.size());
    const auto x = input.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        switch (kind) {
        case Activation::Relu:
            out[i] = x[i] > 0.0 ? x[i] : 0.0;
            slope[i] = x[i] > 0.0 ? 1.0 : 0.0;
            break;
        case Activation::Sigmoid: {
            const double s = 1.0 / (1.0 + std::exp(-x[i]));
            if (s < kSigmoidClamp) {
                out[i] = kSigmoidClamp;
                slope[i] = 0.0;
            } else if (s > 1.0 - kSigmoidClamp) {
                out[i] = 1.0 - kSigmoidClamp;
                slope[i] = 0.0;
            } else {
                out[i] = s;
                slope[i] = s * (1.0 - s);
            }
            break;
        }
        case Activation::Tanh: {
            const double t = std::tanh(x[i]);
            out[i] = t;
            slope[i] = 1.0 - t * t;
            break;
        }
        case Activation::Identity: break;
        }
    }
    return detail::make_result(
        input.shape(), std::move(out), {input},
        [slope = std::move(slope)](detail::Node& self) {
            auto& gx = self.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < slope.size(); ++i) gx[i] += slope[i] * self.grad[i];
        },
        "activation");
}

inline Tensor relu(const Tensor& x) { return activation(x, Activation::Relu); }
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::Sigmoid); }
inline Tensor tanh(const Tensor& x) { return activation(x, Activation::Tanh); }

// ---------------------------------------------------------------------------
// Elementwise arithmetic and reductions

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return detail::make_result(
        a.shape(), std::move(out), {a, b},
        [](detail::Node& self) {
            for (auto& p : self.parents) {
                if (!p->requires_grad) continue;
                auto& g = p->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
        },
        "add");
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    return detail::make_result(
        a.shape(), std::move(out), {a, b},
        [](detail::Node& self) {
            if (self.parents[0]->requires_grad) {
                auto& g = self.parents[0]->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
            if (self.parents[1]->requires_grad) {
                auto& g = self.parents[1]->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
            }
        },
        "sub");
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return detail::make_result(
        a.shape(), std::move(out), {a, b},
        [](detail::Node& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad) {
                auto& g = pa.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
            }
            if (pb.requires_grad) {
                auto& g = pb.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
            }
        },
        "mul");
}

/// factor * x + offset, elementwise.
inline Tensor affine(const Tensor& x, double factor, double offset = 0.0) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * x.data()[i] + offset;
    return detail::make_result(
        x.shape(), std::move(out), {x},
        [factor](detail::Node& self) {
            auto& g = self.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
        },
        "affine");
}

inline Tensor log(const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(x.data()[i] > 0.0)) throw Error(ErrorCode::NonFiniteValue, "log of non-positive value");
        out[i] = std::log(x.data()[i]);
    }
    return detail::make_result(
        x.shape(), std::move(out), {x},
        [](detail::Node& self) {
            auto& p = *self.parents[0];
            auto& g = p.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / p.data[i];
        },
        "log");
}

inline Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    return detail::make_result(
        {1}, {acc}, {x},
        [](detail::Node& self) {
            auto& g = self.parents[0]->grad_buffer();
            for (auto& v : g) v += self.grad[0];
        },
        "sum");
}

inline Tensor mean(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    const double inv = 1.0 / static_cast<double>(x.size());
    return detail::make_result(
        {1}, {acc * inv}, {x},
        [inv](detail::Node& self) {
            auto& g = self.parents[0]->grad_buffer();
            for (auto& v : g) v += self.grad[0] * inv;
        },
        "mean");
}

inline Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_size(shape) != x.size())
        throw Error(ErrorCode::ShapeMismatch, "reshape " + shape_string(x.shape()) + " -> " + shape_string(shape));
    std::vector<double> out(x.data().begin(), x.data().end());
    return detail::make_result(
        std::move(shape), std::move(out), {x},
        [](detail::Node& self) {
            auto& g = self.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        },
        "reshape");
}

/// [N x A] ++ [N x B] -> [N x (A + B)]
inline Tensor concat_columns(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
        throw Error(ErrorCode::ShapeMismatch,
                    "concat_columns: " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
    const std::size_t n = a.dim(0), wa = a.dim(1), wb = b.dim(1);
    std::vector<double> out(n * (wa + wb));
    for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(a.data().data() + r * wa, wa, out.data() + r * (wa + wb));
        std::copy_n(b.data().data() + r * wb, wb, out.data() + r * (wa + wb) + wa);
    }
    return detail::make_result(
        {n, wa + wb}, std::move(out), {a, b},
        [n, wa, wb](detail::Node& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            for (std::size_t r = 0; r < n; ++r) {
                const double* g = self.grad.data() + r * (wa + wb);
                if (pa.requires_grad)
                    for (std::size_t i = 0; i < wa; ++i) pa.grad_buffer()[r * wa + i] += g[i];
                if (pb.requires_grad)
                    for (std::size_t i = 0; i < wb; ++i) pb.grad_buffer()[r * wb + i] += g[wa + i];
            }
        },
        "concat_columns");
}

/// Mean over the last axis: [N x C x L] -> [N x C].
inline Tensor channel_mean(const Tensor& x) {
    if (x.rank() != 3) throw Error(ErrorCode::ShapeMismatch, "channel_mean expects rank 3");
    const std::size_t rows = x.dim(0) * x.dim(1), len = x.dim(2);
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t t = 0; t < len; ++t) acc += x.data()[r * len + t];
        out[r] = acc / static_cast<double>(len);
    }
    return detail::make_result(
        {x.dim(0), x.dim(1)}, std::move(out), {x},
        [rows, len](detail::Node& self) {
            auto& g = self.parents[0]->grad_buffer();
            const double inv = 1.0 / static_cast<double>(len);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t t = 0; t < len; ++t) g[r * len + t] += self.grad[r] * inv;
        },
        "channel_mean");
}

/// Max over the last axis: [N x C x L] -> [N x C].
inline Tensor channel_max(const Tensor& x) {
    if (x.rank() != 3) throw Error(ErrorCode::ShapeMismatch, "channel_max expects rank 3");
    const std::size_t len = x.dim(2);
    auto pooled = max_pool1d(x, len, len);
    return reshape(pooled, {x.dim(0), x.dim(1)});
}

// ---------------------------------------------------------------------------
// Losses

inline Tensor loss_mse(const Tensor& pred, const Tensor& target) {
    detail::require_same_shape(pred, target, "loss_mse");
    const auto diff = sub(pred, target);
    return mean(mul(diff, diff));
}

/// -mean[t log p + (1 - t) log(1 - p)] with p strictly inside (0, 1).
inline Tensor loss_bce(const Tensor& prob, const Tensor& target) {
    detail::require_same_shape(prob, target, "loss_bce");
    const std::size_t n = prob.size();
    // compensated sum keeps the mean within an ulp or two of exact
    double acc = 0.0, carry = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = prob.data()[i], t = target.data()[i];
        if (!(p > 0.0 && p < 1.0))
            throw Error(ErrorCode::ProbabilityOutOfRange, "probability " + std::to_string(p) + " outside (0,1)");
        if (!(t >= 0.0 && t <= 1.0))
            throw Error(ErrorCode::ProbabilityOutOfRange, "target " + std::to_string(t) + " outside [0,1]");
        const double term = t * std::log(p) + (1.0 - t) * std::log1p(-p);
        const double next = acc + term;
        carry += std::abs(acc) >= std::abs(term) ? (acc - next) + term : (term - next) + acc;
        acc = next;
    }
    const double inv = 1.0 / static_cast<double>(n);
    return detail::make_result(
        {1}, {-(acc + carry) / static_cast<double>(n)}, {prob, target},
        [inv](detail::Node& self) {
            auto& pp = *self.parents[0];
            auto& pt = *self.parents[1];
            const double g = self.grad[0] * inv;
            for (std::size_t i = 0; i < pp.data.size(); ++i) {
                const double p = pp.data[i], t = pt.data[i];
                if (pp.requires_grad) pp.grad_buffer()[i] += g * (-(t / p) + (1.0 - t) / (1.0 - p));
                if (pt.requires_grad) pt.grad_buffer()[i] += g * (-(std::log(p) - std::log1p(-p)));
            }
        },
        "loss_bce");
}

} // namespace fluxtrader
