#pragma once

#include <random>
#include <string>
#include <vector>

#include "fluxtrader/optim.hpp"

namespace fluxtrader {

/// Fully connected stack: widths {in, h1, ..., out}. Hidden layers use
/// `hidden`, the last layer uses `output`.
class Mlp {
public:
    Mlp() = default;

    Mlp(const std::string& prefix, std::vector<std::size_t> widths, Activation hidden, Activation output,
        std::mt19937_64& rng)
        : widths_(std::move(widths)), hidden_(hidden), output_(output) {
        if (widths_.size() < 2) throw Error(ErrorCode::InvalidConfig, prefix + ": MLP needs at least two widths");
        for (auto w : widths_)
            if (w == 0) throw Error(ErrorCode::InvalidConfig, prefix + ": zero layer width");
        for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
            const auto tag = prefix + "." + std::to_string(l);
            auto w = make_parameter(tag + ".weight", {widths_[l], widths_[l + 1]});
            auto b = make_parameter(tag + ".bias", {widths_[l + 1]});
            init_glorot(w, widths_[l], widths_[l + 1], rng);
            weights_.push_back(w);
            biases_.push_back(b);
        }
    }

    std::size_t input_width() const { return widths_.front(); }
    std::size_t output_width() const { return widths_.back(); }
    std::size_t layer_count() const { return weights_.size(); }
    const std::vector<std::size_t>& widths() const { return widths_; }

    Tensor forward(const Tensor& x) const { return forward_until(x, layer_count()); }

    /// Output after the first `layers` layers (activations applied).
    Tensor forward_until(const Tensor& x, std::size_t layers) const {
        Tensor h = x;
        for (std::size_t l = 0; l < layers; ++l) {
            h = dense_forward(h, weights_[l].tensor, biases_[l].tensor);
            h = activation(h, l + 1 == layer_count() ? output_ : hidden_);
        }
        return h;
    }

    ParameterList parameters() const {
        ParameterList out;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            out.push_back(weights_[l]);
            out.push_back(biases_[l]);
        }
        return out;
    }

private:
    std::vector<std::size_t> widths_;
    Activation hidden_ = Activation::Relu;
    Activation output_ = Activation::Identity;
    ParameterList weights_;
    ParameterList biases_;
};

inline ParameterList concat(ParameterList a, const ParameterList& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

/// Row-major [rows x cols] batch from equally sized vectors.
inline Tensor stack_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw Error(ErrorCode::ShapeMismatch, "stack_rows on empty batch");
    const std::size_t width = rows.front().size();
    std::vector<double> flat;
    flat.reserve(rows.size() * width);
    for (const auto& r : rows) {
        if (r.size() != width) throw Error(ErrorCode::ShapeMismatch, "ragged batch");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return Tensor::from({rows.size(), width}, std::move(flat));
}

/// Mini-batch index ranges over a permutation of [0, n).
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::mt19937_64& rng,
                                                          bool shuffle = true) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    if (shuffle) std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch_size)
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
    return out;
}

} // namespace fluxtrader
