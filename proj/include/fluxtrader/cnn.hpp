#pragma once

#include <random>
#include <vector>

#include <json.hpp>

#include "fluxtrader/layers.hpp"
#include "fluxtrader/market_data.hpp"

namespace fluxtrader {

struct ConvBlock {
    std::size_t out_channels = 16;
    std::size_t kernel = 5;
    std::size_t stride = 1;
    std::size_t pool_window = 4;
    std::size_t pool_stride = 4;
};

inline constexpr std::size_t conv_output_length(std::size_t len, std::size_t kernel, std::size_t stride) {
    return len < kernel ? 0 : (len - kernel) / stride + 1;
}

struct CnnConfig {
    std::size_t input_channels = kKlineChannels;
    std::size_t input_length = kDefaultWindow;
    std::vector<ConvBlock> layers{{16, 5, 1, 4, 4}, {32, 5, 1, 4, 4}};
    std::uint64_t seed = 11;

    /// Length after every block, or 0 if some block does not fit.
    std::size_t output_length() const {
        std::size_t len = input_length;
        for (const auto& b : layers) {
            len = conv_output_length(len, b.kernel, b.stride);
            if (len == 0) return 0;
            len = conv_output_length(len, b.pool_window, b.pool_stride);
            if (len == 0) return 0;
        }
        return len;
    }

    std::size_t output_channels() const { return layers.empty() ? input_channels : layers.back().out_channels; }

    void validate() const {
        if (input_channels == 0 || input_length == 0 || layers.empty())
            throw Error(ErrorCode::InvalidConfig, "cnn: empty configuration");
        for (const auto& b : layers)
            if (b.out_channels == 0 || b.kernel == 0 || b.stride == 0 || b.pool_window == 0 || b.pool_stride == 0)
                throw Error(ErrorCode::InvalidConfig, "cnn: zero-sized layer parameter");
        if (output_length() == 0) throw Error(ErrorCode::InvalidConfig, "cnn: layers shrink the input below one step");
    }
};

inline void to_json(nlohmann::json& j, const ConvBlock& b) {
    j = {{"out_channels", b.out_channels}, {"kernel", b.kernel}, {"stride", b.stride},
         {"pool_window", b.pool_window},   {"pool_stride", b.pool_stride}};
}

inline void from_json(const nlohmann::json& j, ConvBlock& b) {
    b.out_channels = j.value("out_channels", b.out_channels);
    b.kernel = j.value("kernel", b.kernel);
    b.stride = j.value("stride", b.stride);
    b.pool_window = j.value("pool_window", b.pool_window);
    b.pool_stride = j.value("pool_stride", b.pool_stride);
}

inline void to_json(nlohmann::json& j, const CnnConfig& c) {
    j = {{"input_channels", c.input_channels}, {"input_length", c.input_length}, {"layers", c.layers}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, CnnConfig& c) {
    c.input_channels = j.value("input_channels", c.input_channels);
    c.input_length = j.value("input_length", c.input_length);
    c.layers = j.value("layers", c.layers);
    c.seed = j.value("seed", c.seed);
}

struct FeatureSequence {
    std::size_t channels = 0;
    std::size_t length = 0;
    std::vector<double> values; // channels x length, row-major
};

class CnnModel {
public:
    CnnModel() = default;

    explicit CnnModel(const CnnConfig& config) : config_(config) {
        config_.validate();
        std::mt19937_64 rng(config_.seed);
        std::size_t in_ch = config_.input_channels;
        for (std::size_t l = 0; l < config_.layers.size(); ++l) {
            const auto& b = config_.layers[l];
            const auto tag = "cnn." + std::to_string(l);
            auto w = make_parameter(tag + ".kernels", {b.out_channels, in_ch, b.kernel});
            auto bias = make_parameter(tag + ".bias", {b.out_channels});
            init_glorot(w, in_ch * b.kernel, b.out_channels * b.kernel, rng);
            kernels_.push_back(w);
            biases_.push_back(bias);
            in_ch = b.out_channels;
        }
    }

    const CnnConfig& config() const { return config_; }

    /// [N x C x L] -> [N x C' x L'] through conv -> relu -> max-pool blocks.
    Tensor forward(const Tensor& x) const {
        Tensor h = x;
        for (std::size_t l = 0; l < config_.layers.size(); ++l) {
            const auto& b = config_.layers[l];
            h = conv1d_forward(h, kernels_[l].tensor, biases_[l].tensor, b.stride);
            h = relu(h);
            h = max_pool1d(h, b.pool_window, b.pool_stride);
        }
        return h;
    }

    ParameterList parameters() const {
        ParameterList out;
        for (std::size_t l = 0; l < kernels_.size(); ++l) {
            out.push_back(kernels_[l]);
            out.push_back(biases_[l]);
        }
        return out;
    }

private:
    CnnConfig config_;
    ParameterList kernels_;
    ParameterList biases_;
};

/// Stacks W x F windows (row-major, flattened) into a channel-major
/// [N x F x W] tensor.
inline Tensor windows_to_channels(const std::vector<std::vector<double>>& windows, std::size_t rows, std::size_t cols) {
    if (windows.empty()) throw Error(ErrorCode::ShapeMismatch, "no windows");
    std::vector<double> flat(windows.size() * rows * cols);
    for (std::size_t n = 0; n < windows.size(); ++n) {
        if (windows[n].size() != rows * cols)
            throw Error(ErrorCode::ShapeMismatch, "window holds " + std::to_string(windows[n].size()) + " values, expected " +
                                                      std::to_string(rows * cols));
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) flat[(n * cols + c) * rows + r] = windows[n][r * cols + c];
    }
    return Tensor::from({windows.size(), cols, rows}, std::move(flat));
}

inline FeatureSequence extract_features(const Matrix& window, const CnnModel& model) {
    const auto& cfg = model.config();
    if (window.rows != cfg.input_length || window.cols != cfg.input_channels)
        throw Error(ErrorCode::ShapeMismatch, "window is " + std::to_string(window.rows) + "x" +
                                                  std::to_string(window.cols) + ", model expects " +
                                                  std::to_string(cfg.input_length) + "x" +
                                                  std::to_string(cfg.input_channels));
    NoGradGuard no_grad;
    const auto out = model.forward(windows_to_channels({window.values}, window.rows, window.cols));
    return {out.dim(1), out.dim(2), {out.data().begin(), out.data().end()}};
}

} // namespace fluxtrader
