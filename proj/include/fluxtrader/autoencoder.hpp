#pragma once

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "fluxtrader/layers.hpp"
#include "fluxtrader/market_data.hpp"

namespace fluxtrader {

struct DaeConfig {
    std::size_t input_width = kDefaultWindow * kKlineChannels;
    std::vector<std::size_t> hidden_sizes{512, 128};
    double noise_std = 0.05;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 7;

    void validate() const {
        if (input_width == 0 || hidden_sizes.empty() || batch_size == 0 || !(noise_std >= 0.0) ||
            !(learning_rate > 0.0))
            throw Error(ErrorCode::InvalidConfig, "dae: invalid configuration");
        for (std::size_t i = 0; i < hidden_sizes.size(); ++i)
            if (hidden_sizes[i] == 0 || (i > 0 && hidden_sizes[i] >= hidden_sizes[i - 1]))
                throw Error(ErrorCode::InvalidConfig, "dae: hidden sizes must be positive and strictly decreasing");
    }
};

inline void to_json(nlohmann::json& j, const DaeConfig& c) {
    j = {{"input_width", c.input_width}, {"hidden_sizes", c.hidden_sizes}, {"noise_std", c.noise_std},
         {"epochs", c.epochs},           {"batch_size", c.batch_size},     {"learning_rate", c.learning_rate},
         {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, DaeConfig& c) {
    c.input_width = j.value("input_width", c.input_width);
    c.hidden_sizes = j.value("hidden_sizes", c.hidden_sizes);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
}

class DaeModel {
public:
    DaeModel() = default;

    explicit DaeModel(const DaeConfig& config) : config_(config) {
        config_.validate();
        std::mt19937_64 rng(config_.seed);
        std::vector<std::size_t> enc{config_.input_width};
        enc.insert(enc.end(), config_.hidden_sizes.begin(), config_.hidden_sizes.end());
        std::vector<std::size_t> dec(enc.rbegin(), enc.rend());
        encoder_ = Mlp("dae.encoder", enc, Activation::Tanh, Activation::Tanh, rng);
        decoder_ = Mlp("dae.decoder", dec, Activation::Tanh, Activation::Identity, rng);
    }

    const DaeConfig& config() const { return config_; }
    std::vector<double>& loss_history() { return loss_history_; }
    const std::vector<double>& loss_history() const { return loss_history_; }

    Tensor reconstruct(const Tensor& batch) const { return decoder_.forward(encoder_.forward(batch)); }
    Tensor encode(const Tensor& batch) const { return encoder_.forward(batch); }

    ParameterList parameters() const { return concat(encoder_.parameters(), decoder_.parameters()); }

private:
    DaeConfig config_;
    Mlp encoder_;
    Mlp decoder_;
    std::vector<double> loss_history_;
};

/// Adds i.i.d. N(0, noise_std^2) noise, reproducible from `seed`.
inline std::vector<double> corrupt(std::span<const double> window, double noise_std, std::uint64_t seed) {
    if (!(noise_std >= 0.0)) throw Error(ErrorCode::InvalidConfig, "noise_std must be non-negative");
    std::vector<double> out(window.begin(), window.end());
    if (noise_std == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_std);
    for (auto& v : out) v += noise(rng);
    return out;
}

/// Trains on flattened clean windows; every mini-batch is freshly corrupted.
inline DaeModel train_dae(const std::vector<std::vector<double>>& windows, const DaeConfig& config) {
    if (windows.empty()) throw Error(ErrorCode::EmptyDataset, "train_dae needs at least one window");
    for (const auto& w : windows)
        if (w.size() != config.input_width)
            throw Error(ErrorCode::ShapeMismatch, "window width " + std::to_string(w.size()) + " != input_width " +
                                                      std::to_string(config.input_width));
    DaeModel model(config);
    auto params = model.parameters();
    AdamState adam;
    adam.learning_rate = config.learning_rate;
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double total = 0.0;
        std::size_t seen = 0;
        for (const auto& batch : make_batches(windows.size(), config.batch_size, rng)) {
            std::vector<std::vector<double>> clean, noisy;
            for (auto i : batch) {
                clean.push_back(windows[i]);
                noisy.push_back(corrupt(windows[i], config.noise_std, rng()));
            }
            zero_grads(params);
            Tensor loss;
            try {
                loss = loss_mse(model.reconstruct(stack_rows(noisy)), stack_rows(clean));
            } catch (const Error& e) {
                if (e.code() == ErrorCode::NonFiniteValue) throw Error(ErrorCode::DivergedLoss, e.what());
                throw;
            }
            loss.backward();
            adam_step(params, adam);
            total += loss.item() * static_cast<double>(batch.size());
            seen += batch.size();
        }
        const double epoch_loss = total / static_cast<double>(seen);
        if (!std::isfinite(epoch_loss)) throw Error(ErrorCode::DivergedLoss, "epoch loss is not finite");
        model.loss_history().push_back(epoch_loss);
    }
    return model;
}

inline std::vector<double> flatten(const Matrix& m) { return m.values; }

inline DaeModel train_dae(const std::vector<EventSample>& samples, const DaeConfig& config) {
    std::vector<std::vector<double>> windows;
    windows.reserve(samples.size());
    for (const auto& s : samples) windows.push_back(flatten(s.window));
    return train_dae(windows, config);
}

/// decoder(encoder(window)); no corruption at inference.
inline std::vector<double> denoise(const DaeModel& model, std::span<const double> window) {
    if (window.size() != model.config().input_width)
        throw Error(ErrorCode::ShapeMismatch, "denoise: width " + std::to_string(window.size()) + " != " +
                                                  std::to_string(model.config().input_width));
    NoGradGuard no_grad;
    const auto out = model.reconstruct(Tensor::from({1, window.size()}, {window.begin(), window.end()}));
    return {out.data().begin(), out.data().end()};
}

inline std::vector<std::vector<double>> denoise_all(const DaeModel& model, const std::vector<std::vector<double>>& rows,
                                                    std::size_t chunk = 64) {
    std::vector<std::vector<double>> out;
    out.reserve(rows.size());
    NoGradGuard no_grad;
    for (std::size_t start = 0; start < rows.size(); start += chunk) {
        std::vector<std::vector<double>> part(rows.begin() + static_cast<std::ptrdiff_t>(start),
                                              rows.begin() + static_cast<std::ptrdiff_t>(std::min(rows.size(), start + chunk)));
        for (const auto& r : part)
            if (r.size() != model.config().input_width) throw Error(ErrorCode::ShapeMismatch, "denoise_all: bad width");
        const auto rec = model.reconstruct(stack_rows(part));
        const std::size_t w = model.config().input_width;
        for (std::size_t r = 0; r < part.size(); ++r)
            out.emplace_back(rec.data().begin() + static_cast<std::ptrdiff_t>(r * w),
                             rec.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * w));
    }
    return out;
}

} // namespace fluxtrader
