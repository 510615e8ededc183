#pragma once

// Adversarial stage. The discriminator D maps a flattened feature sequence to
// a probability of being real; the generator G maps latent z ~ N(0, I) to a
// synthetic sequence. With expectations taken as batch means:
//
//   V   = mean log D(x) + mean log(1 - D(G(z)))
//   J_D = -V / 2
//   J_G = -J_D            (minimax, zero-sum)
//   J_G = -mean log D(G(z))   (non-saturating, used for training)

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "fluxtrader/cnn.hpp"
#include "fluxtrader/layers.hpp"

namespace fluxtrader {

enum class GeneratorLossMode { Minimax, NonSaturating };

inline constexpr std::size_t kTemporalWidth = 160;

struct GanConfig {
    std::size_t latent_dim = 32;
    std::vector<std::size_t> generator_hidden{128};
    std::vector<std::size_t> discriminator_hidden{128, 64};
    std::size_t d_steps_per_g_step = 1;
    std::size_t epochs = 5;
    std::size_t batch_size = 32;
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    GeneratorLossMode generator_mode = GeneratorLossMode::NonSaturating;
    std::uint64_t seed = 13;

    void validate() const {
        if (latent_dim < 1 || d_steps_per_g_step < 1 || batch_size == 0 || discriminator_hidden.empty() ||
            !(learning_rate > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0))
            throw Error(ErrorCode::InvalidConfig, "gan: invalid configuration");
        for (auto w : generator_hidden)
            if (w == 0) throw Error(ErrorCode::InvalidConfig, "gan: zero generator width");
        for (auto w : discriminator_hidden)
            if (w == 0) throw Error(ErrorCode::InvalidConfig, "gan: zero discriminator width");
    }
};

inline void to_json(nlohmann::json& j, const GanConfig& c) {
    j = {{"latent_dim", c.latent_dim},
         {"generator_hidden", c.generator_hidden},
         {"discriminator_hidden", c.discriminator_hidden},
         {"d_steps_per_g_step", c.d_steps_per_g_step},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate},
         {"beta1", c.beta1},
         {"generator_mode", c.generator_mode == GeneratorLossMode::Minimax ? "minimax" : "nonsaturating"},
         {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, GanConfig& c) {
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.generator_hidden = j.value("generator_hidden", c.generator_hidden);
    c.discriminator_hidden = j.value("discriminator_hidden", c.discriminator_hidden);
    c.d_steps_per_g_step = j.value("d_steps_per_g_step", c.d_steps_per_g_step);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    const auto mode = j.value("generator_mode", std::string("nonsaturating"));
    if (mode == "minimax") c.generator_mode = GeneratorLossMode::Minimax;
    else if (mode == "nonsaturating") c.generator_mode = GeneratorLossMode::NonSaturating;
    else throw Error(ErrorCode::InvalidConfig, "gan.generator_mode must be minimax or nonsaturating");
    c.seed = j.value("seed", c.seed);
}

// ---------------------------------------------------------------------------
// Objectives

namespace detail {

inline void check_probabilities(const Tensor& t) {
    for (double p : t.data())
        if (!(p > 0.0 && p < 1.0))
            throw Error(ErrorCode::ProbabilityOutOfRange, "discriminator output " + std::to_string(p) + " outside (0,1)");
}

} // namespace detail

inline Tensor value_function(const Tensor& d_real, const Tensor& d_fake) {
    detail::check_probabilities(d_real);
    detail::check_probabilities(d_fake);
    return add(mean(log(d_real)), mean(log(affine(d_fake, -1.0, 1.0))));
}

inline Tensor discriminator_loss(const Tensor& d_real, const Tensor& d_fake) {
    return affine(value_function(d_real, d_fake), -0.5);
}

/// Minimax mode needs the real-sample scores of the same batch; they enter
/// as a constant so that J_G = -J_D holds exactly.
inline Tensor generator_loss(const Tensor& d_fake, GeneratorLossMode mode,
                             const std::optional<Tensor>& d_real = std::nullopt) {
    detail::check_probabilities(d_fake);
    if (mode == GeneratorLossMode::NonSaturating) return affine(mean(log(d_fake)), -1.0);
    Tensor fake_term = mean(log(affine(d_fake, -1.0, 1.0)));
    if (d_real) {
        detail::check_probabilities(*d_real);
        fake_term = add(mean(log(d_real->detach())), fake_term);
    }
    return affine(fake_term, 0.5);
}

namespace detail {
inline Tensor probabilities(std::span<const double> p) { return Tensor::from({p.size()}, {p.begin(), p.end()}); }
} // namespace detail

inline double value_function(std::span<const double> d_real, std::span<const double> d_fake) {
    return value_function(detail::probabilities(d_real), detail::probabilities(d_fake)).item();
}
inline double discriminator_loss(std::span<const double> d_real, std::span<const double> d_fake) {
    return discriminator_loss(detail::probabilities(d_real), detail::probabilities(d_fake)).item();
}
inline double generator_loss(std::span<const double> d_fake, GeneratorLossMode mode,
                             std::span<const double> d_real = {}) {
    std::optional<Tensor> real;
    if (!d_real.empty()) real = detail::probabilities(d_real);
    return generator_loss(detail::probabilities(d_fake), mode, real).item();
}

// ---------------------------------------------------------------------------
// Model

class GanModel {
public:
    GanModel() = default;

    GanModel(const GanConfig& config, std::size_t data_width) : config_(config), data_width_(data_width) {
        config_.validate();
        if (data_width == 0) throw Error(ErrorCode::InvalidConfig, "gan: zero data width");
        std::mt19937_64 rng(config_.seed);
        std::vector<std::size_t> g{config_.latent_dim};
        g.insert(g.end(), config_.generator_hidden.begin(), config_.generator_hidden.end());
        g.push_back(data_width);
        std::vector<std::size_t> d{data_width};
        d.insert(d.end(), config_.discriminator_hidden.begin(), config_.discriminator_hidden.end());
        d.push_back(1);
        generator_ = Mlp("gan.generator", g, Activation::Relu, Activation::Identity, rng);
        discriminator_ = Mlp("gan.discriminator", d, Activation::Tanh, Activation::Sigmoid, rng);
    }

    const GanConfig& config() const { return config_; }
    std::size_t data_width() const { return data_width_; }
    std::size_t penultimate_width() const { return config_.discriminator_hidden.back(); }

    Tensor generate(const Tensor& z) const { return generator_.forward(z); }
    Tensor discriminate(const Tensor& x) const { return discriminator_.forward(x); }
    /// Activations of the last hidden discriminator layer.
    Tensor penultimate(const Tensor& x) const {
        return discriminator_.forward_until(x, discriminator_.layer_count() - 1);
    }

    ParameterList generator_parameters() const { return generator_.parameters(); }
    ParameterList discriminator_parameters() const { return discriminator_.parameters(); }
    ParameterList parameters() const { return concat(generator_parameters(), discriminator_parameters()); }

    std::vector<double>& discriminator_losses() { return j_d_; }
    std::vector<double>& generator_losses() { return j_g_; }
    const std::vector<double>& discriminator_losses() const { return j_d_; }
    const std::vector<double>& generator_losses() const { return j_g_; }

private:
    GanConfig config_;
    std::size_t data_width_ = 0;
    Mlp generator_;
    Mlp discriminator_;
    std::vector<double> j_d_;
    std::vector<double> j_g_;
};

/// Alternating optimisation state; can be resumed on fresh data.
class GanTrainer {
public:
    using Callback = std::function<void(std::size_t iteration, const GanModel&, std::mt19937_64& rng)>;

    GanTrainer(const GanConfig& config, std::size_t data_width)
        : model_(config, data_width), rng_(config.seed ^ 0x5851f42d4c957f2dULL) {
        d_adam_.learning_rate = g_adam_.learning_rate = config.learning_rate;
        d_adam_.beta1 = g_adam_.beta1 = config.beta1;
    }

    GanModel& model() { return model_; }
    const GanModel& model() const { return model_; }

    Tensor sample_latent(std::size_t n) {
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> z(n * model_.config().latent_dim);
        for (auto& v : z) v = normal(rng_);
        return Tensor::from({n, model_.config().latent_dim}, std::move(z));
    }

    /// One iteration: d_steps discriminator updates, then one generator update.
    void iterate(const std::vector<std::vector<double>>& data) {
        const auto& cfg = model_.config();
        auto d_params = model_.discriminator_parameters();
        auto g_params = model_.generator_parameters();
        std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
        double j_d = 0.0;
        Tensor d_real;
        for (std::size_t s = 0; s < cfg.d_steps_per_g_step; ++s) {
            std::vector<std::vector<double>> batch;
            for (std::size_t i = 0; i < cfg.batch_size; ++i) batch.push_back(data[pick(rng_)]);
            Tensor fake;
            {
                NoGradGuard no_grad;
                fake = model_.generate(sample_latent(cfg.batch_size));
            }
            zero_grads(d_params);
            d_real = model_.discriminate(stack_rows(batch));
            const auto loss = discriminator_loss(d_real, model_.discriminate(fake));
            loss.backward();
            adam_step(d_params, d_adam_);
            j_d = loss.item();
        }
        zero_grads(g_params);
        const auto d_fake = model_.discriminate(model_.generate(sample_latent(cfg.batch_size)));
        const auto g_loss = generator_loss(d_fake, cfg.generator_mode, d_real);
        g_loss.backward();
        adam_step(g_params, g_adam_);
        zero_grads(d_params);
        if (!std::isfinite(j_d) || !std::isfinite(g_loss.item()))
            throw Error(ErrorCode::DivergedLoss, "adversarial losses became non-finite");
        model_.discriminator_losses().push_back(j_d);
        model_.generator_losses().push_back(g_loss.item());
        ++iterations_;
    }

    /// Runs `epochs` passes of ceil(n / batch_size) iterations each.
    void train(const std::vector<std::vector<double>>& data, std::size_t epochs, const Callback& callback = {}) {
        const auto& cfg = model_.config();
        if (data.size() < cfg.batch_size || data.empty())
            throw Error(ErrorCode::EmptyDataset, "gan needs at least batch_size sequences");
        for (const auto& row : data)
            if (row.size() != model_.data_width()) throw Error(ErrorCode::ShapeMismatch, "gan: bad sequence width");
        const std::size_t per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
        for (std::size_t e = 0; e < epochs; ++e)
            for (std::size_t it = 0; it < per_epoch; ++it) {
                try {
                    iterate(data);
                } catch (const Error& err) {
                    if (err.code() == ErrorCode::NonFiniteValue) throw Error(ErrorCode::DivergedLoss, err.what());
                    throw;
                }
                if (callback) callback(iterations_, model_, rng_);
            }
    }

    std::size_t iterations() const { return iterations_; }

private:
    GanModel model_;
    AdamState d_adam_;
    AdamState g_adam_;
    std::mt19937_64 rng_;
    std::size_t iterations_ = 0;
};

inline std::vector<double> flatten(const FeatureSequence& f) { return f.values; }

inline GanModel train_gan(const std::vector<std::vector<double>>& data, const GanConfig& config,
                          const GanTrainer::Callback& callback = {}) {
    if (data.empty()) throw Error(ErrorCode::EmptyDataset, "train_gan on empty data");
    GanTrainer trainer(config, data.front().size());
    trainer.train(data, config.epochs, callback);
    return trainer.model();
}

inline GanModel train_gan(const std::vector<FeatureSequence>& features, const GanConfig& config) {
    std::vector<std::vector<double>> data;
    for (const auto& f : features) data.push_back(flatten(f));
    return train_gan(data, config);
}

// ---------------------------------------------------------------------------
// 160-wide temporal feature

struct TemporalFeature {
    std::array<double, kTemporalWidth> values{};
};

/// Dense map from [D penultimate ++ channel means ++ channel maxima] to 160.
class TemporalProjection {
public:
    TemporalProjection() = default;

    TemporalProjection(std::size_t penultimate_width, std::size_t channels, std::uint64_t seed)
        : channels_(channels) {
        std::mt19937_64 rng(seed);
        layer_ = Mlp("projection", {penultimate_width + 2 * channels, kTemporalWidth}, Activation::Tanh,
                     Activation::Tanh, rng);
    }

    std::size_t input_width() const { return layer_.input_width(); }
    std::size_t channels() const { return channels_; }
    Tensor forward(const Tensor& x) const { return layer_.forward(x); }
    ParameterList parameters() const { return layer_.parameters(); }

private:
    std::size_t channels_ = 0;
    Mlp layer_;
};

/// Batched, differentiable: features [N x C x L] -> [N x 160].
inline Tensor temporal_features(const Tensor& features, const GanModel& gan, const TemporalProjection& projection) {
    if (features.rank() != 3 || features.dim(1) * features.dim(2) != gan.data_width() ||
        features.dim(1) != projection.channels())
        throw Error(ErrorCode::ShapeMismatch, "temporal_features: features " + shape_string(features.shape()) +
                                                  " do not match the adversarial model");
    const std::size_t n = features.dim(0);
    const auto hidden = gan.penultimate(reshape(features, {n, gan.data_width()}));
    const auto summary = concat_columns(channel_mean(features), channel_max(features));
    return projection.forward(concat_columns(hidden, summary));
}

inline TemporalFeature temporal_features(const FeatureSequence& seq, const GanModel& gan,
                                         const TemporalProjection& projection) {
    NoGradGuard no_grad;
    const auto out = temporal_features(Tensor::from({1, seq.channels, seq.length}, seq.values), gan, projection);
    TemporalFeature tf;
    std::copy(out.data().begin(), out.data().end(), tf.values.begin());
    return tf;
}

} // namespace fluxtrader
