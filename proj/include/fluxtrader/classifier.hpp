#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fluxtrader/gan.hpp"
#include "fluxtrader/layers.hpp"
#include "fluxtrader/market_data.hpp"

namespace fluxtrader {

struct ClassifierConfig {
    std::vector<std::size_t> hidden_sizes{64};
    std::size_t epochs = 60;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 17;
    std::size_t cv_folds = 5;

    void validate() const {
        if (batch_size == 0 || !(learning_rate > 0.0) || cv_folds < 2)
            throw Error(ErrorCode::InvalidConfig, "classifier: invalid configuration");
        for (auto w : hidden_sizes)
            if (w == 0) throw Error(ErrorCode::InvalidConfig, "classifier: zero hidden width");
    }
};

inline void to_json(nlohmann::json& j, const ClassifierConfig& c) {
    j = {{"hidden_sizes", c.hidden_sizes}, {"epochs", c.epochs}, {"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate}, {"seed", c.seed},   {"cv_folds", c.cv_folds}};
}

inline void from_json(const nlohmann::json& j, ClassifierConfig& c) {
    c.hidden_sizes = j.value("hidden_sizes", c.hidden_sizes);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    c.cv_folds = j.value("cv_folds", c.cv_folds);
}

struct PredictedSignal {
    double p_up = 0.5;
    double confidence = 0.5;

    static PredictedSignal from_probability(double p) { return {p, std::max(p, 1.0 - p)}; }
    Direction direction() const { return p_up >= 0.5 ? Direction::Up : Direction::Down; }
};

/// 160 -> hidden (relu) -> 1 (sigmoid).
class ClassifierModel {
public:
    ClassifierModel() = default;

    explicit ClassifierModel(const ClassifierConfig& config) : config_(config) {
        config_.validate();
        std::mt19937_64 rng(config_.seed);
        std::vector<std::size_t> widths{kTemporalWidth};
        widths.insert(widths.end(), config_.hidden_sizes.begin(), config_.hidden_sizes.end());
        widths.push_back(1);
        head_ = Mlp("classifier", widths, Activation::Relu, Activation::Sigmoid, rng);
    }

    const ClassifierConfig& config() const { return config_; }
    Tensor forward(const Tensor& features) const { return head_.forward(features); }
    ParameterList parameters() const { return head_.parameters(); }

    void zero_parameters() {
        for (auto& p : head_.parameters()) {
            auto d = p.tensor.mutable_data();
            std::fill(d.begin(), d.end(), 0.0);
        }
    }

    std::vector<double>& loss_history() { return loss_history_; }
    const std::vector<double>& loss_history() const { return loss_history_; }

private:
    ClassifierConfig config_;
    Mlp head_;
    std::vector<double> loss_history_;
};

inline Tensor feature_batch(const std::vector<TemporalFeature>& features, const std::vector<std::size_t>& rows) {
    std::vector<double> flat;
    flat.reserve(rows.size() * kTemporalWidth);
    for (auto r : rows) flat.insert(flat.end(), features[r].values.begin(), features[r].values.end());
    return Tensor::from({rows.size(), kTemporalWidth}, std::move(flat));
}

inline Tensor label_batch(const std::vector<Direction>& labels, const std::vector<std::size_t>& rows) {
    std::vector<double> y;
    y.reserve(rows.size());
    for (auto r : rows) y.push_back(label_value(labels[r]));
    return Tensor::from({rows.size(), 1}, std::move(y));
}

inline void require_both_classes(const std::vector<Direction>& labels) {
    const auto ups = std::count(labels.begin(), labels.end(), Direction::Up);
    if (ups == 0 || ups == static_cast<std::ptrdiff_t>(labels.size()))
        throw Error(ErrorCode::SingleClassDataset, "training labels contain a single class");
}

inline ClassifierModel train_classifier(const std::vector<TemporalFeature>& features,
                                        const std::vector<Direction>& labels, const ClassifierConfig& config) {
    if (features.empty()) throw Error(ErrorCode::EmptyDataset, "no training features");
    if (features.size() != labels.size()) throw Error(ErrorCode::ShapeMismatch, "features and labels differ in length");
    require_both_classes(labels);
    ClassifierModel model(config);
    auto params = model.parameters();
    AdamState adam;
    adam.learning_rate = config.learning_rate;
    std::mt19937_64 rng(config.seed ^ 0xbf58476d1ce4e5b9ULL);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double total = 0.0;
        for (const auto& batch : make_batches(features.size(), config.batch_size, rng)) {
            zero_grads(params);
            const auto loss = loss_bce(model.forward(feature_batch(features, batch)), label_batch(labels, batch));
            loss.backward();
            adam_step(params, adam);
            total += loss.item() * static_cast<double>(batch.size());
        }
        model.loss_history().push_back(total / static_cast<double>(features.size()));
    }
    return model;
}

inline PredictedSignal predict(const ClassifierModel& model, const TemporalFeature& feature) {
    NoGradGuard no_grad;
    const auto p = model.forward(Tensor::from({1, kTemporalWidth}, {feature.values.begin(), feature.values.end()}));
    return PredictedSignal::from_probability(p.item());
}

/// Fraction of samples where (p_up >= 0.5) matches the label.
inline double evaluate(const ClassifierModel& model, const std::vector<TemporalFeature>& features,
                       const std::vector<Direction>& labels) {
    if (features.empty()) throw Error(ErrorCode::EmptyTestSet, "no test features");
    if (features.size() != labels.size()) throw Error(ErrorCode::ShapeMismatch, "features and labels differ in length");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < features.size(); ++i)
        hits += predict(model, features[i]).direction() == labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(features.size());
}

/// Contiguous [begin, end) blocks; the first n % k folds get one extra item.
inline std::vector<std::pair<std::size_t, std::size_t>> chronological_folds(std::size_t n, std::size_t k) {
    if (k < 2 || k > n)
        throw Error(ErrorCode::TooFewSamples,
                    "cannot make " + std::to_string(k) + " folds from " + std::to_string(n) + " samples");
    std::vector<std::pair<std::size_t, std::size_t>> folds;
    std::size_t start = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t len = n / k + (f < n % k ? 1 : 0);
        folds.emplace_back(start, start + len);
        start += len;
    }
    return folds;
}

struct CrossValidation {
    std::vector<std::pair<std::size_t, std::size_t>> folds;
    std::vector<double> accuracies;
    double mean = 0.0;
};

/// Features must be in chronological order; each fold is held out in turn.
inline CrossValidation cross_validate(const std::vector<TemporalFeature>& features,
                                      const std::vector<Direction>& labels, const ClassifierConfig& config) {
    if (features.size() != labels.size()) throw Error(ErrorCode::ShapeMismatch, "features and labels differ in length");
    CrossValidation cv;
    cv.folds = chronological_folds(features.size(), config.cv_folds);
    for (const auto& [begin, end] : cv.folds) {
        std::vector<TemporalFeature> train_x, test_x;
        std::vector<Direction> train_y, test_y;
        for (std::size_t i = 0; i < features.size(); ++i) {
            auto& xs = (i >= begin && i < end) ? test_x : train_x;
            auto& ys = (i >= begin && i < end) ? test_y : train_y;
            xs.push_back(features[i]);
            ys.push_back(labels[i]);
        }
        const auto model = train_classifier(train_x, train_y, config);
        cv.accuracies.push_back(evaluate(model, test_x, test_y));
    }
    double total = 0.0;
    for (double a : cv.accuracies) total += a;
    cv.mean = total / static_cast<double>(cv.accuracies.size());
    return cv;
}

} // namespace fluxtrader
