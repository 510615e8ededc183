#pragma once

#include <cmath>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "fluxtrader/error.hpp"
#include "fluxtrader/tensor.hpp"

namespace fluxtrader {

/// A named trainable tensor. Copies share storage with the original.
struct Parameter {
    std::string name;
    Tensor tensor;
};

using ParameterList = std::vector<Parameter>;

inline Parameter make_parameter(std::string name, Shape shape) {
    return {std::move(name), Tensor::zeros(std::move(shape), true)};
}

inline void check_unique_names(const ParameterList& params) {
    std::unordered_set<std::string> seen;
    for (const auto& p : params)
        if (!seen.insert(p.name).second) throw Error(ErrorCode::InvalidConfig, "duplicate parameter name " + p.name);
}

inline void zero_grads(ParameterList& params) {
    for (auto& p : params) p.tensor.zero_grad();
}

inline std::size_t parameter_count(const ParameterList& params) {
    std::size_t total = 0;
    for (const auto& p : params) total += p.tensor.size();
    return total;
}

/// Uniform Glorot initialisation with the given fan-in / fan-out.
inline void init_glorot(Parameter& p, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : p.tensor.mutable_data()) v = dist(rng);
}

struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    void validate() const {
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0 && learning_rate > 0.0))
            throw Error(ErrorCode::InvalidConfig, "Adam hyperparameters out of range");
    }
};

/// One bias-corrected Adam update. Gradients are left in place.
inline void adam_step(ParameterList& params, AdamState& state) {
    state.validate();
    for (const auto& p : params)
        if (!p.tensor.has_grad()) throw Error(ErrorCode::MissingGradient, "parameter " + p.name + " has no gradient");
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.tensor.size(), 0.0);
            state.v.emplace_back(p.tensor.size(), 0.0);
        }
    }
    if (state.m.size() != params.size())
        throw Error(ErrorCode::ShapeMismatch, "Adam state tracks a different parameter list");
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto data = params[k].tensor.mutable_data();
        const auto grad = params[k].tensor.grad();
        auto& m = state.m[k];
        auto& v = state.v[k];
        if (m.size() != data.size()) throw Error(ErrorCode::ShapeMismatch, "Adam moment size mismatch");
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double g = grad[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            data[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

} // namespace fluxtrader
