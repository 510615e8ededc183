#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "fluxtrader/optim.hpp"

namespace fluxtrader {

/// Compares backward() against central finite differences on every
/// coordinate of `params`. Returns max |analytic - numeric| / max(1, |numeric|).
/// Parameter grads are zeroed before and left holding the analytic gradient.
inline double grad_check(const std::function<Tensor()>& f, ParameterList& params, double perturbation = 1e-5) {
    if (!(perturbation >= 1e-6 && perturbation <= 1e-4))
        throw Error(ErrorCode::InvalidConfig, "finite-difference step must lie in [1e-6, 1e-4]");

    const double first = f().item();
    const double second = f().item();
    if (first != second)
        throw Error(ErrorCode::NondeterministicFunction, "two evaluations at the same point disagree");

    zero_grads(params);
    const Tensor loss = f();
    if (loss.has_graph()) loss.backward();

    double worst = 0.0;
    for (auto& p : params) {
        auto data = p.tensor.mutable_data();
        const auto analytic = p.tensor.grad();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + perturbation;
            const double up = f().item();
            data[i] = saved - perturbation;
            const double down = f().item();
            data[i] = saved;
            const double numeric = (up - down) / (2.0 * perturbation);
            const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

} // namespace fluxtrader
