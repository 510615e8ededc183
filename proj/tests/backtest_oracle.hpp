#pragma once

// Straight-line bar-by-bar simulator used as an oracle for run_backtest.
// Deliberately self-contained: plain arrays in, plain arrays out.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

namespace oracle {

struct Bar {
    double open, high, low, close;
};

struct Sig {
    std::size_t bar;
    double p_up;
};

struct Result {
    std::vector<double> equity;
    std::vector<double> trade_returns;
    std::vector<int> trade_sides; // +1 long, -1 short
    std::vector<std::size_t> entries, exits;
    double net = 1.0;
    double drawdown = 0.0;
};

inline Result simulate(const std::vector<Bar>& bars, const std::vector<Sig>& sigs, double tau, std::size_t hold,
                       double stop_frac, double fee, double start) {
    Result out;
    const std::size_t n = bars.size();
    double eq = start;
    int side = 0; // 0 flat
    std::size_t entry_bar = 0;
    double entry_px = 0.0, stop_px = 0.0;
    std::size_t last_exit = 0;
    bool any_exit = false;

    for (std::size_t t = 0; t < n; ++t) {
        if (side == 0) {
            // a signal from bar t-1 may fill at this bar's open
            bool entered = false;
            if (t >= 1 && t + 1 < n && !(any_exit && t <= last_exit)) {
                for (const auto& s : sigs) {
                    if (s.bar != t - 1) continue;
                    const double conf = s.p_up > 0.5 ? s.p_up : 1.0 - s.p_up;
                    if (conf < tau) continue;
                    side = s.p_up >= 0.5 ? 1 : -1;
                    entry_bar = t;
                    entry_px = bars[t].open;
                    stop_px = side == 1 ? entry_px * (1.0 - stop_frac) : entry_px * (1.0 + stop_frac);
                    entered = true;
                    break;
                }
            }
            if (!entered) {
                out.equity.push_back(eq);
                continue;
            }
        }

        double exit_px = 0.0;
        bool exit_now = false;
        if (t != entry_bar) {
            if (side == 1 && bars[t].low <= stop_px) {
                exit_px = stop_px;
                exit_now = true;
            } else if (side == -1 && bars[t].high >= stop_px) {
                exit_px = stop_px;
                exit_now = true;
            } else if (t - entry_bar == hold) {
                exit_px = bars[t].open;
                exit_now = true;
            } else if (t == n - 1) {
                exit_px = bars[t].close;
                exit_now = true;
            }
        }
        auto value = [&](double px) {
            const double ratio = px / entry_px;
            const double g = side == 1 ? ratio : 2.0 - ratio;
            return g;
        };
        if (exit_now) {
            const double r = (1.0 - fee) * (1.0 - fee) * value(exit_px) - 1.0;
            eq = eq * (1.0 + r);
            out.trade_returns.push_back(r);
            out.trade_sides.push_back(side);
            out.entries.push_back(entry_bar);
            out.exits.push_back(t);
            out.equity.push_back(eq);
            side = 0;
            last_exit = t;
            any_exit = true;
        } else {
            out.equity.push_back(eq * (1.0 - fee) * value(bars[t].close));
        }
    }
    out.net = eq;

    // all peak/trough pairs
    for (std::size_t i = 0; i < out.equity.size(); ++i)
        for (std::size_t j = i; j < out.equity.size(); ++j) {
            const double d = (out.equity[i] - out.equity[j]) / out.equity[i];
            if (d > out.drawdown) out.drawdown = d;
        }
    return out;
}

struct Scenario {
    std::vector<Bar> bars;
    std::vector<Sig> sigs;
    double tau, stop, fee;
    std::size_t hold;
};

/// Random walk of up to 50 bars with up to 10 signals and random stop/fee settings.
inline Scenario random_scenario(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Scenario sc;
    const std::size_t n = 2 + static_cast<std::size_t>(u(rng) * 49);
    double px = 100.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double open = px * (1.0 + 0.01 * (u(rng) - 0.5));
        const double close = open * (1.0 + 0.04 * (u(rng) - 0.5));
        const double high = std::max(open, close) * (1.0 + 0.02 * u(rng));
        const double low = std::min(open, close) * (1.0 - 0.02 * u(rng));
        sc.bars.push_back({open, high, low, close});
        px = close;
    }
    const std::size_t m = static_cast<std::size_t>(u(rng) * 11);
    for (std::size_t k = 0; k < m; ++k)
        sc.sigs.push_back({static_cast<std::size_t>(u(rng) * static_cast<double>(n)), u(rng)});
    std::sort(sc.sigs.begin(), sc.sigs.end(), [](const Sig& a, const Sig& b) { return a.bar < b.bar; });
    sc.tau = 0.5 + 0.3 * u(rng);
    sc.stop = 0.002 + 0.03 * u(rng);
    sc.fee = 0.002 * u(rng);
    sc.hold = 1 + static_cast<std::size_t>(u(rng) * 12);
    return sc;
}

} // namespace oracle
