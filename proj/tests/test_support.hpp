#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "backtest_oracle.hpp"
#include "fluxtrader/backtest.hpp"
#include "fluxtrader/market_data.hpp"
#include "fluxtrader/optim.hpp"

namespace fluxtrader::testing {

inline std::vector<double> random_values(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> out(n);
    for (auto& v : out) v = dist(rng);
    return out;
}

inline Parameter random_parameter(const std::string& name, Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                  double hi = 1.0) {
    const auto n = shape_size(shape);
    return {name, Tensor::from(std::move(shape), random_values(n, rng, lo, hi), true)};
}

/// Flat bars with open = high = low = close.
inline KlineSeries series_from_closes(const std::vector<double>& closes, std::int64_t interval_seconds = 300,
                                      TimestampMs start = 1569888000000) {
    KlineSeries s{"TEST", interval_seconds, {}};
    for (std::size_t i = 0; i < closes.size(); ++i)
        s.bars.push_back({start + static_cast<TimestampMs>(i) * interval_seconds * 1000, closes[i], closes[i], closes[i],
                          closes[i], 1.0});
    return s;
}

struct BacktestCase {
    KlineSeries series;
    std::vector<Signal> signals;
    BacktestConfig config;
};

inline BacktestCase to_backtest_case(const oracle::Scenario& sc) {
    BacktestCase c;
    c.series = KlineSeries{"SCN", 300, {}};
    for (std::size_t i = 0; i < sc.bars.size(); ++i) {
        const auto& b = sc.bars[i];
        c.series.bars.push_back({static_cast<TimestampMs>(i) * 300000, b.open, b.high, b.low, b.close, 1.0});
    }
    for (const auto& s : sc.sigs) c.signals.push_back({s.bar, PredictedSignal::from_probability(s.p_up)});
    c.config.confidence_threshold = sc.tau;
    c.config.stop_loss = sc.stop;
    c.config.fee_rate = sc.fee;
    c.config.hold_bars = sc.hold;
    return c;
}

inline bool close_rel(double a, double b, double tol) {
    return a == b || std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("fluxtrader_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace fluxtrader::testing
