#pragma once

// Planted-signal kline generator for end-to-end checks.
//
// The log price is a quiet Gaussian random walk. At spaced positions a sharp
// move of +/-move is spread over a few bars, and the bars shortly before it
// carry a short pattern encoding the move's direction: a price oscillation
// whose period depends on the direction, and raised volume in the first half
// of the pattern (up) or the second half (down). The direction of every large
// move is therefore a deterministic function of a pattern inside the preceding
// lookback window, and nothing else in the series moves by more than the
// detection threshold.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <json.hpp>

#include "fluxtrader/market_data.hpp"

namespace fluxtrader {

struct SyntheticConfig {
    std::size_t bars = 5000;
    TimestampMs start = parse_utc("2023-12-18T02:40:00Z");
    std::int64_t interval_seconds = 300;
    double base_price = 40000.0;
    double volatility = 0.0005;       // per-bar log-return std
    double move = 0.03;               // total planted move
    std::size_t move_bars = 3;
    std::size_t spacing_min = 60;     // bars between consecutive moves
    std::size_t spacing_max = 90;
    std::size_t pattern_bars = 40;
    std::size_t pattern_gap = 12;     // bars between pattern end and move start
    double pattern_amplitude = 0.004; // log-price amplitude of the oscillation
    std::size_t up_period = 4;
    std::size_t down_period = 10;
    double pattern_volume = 3.0;      // volume multiplier on the marked half
    std::size_t warmup = 360;         // no planted move before this bar
    std::uint64_t seed = 2024;
};

inline void to_json(nlohmann::json& j, const SyntheticConfig& c) {
    j = {{"bars", c.bars},
         {"start", format_utc(c.start)},
         {"interval_seconds", c.interval_seconds},
         {"base_price", c.base_price},
         {"volatility", c.volatility},
         {"move", c.move},
         {"move_bars", c.move_bars},
         {"spacing_min", c.spacing_min},
         {"spacing_max", c.spacing_max},
         {"pattern_bars", c.pattern_bars},
         {"pattern_gap", c.pattern_gap},
         {"pattern_amplitude", c.pattern_amplitude},
         {"up_period", c.up_period},
         {"down_period", c.down_period},
         {"pattern_volume", c.pattern_volume},
         {"warmup", c.warmup},
         {"seed", c.seed}};
}

struct PlantedMove {
    std::size_t start = 0; // first bar of the move
    Direction direction = Direction::Up;
};

struct SyntheticSeries {
    KlineSeries series;
    std::vector<PlantedMove> moves;
};

inline SyntheticSeries generate_planted_series(const SyntheticConfig& cfg) {
    if (cfg.bars == 0 || cfg.move_bars == 0 || cfg.spacing_min == 0 || cfg.spacing_max < cfg.spacing_min ||
        cfg.spacing_min <= cfg.pattern_bars + cfg.pattern_gap + cfg.move_bars || cfg.up_period < 2 ||
        cfg.down_period < 2 || !(cfg.pattern_volume > 0.0) || !(cfg.base_price > 0.0) || !(cfg.volatility >= 0.0))
        throw Error(ErrorCode::InvalidConfig, "synthetic: invalid configuration");

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> step(0.0, cfg.volatility);
    std::normal_distribution<double> wick(0.0, cfg.volatility * 0.5);
    std::normal_distribution<double> log_volume(std::log(50.0), 0.3);
    std::uniform_int_distribution<std::size_t> spacing(cfg.spacing_min, cfg.spacing_max);
    std::bernoulli_distribution coin(0.5);

    SyntheticSeries out;
    std::vector<double> drift(cfg.bars, 0.0);   // per-bar log-return from planted moves
    std::vector<double> overlay(cfg.bars, 0.0); // non-cumulative oscillation
    std::vector<double> boost(cfg.bars, 1.0);   // volume multiplier
    for (std::size_t m = cfg.warmup + spacing(rng); m + cfg.move_bars < cfg.bars; m += spacing(rng)) {
        const auto dir = coin(rng) ? Direction::Up : Direction::Down;
        out.moves.push_back({m, dir});
        const double sign = dir == Direction::Up ? 1.0 : -1.0;
        for (std::size_t b = 0; b < cfg.move_bars; ++b)
            drift[m + b] = sign * std::log1p(cfg.move) / static_cast<double>(cfg.move_bars);
        const double period = static_cast<double>(dir == Direction::Up ? cfg.up_period : cfg.down_period);
        const std::size_t first = m - cfg.pattern_gap - cfg.pattern_bars;
        for (std::size_t k = 0; k < cfg.pattern_bars; ++k) {
            overlay[first + k] = cfg.pattern_amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(k) / period);
            if ((dir == Direction::Up) == (2 * k < cfg.pattern_bars)) boost[first + k] = cfg.pattern_volume;
        }
    }

    out.series = KlineSeries{"SYNTH", cfg.interval_seconds, {}};
    out.series.bars.reserve(cfg.bars);
    double walk = std::log(cfg.base_price);
    double prev_close = cfg.base_price;
    for (std::size_t i = 0; i < cfg.bars; ++i) {
        walk += drift[i] + step(rng);
        const double close = std::exp(walk + overlay[i]);
        const double open = prev_close;
        const double high = std::max(open, close) * std::exp(std::abs(wick(rng)));
        const double low = std::min(open, close) * std::exp(-std::abs(wick(rng)));
        double volume = std::exp(log_volume(rng)) * boost[i];
        if (drift[i] != 0.0) volume *= 4.0;
        out.series.bars.push_back({cfg.start + static_cast<TimestampMs>(i) * cfg.interval_seconds * 1000, open, high,
                                   low, close, volume});
        prev_close = close;
    }
    return out;
}

} // namespace fluxtrader
