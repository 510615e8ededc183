#pragma once

// Single-position long/short replay.
//
// A signal at bar s (known at the close of s) opens a position at the open of
// bar e = s + 1, Long when p_up >= 0.5 and Short otherwise, provided its
// confidence reaches the threshold and no position is open. The stop level is
// entry * (1 -/+ stop_loss); it is watched on the low (Long) or high (Short)
// of bars e+1 .. e+hold and filled exactly at the stop price. Without a stop
// the position closes at the open of bar e + hold, or at the close of the
// last bar if the series ends first. A stop in bar e + hold wins over expiry.
//
// Fees are charged on both sides as a fraction of notional, and the whole
// equity is committed to every trade:
//   1 + r = (1 - fee)^2 * gross,  gross = exit/entry (Long), 2 - exit/entry (Short)
// The equity curve has one value per bar: flat while out of the market,
// marked to the close while a position is open, realised on the exit bar.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "fluxtrader/classifier.hpp"
#include "fluxtrader/market_data.hpp"

namespace fluxtrader {

enum class Side { Long, Short };
enum class ExitReason { HoldExpiry, StopLoss, EndOfData };

constexpr std::string_view to_string(Side s) { return s == Side::Long ? "Long" : "Short"; }
constexpr std::string_view to_string(ExitReason r) {
    switch (r) {
    case ExitReason::HoldExpiry: return "HoldExpiry";
    case ExitReason::StopLoss: return "StopLoss";
    case ExitReason::EndOfData: return "EndOfData";
    }
    return "";
}

struct BacktestConfig {
    double confidence_threshold = 0.5;
    std::size_t hold_bars = 10;
    double stop_loss = 0.02;
    double fee_rate = 0.0004;
    double initial_equity = 1.0;
    double periods_per_year = 0.0; // 0: trades per year observed over the series
    double risk_free = 0.0;        // annual

    void validate() const {
        if (!(confidence_threshold >= 0.5 && confidence_threshold < 1.0) || hold_bars < 1 || !(stop_loss > 0.0) ||
            !(stop_loss < 1.0) || !(fee_rate >= 0.0 && fee_rate < 1.0) || !(initial_equity > 0.0) ||
            !(periods_per_year >= 0.0))
            throw Error(ErrorCode::InvalidConfig, "backtest: invalid configuration");
    }
};

inline void to_json(nlohmann::json& j, const BacktestConfig& c) {
    j = {{"confidence_threshold", c.confidence_threshold},
         {"hold_bars", c.hold_bars},
         {"stop_loss", c.stop_loss},
         {"fee_rate", c.fee_rate},
         {"initial_equity", c.initial_equity},
         {"periods_per_year", c.periods_per_year},
         {"risk_free", c.risk_free}};
}

inline void from_json(const nlohmann::json& j, BacktestConfig& c) {
    c.confidence_threshold = j.value("confidence_threshold", c.confidence_threshold);
    c.hold_bars = j.value("hold_bars", c.hold_bars);
    c.stop_loss = j.value("stop_loss", c.stop_loss);
    c.fee_rate = j.value("fee_rate", c.fee_rate);
    c.initial_equity = j.value("initial_equity", c.initial_equity);
    c.periods_per_year = j.value("periods_per_year", c.periods_per_year);
    c.risk_free = j.value("risk_free", c.risk_free);
}

struct Signal {
    std::size_t index = 0; // bar whose close produced the signal
    PredictedSignal prediction;
};

struct Trade {
    Side side = Side::Long;
    std::size_t entry_index = 0;
    std::size_t exit_index = 0;
    double entry_price = 0.0;
    double exit_price = 0.0;
    ExitReason exit_reason = ExitReason::HoldExpiry;
    double return_fraction = 0.0;

    bool direction_correct() const {
        return side == Side::Long ? exit_price > entry_price : exit_price < entry_price;
    }
};

struct BacktestReport {
    std::vector<Trade> trades;
    std::vector<double> equity;
    double final_net_value = 1.0;
    std::optional<double> traded_accuracy;
    double max_drawdown = 0.0;
    std::optional<double> sharpe_ratio;
    std::size_t trade_count = 0;
};

/// max over t of (peak_t - equity_t) / peak_t.
inline double max_drawdown(std::span<const double> equity) {
    if (equity.empty()) throw Error(ErrorCode::EmptyCurve, "drawdown of an empty curve");
    double peak = equity.front(), worst = 0.0;
    for (double e : equity) {
        peak = std::max(peak, e);
        worst = std::max(worst, 1.0 - e / peak);
    }
    return worst;
}

/// (mean - risk_free / periods) / sample_std * sqrt(periods).
inline double sharpe_ratio(std::span<const double> returns, double periods_per_year, double risk_free = 0.0) {
    if (returns.size() < 2) throw Error(ErrorCode::TooFewReturns, "sharpe ratio needs at least two returns");
    if (!(periods_per_year > 0.0)) throw Error(ErrorCode::InvalidConfig, "periods_per_year must be positive");
    double mu = 0.0;
    for (double r : returns) mu += r;
    mu /= static_cast<double>(returns.size());
    double ss = 0.0;
    for (double r : returns) ss += (r - mu) * (r - mu);
    const double sd = std::sqrt(ss / static_cast<double>(returns.size() - 1));
    if (!(sd > 0.0)) throw Error(ErrorCode::ZeroVariance, "returns have zero variance");
    return (mu - risk_free / periods_per_year) / sd * std::sqrt(periods_per_year);
}

/// Share of trades whose raw price move agreed with their side.
inline double traded_accuracy(std::span<const Trade> trades) {
    if (trades.empty()) throw Error(ErrorCode::NoTrades, "no trades to score");
    std::size_t hits = 0;
    for (const auto& t : trades) hits += t.direction_correct() ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(trades.size());
}

inline BacktestReport run_backtest(const KlineSeries& series, std::vector<Signal> signals, const BacktestConfig& config) {
    config.validate();
    if (series.empty()) throw Error(ErrorCode::EmptySeries, "backtest on an empty series");
    const auto& bars = series.bars;
    const std::size_t n = bars.size();
    for (const auto& s : signals)
        if (s.index >= n)
            throw Error(ErrorCode::SignalIndexOutOfRange,
                        "signal at bar " + std::to_string(s.index) + " of " + std::to_string(n));
    std::stable_sort(signals.begin(), signals.end(), [](const Signal& a, const Signal& b) { return a.index < b.index; });

    BacktestReport report;
    report.equity.assign(n, config.initial_equity);
    double equity = config.initial_equity;
    const double keep = 1.0 - config.fee_rate;
    std::size_t busy_until = 0; // next entry must be strictly after this bar
    bool traded = false;
    std::size_t filled_to = 0;  // equity[0, filled_to) already written

    for (const auto& sig : signals) {
        const std::size_t entry = sig.index + 1;
        if (entry + 1 >= n) continue;
        if (traded && entry <= busy_until) continue;
        if (sig.prediction.confidence < config.confidence_threshold) continue;

        for (std::size_t t = filled_to; t < entry; ++t) report.equity[t] = equity;

        Trade trade;
        trade.side = sig.prediction.p_up >= 0.5 ? Side::Long : Side::Short;
        trade.entry_index = entry;
        trade.entry_price = bars[entry].open;
        const bool is_long = trade.side == Side::Long;
        const double stop = trade.entry_price * (is_long ? 1.0 - config.stop_loss : 1.0 + config.stop_loss);
        auto gross = [&](double price) { return is_long ? price / trade.entry_price : 2.0 - price / trade.entry_price; };

        bool closed = false;
        for (std::size_t t = entry; !closed; ++t) {
            if (t > entry) {
                const bool stopped = is_long ? bars[t].low <= stop : bars[t].high >= stop;
                if (stopped) {
                    trade.exit_price = stop;
                    trade.exit_reason = ExitReason::StopLoss;
                    trade.exit_index = t;
                    closed = true;
                } else if (t == entry + config.hold_bars) {
                    trade.exit_price = bars[t].open;
                    trade.exit_reason = ExitReason::HoldExpiry;
                    trade.exit_index = t;
                    closed = true;
                } else if (t == n - 1) {
                    trade.exit_price = bars[t].close;
                    trade.exit_reason = ExitReason::EndOfData;
                    trade.exit_index = t;
                    closed = true;
                }
            }
            if (!closed) report.equity[t] = equity * keep * gross(bars[t].close);
        }
        trade.return_fraction = keep * keep * gross(trade.exit_price) - 1.0;
        equity *= 1.0 + trade.return_fraction;
        report.equity[trade.exit_index] = equity;
        filled_to = trade.exit_index + 1;
        busy_until = trade.exit_index;
        traded = true;
        report.trades.push_back(trade);
    }
    for (std::size_t t = filled_to; t < n; ++t) report.equity[t] = equity;

    report.final_net_value = equity;
    report.trade_count = report.trades.size();
    report.max_drawdown = max_drawdown(report.equity);
    if (!report.trades.empty()) report.traded_accuracy = traded_accuracy(report.trades);

    if (report.trades.size() >= 2) {
        std::vector<double> returns;
        for (const auto& t : report.trades) returns.push_back(t.return_fraction);
        double periods = config.periods_per_year;
        if (periods == 0.0) {
            const double span_ms =
                static_cast<double>(bars.back().open_time - bars.front().open_time + series.interval_ms());
            periods = static_cast<double>(report.trades.size()) * (365.25 * 86400000.0) / span_ms;
        }
        try {
            report.sharpe_ratio = sharpe_ratio(returns, periods, config.risk_free);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::ZeroVariance) throw;
        }
    }
    return report;
}

inline nlohmann::json to_json(const Trade& t) {
    return {{"side", to_string(t.side)},
            {"entry_index", t.entry_index},
            {"exit_index", t.exit_index},
            {"entry_price", t.entry_price},
            {"exit_price", t.exit_price},
            {"exit_reason", to_string(t.exit_reason)},
            {"return_fraction", t.return_fraction}};
}

} // namespace fluxtrader
