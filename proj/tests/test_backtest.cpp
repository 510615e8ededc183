#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "fluxtrader/backtest.hpp"
#include "test_support.hpp"

using namespace fluxtrader;
using namespace fluxtrader::testing;
using Catch::Approx;

namespace {

KlineSeries flat_series(std::size_t n, double price) {
    return series_from_closes(std::vector<double>(n, price));
}

BacktestConfig zero_fee() {
    BacktestConfig c;
    c.fee_rate = 0.0;
    return c;
}

Signal long_signal(std::size_t index, double p = 0.9) { return {index, PredictedSignal::from_probability(p)}; }

} // namespace

TEST_CASE("single long trade reaching expiry", "[backtest]") {
    auto s = flat_series(15, 100.0);
    s.bars[11].open = 105.0;
    const auto report = run_backtest(s, {long_signal(0)}, zero_fee());
    REQUIRE(report.trade_count == 1);
    const auto& t = report.trades[0];
    REQUIRE(t.entry_index == 1);
    REQUIRE(t.exit_index == 11);
    REQUIRE(t.exit_reason == ExitReason::HoldExpiry);
    REQUIRE(t.exit_price == 105.0);
    REQUIRE(report.final_net_value == Approx(1.05).epsilon(1e-12));
    REQUIRE(report.traded_accuracy == 1.0);
}

TEST_CASE("stop loss fills at the stop price", "[backtest]") {
    auto s = flat_series(15, 100.0);
    s.bars[3].low = 97.9;
    const auto report = run_backtest(s, {long_signal(0)}, zero_fee());
    REQUIRE(report.trade_count == 1);
    const auto& t = report.trades[0];
    REQUIRE(t.exit_reason == ExitReason::StopLoss);
    REQUIRE(t.exit_index == 3);
    REQUIRE(t.exit_price == Approx(98.0).epsilon(1e-12));
    REQUIRE(t.return_fraction == Approx(-0.02).epsilon(1e-12));
    REQUIRE(report.traded_accuracy == 0.0);
}

TEST_CASE("short trade and fees", "[backtest]") {
    auto s = flat_series(15, 100.0);
    s.bars[11].open = 95.0;
    BacktestConfig cfg;
    cfg.fee_rate = 0.001;
    const auto report = run_backtest(s, {long_signal(0, 0.1)}, cfg);
    REQUIRE(report.trades[0].side == Side::Short);
    REQUIRE(report.trades[0].return_fraction == Approx(0.999 * 0.999 * 1.05 - 1.0).epsilon(1e-12));
}

TEST_CASE("stop wins over expiry in the same bar", "[backtest]") {
    auto s = flat_series(15, 100.0);
    s.bars[11].low = 90.0;
    s.bars[11].open = 101.0;
    const auto report = run_backtest(s, {long_signal(0)}, zero_fee());
    REQUIRE(report.trades[0].exit_reason == ExitReason::StopLoss);
    REQUIRE(report.trades[0].exit_index == 11);
}

TEST_CASE("end of data closes at the last close", "[backtest]") {
    auto s = flat_series(6, 100.0);
    s.bars[5].close = 102.0;
    const auto report = run_backtest(s, {long_signal(0)}, zero_fee());
    REQUIRE(report.trades[0].exit_reason == ExitReason::EndOfData);
    REQUIRE(report.final_net_value == Approx(1.02).epsilon(1e-12));
}

TEST_CASE("no qualifying signals leave equity flat", "[backtest]") {
    const auto s = flat_series(30, 100.0);
    BacktestConfig cfg = zero_fee();
    cfg.confidence_threshold = 0.8;
    const auto report = run_backtest(s, {long_signal(3, 0.6), long_signal(9, 0.3)}, cfg);
    REQUIRE(report.trade_count == 0);
    REQUIRE(report.final_net_value == 1.0);
    for (double e : report.equity) REQUIRE(e == 1.0);
    REQUIRE_FALSE(report.traded_accuracy.has_value());
    REQUIRE_FALSE(report.sharpe_ratio.has_value());
    REQUIRE(run_backtest(s, {}, zero_fee()).equity == std::vector<double>(30, 1.0));
}

TEST_CASE("overlapping signals are ignored", "[backtest]") {
    const auto s = flat_series(40, 100.0);
    const auto report = run_backtest(s, {long_signal(0), long_signal(4), long_signal(12)}, zero_fee());
    REQUIRE(report.trade_count == 2);
    REQUIRE(report.trades[1].entry_index == 13);
}

TEST_CASE("backtest errors", "[backtest]") {
    REQUIRE_THROWS_AS(run_backtest(KlineSeries{}, {}, zero_fee()), Error);
    try {
        run_backtest(flat_series(5, 1.0), {long_signal(5)}, zero_fee());
        FAIL("expected throw");
    } catch (const Error& e) {
        REQUIRE(e.code() == ErrorCode::SignalIndexOutOfRange);
    }
}

TEST_CASE("max_drawdown", "[backtest][metrics]") {
    const std::vector<double> curve{1.0, 1.2, 0.9, 1.1};
    REQUIRE(max_drawdown(curve) == 0.25);
    REQUIRE(max_drawdown(std::vector<double>{1, 2, 3, 4}) == 0.0);
    REQUIRE(max_drawdown(std::vector<double>{1.7}) == 0.0);
    REQUIRE_THROWS_AS(max_drawdown(std::vector<double>{}), Error);
}

TEST_CASE("sharpe_ratio", "[backtest][metrics]") {
    REQUIRE(sharpe_ratio(std::vector<double>{0.01, -0.01, 0.01, -0.01}, 252) == Approx(0.0).margin(1e-15));
    REQUIRE(sharpe_ratio(std::vector<double>{0.01, 0.03}, 1) == Approx(1.414214).epsilon(1e-6));
    try {
        sharpe_ratio(std::vector<double>{0.02, 0.02, 0.02}, 1);
        FAIL("expected throw");
    } catch (const Error& e) {
        REQUIRE(e.code() == ErrorCode::ZeroVariance);
    }
    try {
        sharpe_ratio(std::vector<double>{0.02}, 1);
        FAIL("expected throw");
    } catch (const Error& e) {
        REQUIRE(e.code() == ErrorCode::TooFewReturns);
    }
}

TEST_CASE("traded_accuracy", "[backtest][metrics]") {
    std::vector<Trade> trades(3);
    trades[0] = {Side::Long, 1, 2, 100, 101};
    trades[1] = {Side::Short, 3, 4, 100, 99};
    trades[2] = {Side::Long, 5, 6, 100, 100}; // zero move counts as wrong
    REQUIRE(traded_accuracy(trades) == Approx(2.0 / 3.0));
    REQUIRE_THROWS_AS(traded_accuracy(std::vector<Trade>{}), Error);
}

TEST_CASE("run_backtest agrees with the brute-force simulator", "[backtest][oracle][property]") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const auto sc = oracle::random_scenario(rng);
        const auto c = to_backtest_case(sc);
        const auto got = run_backtest(c.series, c.signals, c.config);
        const auto want = oracle::simulate(sc.bars, sc.sigs, sc.tau, sc.hold, sc.stop, sc.fee, 1.0);

        REQUIRE(got.trade_count == want.trade_returns.size());
        REQUIRE(close_rel(got.final_net_value, want.net, 1e-9));
        REQUIRE(close_rel(got.max_drawdown, want.drawdown, 1e-9));
        REQUIRE(got.equity.size() == want.equity.size());
        for (std::size_t t = 0; t < got.equity.size(); ++t) REQUIRE(close_rel(got.equity[t], want.equity[t], 1e-9));

        double product = 1.0;
        for (std::size_t k = 0; k < got.trades.size(); ++k) {
            const auto& tr = got.trades[k];
            REQUIRE(close_rel(tr.return_fraction, want.trade_returns[k], 1e-9));
            REQUIRE(tr.entry_index == want.entries[k]);
            REQUIRE(tr.exit_index == want.exits[k]);
            REQUIRE((tr.side == Side::Long ? 1 : -1) == want.trade_sides[k]);
            REQUIRE(tr.exit_index > tr.entry_index);
            REQUIRE(tr.exit_index - tr.entry_index <= c.config.hold_bars);
            if (k > 0) REQUIRE(tr.entry_index > got.trades[k - 1].exit_index);
            product *= 1.0 + tr.return_fraction;
        }
        REQUIRE(close_rel(got.final_net_value, product, 1e-9));
        for (double e : got.equity) REQUIRE(e > 0.0);
    }
}
