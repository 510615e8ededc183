#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "fluxtrader/market_data.hpp"
#include "test_support.hpp"

using namespace fluxtrader;
using namespace fluxtrader::testing;
using Catch::Approx;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::Io;
}

/// Independent re-scan: the first bar within the horizon whose close crosses
/// either barrier must cross the labelled one.
bool confirms(const KlineSeries& s, const Event& e, double theta, std::size_t horizon) {
    const double base = s.bars[e.index].close;
    for (std::size_t h = 1; h <= horizon && e.index + h < s.size(); ++h) {
        const double r = s.bars[e.index + h].close / base - 1.0;
        if (r >= theta - 1e-15 || r <= -theta + 1e-15) return (r > 0) == (e.label == Direction::Up);
    }
    return false;
}

KlineSeries random_walk(std::size_t n, std::mt19937_64& rng, double vol) {
    std::normal_distribution<double> step(0.0, vol);
    std::vector<double> closes{100.0};
    for (std::size_t i = 1; i < n; ++i) closes.push_back(closes.back() * std::exp(step(rng)));
    return series_from_closes(closes);
}

} // namespace

TEST_CASE("parse_kline_csv", "[market_data][csv]") {
    SECTION("single line maps fields directly") {
        const auto s = parse_kline_csv("1569888000000,8300.0,8350.0,8290.0,8320.5,120.4");
        REQUIRE(s.size() == 1);
        REQUIRE(s.bars[0] == Kline{1569888000000, 8300.0, 8350.0, 8290.0, 8320.5, 120.4});
    }
    SECTION("empty input") { REQUIRE(parse_kline_csv("").empty()); }
    SECTION("header and CRLF are tolerated, interval inferred") {
        const auto s = parse_kline_csv("open_time,open,high,low,close,volume\r\n"
                                       "1569888000000,1,2,0.5,1.5,3\r\n"
                                       "1569888600000,1.5,2,1,1.2,0\r\n");
        REQUIRE(s.size() == 2);
        REQUIRE(s.interval_seconds == 600);
    }
    SECTION("equal open_time") {
        REQUIRE(code_of([] {
                    parse_kline_csv("1000,1,1,1,1,1\n1000,1,1,1,1,1\n");
                }) == ErrorCode::NonMonotonicTime);
    }
    SECTION("malformed line reports its number") {
        try {
            parse_kline_csv("0,1,1,1,1,1\n300000,1,x,1,1,1\n");
            FAIL("expected throw");
        } catch (const Error& e) {
            REQUIRE(e.code() == ErrorCode::MalformedLine);
            REQUIRE(e.detail() == 2);
        }
    }
    SECTION("invariant violations") {
        REQUIRE(code_of([] { parse_kline_csv("0,1,1.5,1.2,1,1\n"); }) == ErrorCode::InvariantViolation);
        REQUIRE(code_of([] { parse_kline_csv("0,1,1,1,1,-1\n"); }) == ErrorCode::InvariantViolation);
        REQUIRE(code_of([] { parse_kline_csv("0,0,1,0,1,1\n"); }) == ErrorCode::InvariantViolation);
    }
    SECTION("gaps rejected by default, forward-filled on request") {
        const std::string raw = "0,1,1,1,1,1\n300000,2,2,2,2,1\n900000,3,3,3,3,1\n";
        REQUIRE(code_of([&] { parse_kline_csv(raw, {"X", 300, GapPolicy::Reject}); }) == ErrorCode::InvariantViolation);
        const auto filled = parse_kline_csv(raw, {"X", 300, GapPolicy::ForwardFill});
        REQUIRE(filled.size() == 4);
        REQUIRE(filled.bars[2] == Kline{600000, 2, 2, 2, 2, 0});
    }
}

TEST_CASE("kline csv round trip", "[market_data][csv][property]") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        KlineSeries s{"RT", 300, {}};
        const auto n = static_cast<std::size_t>(u(rng) * 40);
        for (std::size_t i = 0; i < n; ++i) {
            const double o = 10.0 + 1000.0 * u(rng), c = 10.0 + 1000.0 * u(rng);
            s.bars.push_back({static_cast<TimestampMs>(i) * 300000 + 1600000000000, o, std::max(o, c) + u(rng),
                              std::min(o, c) * (1.0 - 0.01 * u(rng)), c, 1e3 * u(rng)});
        }
        const auto back = parse_kline_csv(serialize_kline_csv(s), {"RT", 300, GapPolicy::Reject});
        REQUIRE(back.bars == s.bars);
    }
}

TEST_CASE("detect_events", "[market_data][events]") {
    SECTION("up move") {
        const auto ev = detect_events(series_from_closes({100, 100.1, 103.5, 103.4}), 0.02, 3);
        REQUIRE(ev == std::vector<Event>{{0, Direction::Up}});
    }
    SECTION("down move") {
        const auto ev = detect_events(series_from_closes({100, 97.5, 98}), 0.02, 2);
        REQUIRE(ev == std::vector<Event>{{0, Direction::Down}});
    }
    SECTION("constant series") {
        REQUIRE(detect_events(series_from_closes(std::vector<double>(50, 42.0)), 0.01, 10).empty());
    }
    SECTION("same-bar double breach is discarded") {
        auto s = series_from_closes({100, 100, 103});
        s.bars[2].low = 97.0;
        const auto ev = detect_events(s, 0.02, 2);
        // index 0 is ambiguous; index 1 sees the same bar
        REQUIRE(ev.empty());
    }
    SECTION("errors") {
        REQUIRE(code_of([] { detect_events(KlineSeries{}, 0.02, 10); }) == ErrorCode::EmptySeries);
        REQUIRE(code_of([] { detect_events(series_from_closes({1, 2}), 0.0, 10); }) == ErrorCode::InvalidThreshold);
    }
    SECTION("brute-force agreement on random walks") {
        std::mt19937_64 rng(22);
        for (int trial = 0; trial < 30; ++trial) {
            const auto s = random_walk(400, rng, 0.01);
            const double theta = 0.02;
            const std::size_t horizon = 1 + trial % 12;
            const auto ev = detect_events(s, theta, horizon);
            for (std::size_t k = 0; k < ev.size(); ++k) {
                REQUIRE(confirms(s, ev[k], theta, horizon));
                if (k > 0) REQUIRE(ev[k].index - ev[k - 1].index >= horizon);
            }
            // every skipped index before the next event either had no breach or was suppressed
            std::size_t next_allowed = 0, k = 0;
            for (std::size_t i = 0; i + 1 < s.size(); ++i) {
                if (k < ev.size() && ev[k].index == i) {
                    next_allowed = i + horizon;
                    ++k;
                    continue;
                }
                if (i < next_allowed) continue;
                const double base = s.bars[i].close;
                for (std::size_t h = 1; h <= horizon && i + h < s.size(); ++h) {
                    const double r = (s.bars[i + h].close - base) / base;
                    REQUIRE_FALSE((r >= theta || r <= -theta));
                }
            }
        }
    }
}

TEST_CASE("normalize_window", "[market_data][normalize]") {
    SECTION("zscore hand values") {
        Matrix m(3, 1);
        m.values = {1, 2, 3};
        const auto z = normalize_window(m);
        REQUIRE(z.values[0] == Approx(-1.224745).margin(1e-6));
        REQUIRE(z.values[1] == Approx(0.0).margin(1e-12));
        REQUIRE(z.values[2] == Approx(1.224745).margin(1e-6));
    }
    SECTION("constant column") {
        Matrix m(3, 1, 5.0);
        REQUIRE(normalize_window(m).values == std::vector<double>{0, 0, 0});
        REQUIRE(normalize_window(m, NormalizationScheme::MinMax).values == std::vector<double>{0.5, 0.5, 0.5});
    }
    SECTION("minmax endpoints") {
        Matrix m(2, 1);
        m.values = {2, 4};
        REQUIRE(normalize_window(m, NormalizationScheme::MinMax).values == std::vector<double>{0, 1});
    }
    SECTION("non-finite input") {
        Matrix m(2, 1);
        m.values = {1, std::nan("")};
        REQUIRE(code_of([&] { normalize_window(m); }) == ErrorCode::NonFiniteInput);
    }
    SECTION("zscore moments on random windows") {
        std::mt19937_64 rng(23);
        for (int trial = 0; trial < 50; ++trial) {
            Matrix m(37, 5);
            m.values = random_values(m.values.size(), rng, -50.0, 500.0);
            for (std::size_t r = 0; r < m.rows; ++r) m(r, 2) = 7.0; // one constant column
            const auto z = normalize_window(m);
            for (std::size_t c = 0; c < m.cols; ++c) {
                double mu = 0.0, var = 0.0;
                for (std::size_t r = 0; r < m.rows; ++r) mu += z(r, c);
                mu /= static_cast<double>(m.rows);
                for (std::size_t r = 0; r < m.rows; ++r) var += (z(r, c) - mu) * (z(r, c) - mu);
                const double sd = std::sqrt(var / static_cast<double>(m.rows));
                REQUIRE(std::abs(mu) < 1e-9);
                REQUIRE((sd == 0.0 || std::abs(sd - 1.0) <= 1e-6));
            }
        }
    }
}

TEST_CASE("extract_samples", "[market_data][samples]") {
    std::mt19937_64 rng(24);
    const auto s = random_walk(800, rng, 0.002);
    SECTION("window covers the preceding bars") {
        const auto samples = extract_samples(s, {{400, Direction::Up}}, 360);
        REQUIRE(samples.size() == 1);
        REQUIRE(samples[0].window.rows == 360);
        REQUIRE(samples[0].window.cols == 5);
        REQUIRE(samples[0].event_time == s.bars[400].open_time);
        const auto expected = normalize_window(raw_window(s, 400, 360));
        REQUIRE(samples[0].window == expected);
        REQUIRE(raw_window(s, 400, 360)(0, 3) == s.bars[40].close);
        REQUIRE(raw_window(s, 400, 360)(359, 3) == s.bars[399].close);
    }
    SECTION("insufficient lookback is skipped") {
        REQUIRE(extract_samples(s, {{100, Direction::Up}}, 360).empty());
    }
    SECTION("labels preserved in order") {
        const auto samples =
            extract_samples(s, {{360, Direction::Up}, {500, Direction::Down}, {700, Direction::Up}}, 360);
        REQUIRE(samples.size() == 3);
        REQUIRE(samples[1].label == Direction::Down);
        REQUIRE(samples[2].event_index == 700);
        for (const auto& x : samples)
            for (double v : x.window.values) REQUIRE(std::isfinite(v));
    }
}

TEST_CASE("split_dataset", "[market_data][split]") {
    const auto trainval_end = parse_utc("2024-01-01");
    std::vector<EventSample> samples;
    std::size_t idx = 400;
    for (const auto* date : {"2023-02-01", "2023-05-01", "2023-08-01", "2023-11-01", "2023-12-31T23:59:59Z",
                             "2024-01-01", "2024-03-01"}) {
        EventSample e;
        e.event_index = idx++;
        e.event_time = parse_utc(date);
        samples.push_back(e);
    }
    SECTION("chronological boundary") {
        const auto split = split_dataset(samples, trainval_end, 0.4);
        REQUIRE(split.train.size() == 3);
        REQUIRE(split.validation.size() == 2);
        REQUIRE(split.test.size() == 2);
        REQUIRE(split.test.front().event_time == trainval_end);
        for (const auto& e : split.train) REQUIRE(e.event_time < split.validation_start);
        for (const auto& e : split.validation) REQUIRE(e.event_time < trainval_end);
        REQUIRE(split.test_start == trainval_end);
    }
    SECTION("2023 sample trains, 2024 sample tests") {
        const auto split = split_dataset(samples, trainval_end, 0.0);
        REQUIRE(split.validation.empty());
        REQUIRE(split.train[1].event_time == parse_utc("2023-05-01"));
        REQUIRE(split.test.back().event_time == parse_utc("2024-03-01"));
    }
    SECTION("errors") {
        REQUIRE(code_of([&] { split_dataset({}, trainval_end, 0.1); }) == ErrorCode::EmptySampleList);
        REQUIRE(code_of([&] { split_dataset(samples, trainval_end, 1.0); }) == ErrorCode::InvalidConfig);
    }
}

TEST_CASE("utc helpers", "[market_data][time]") {
    REQUIRE(parse_utc("2019-10-01") == 1569888000000);
    REQUIRE(parse_utc("2019-10-01T00:10:00Z") == 1569888600000);
    REQUIRE(format_utc(1569888600000) == "2019-10-01T00:10:00Z");
    REQUIRE_THROWS_AS(parse_utc("yesterday"), Error);
}
