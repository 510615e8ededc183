#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fluxtrader/error.hpp"

namespace fluxtrader {

using TimestampMs = std::int64_t;

struct Kline {
    TimestampMs open_time = 0;
    double open = 0.0;
    double high = 0.0;
    double low = 0.0;
    double close = 0.0;
    double volume = 0.0;

    friend bool operator==(const Kline&, const Kline&) = default;
};

enum class GapPolicy { Reject, ForwardFill };

struct KlineSeries {
    std::string symbol;
    std::int64_t interval_seconds = 300;
    std::vector<Kline> bars;

    std::int64_t interval_ms() const { return interval_seconds * 1000; }
    std::size_t size() const { return bars.size(); }
    bool empty() const { return bars.empty(); }

    /// Bars [first, last) as a new series.
    KlineSeries slice(std::size_t first, std::size_t last) const {
        KlineSeries out{symbol, interval_seconds, {}};
        out.bars.assign(bars.begin() + static_cast<std::ptrdiff_t>(first),
                        bars.begin() + static_cast<std::ptrdiff_t>(last));
        return out;
    }

    /// Index of the first bar with open_time >= t (size() if none).
    std::size_t lower_bound(TimestampMs t) const {
        return static_cast<std::size_t>(
            std::lower_bound(bars.begin(), bars.end(), t, [](const Kline& k, TimestampMs v) { return k.open_time < v; }) -
            bars.begin());
    }
};

enum class Direction { Up, Down };

constexpr std::string_view to_string(Direction d) { return d == Direction::Up ? "Up" : "Down"; }
constexpr double label_value(Direction d) { return d == Direction::Up ? 1.0 : 0.0; }
constexpr Direction flip(Direction d) { return d == Direction::Up ? Direction::Down : Direction::Up; }

/// Row-major dense matrix used for sample windows.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

inline constexpr std::size_t kKlineChannels = 5; // open, high, low, close, volume
inline constexpr std::size_t kDefaultWindow = 360;

struct EventSample {
    std::size_t event_index = 0;
    Matrix window; // W x 5, normalized
    Direction label = Direction::Up;
    TimestampMs event_time = 0;
};

struct Event {
    std::size_t index = 0;
    Direction label = Direction::Up;

    friend bool operator==(const Event&, const Event&) = default;
};

struct DatasetSplit {
    std::vector<EventSample> train;
    std::vector<EventSample> validation;
    std::vector<EventSample> test;
    TimestampMs validation_start = 0;
    TimestampMs test_start = 0;
};

enum class NormalizationScheme { ZScore, MinMax };

// ---------------------------------------------------------------------------
// Time helpers

/// Parses "YYYY-MM-DD" or "YYYY-MM-DDTHH:MM[:SS][Z]" as UTC milliseconds.
inline TimestampMs parse_utc(std::string_view text) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    const std::string buf(text);
    const int n = std::sscanf(buf.c_str(), "%d-%d-%d%*[T ]%d:%d:%d", &y, &mo, &d, &h, &mi, &s);
    if (n < 3 || mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 60)
        throw Error(ErrorCode::InvalidConfig, "unparseable timestamp '" + buf + "'");
    using namespace std::chrono;
    const sys_days day = year{y} / month{static_cast<unsigned>(mo)} / static_cast<unsigned>(d);
    const auto tp = day + hours{h} + minutes{mi} + seconds{s};
    return duration_cast<milliseconds>(tp.time_since_epoch()).count();
}

inline std::string format_utc(TimestampMs ms) {
    using namespace std::chrono;
    const sys_time<milliseconds> tp{milliseconds{ms}};
    const auto day = floor<days>(tp);
    const year_month_day ymd{day};
    const hh_mm_ss hms{floor<seconds>(tp - day)};
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", int(ymd.year()), unsigned(ymd.month()),
                  unsigned(ymd.day()), long(hms.hours().count()), long(hms.minutes().count()),
                  long(hms.seconds().count()));
    return buf;
}

// ---------------------------------------------------------------------------
// Validation and CSV

inline void validate_kline(const Kline& k, std::size_t line = 0) {
    auto fail = [&](const char* field) {
        throw Error(ErrorCode::InvariantViolation,
                    std::string(field) + (line ? " on line " + std::to_string(line) : std::string{}),
                    line ? std::optional<std::int64_t>(line) : std::nullopt);
    };
    for (double v : {k.open, k.high, k.low, k.close})
        if (!std::isfinite(v) || v <= 0.0) fail("price");
    if (!std::isfinite(k.volume) || k.volume < 0.0) fail("volume");
    if (k.low > std::min(k.open, k.close)) fail("low");
    if (k.high < std::max(k.open, k.close)) fail("high");
}

/// Enforces monotone, gap-free timestamps. With ForwardFill, missing bars are
/// inserted as flat bars at the previous close with zero volume.
inline void enforce_spacing(KlineSeries& series, GapPolicy policy) {
    if (series.interval_seconds <= 0) throw Error(ErrorCode::InvariantViolation, "interval_seconds");
    const auto step = series.interval_ms();
    std::vector<Kline> out;
    out.reserve(series.bars.size());
    for (const auto& k : series.bars) {
        if (!out.empty()) {
            const auto prev = out.back().open_time;
            if (k.open_time <= prev)
                throw Error(ErrorCode::NonMonotonicTime, "open_time " + std::to_string(k.open_time) +
                                                             " not after " + std::to_string(prev));
            if (k.open_time - prev != step) {
                if (policy == GapPolicy::Reject || (k.open_time - prev) % step != 0)
                    throw Error(ErrorCode::InvariantViolation,
                                "open_time gap between " + std::to_string(prev) + " and " + std::to_string(k.open_time));
                const double c = out.back().close;
                for (auto t = prev + step; t < k.open_time; t += step) out.push_back({t, c, c, c, c, 0.0});
            }
        }
        out.push_back(k);
    }
    series.bars = std::move(out);
}

struct CsvOptions {
    std::string symbol;
    std::int64_t interval_seconds = 0; // 0: infer from the first two bars, else 300
    GapPolicy gaps = GapPolicy::Reject;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, out);
    return !s.empty() && res.ec == std::errc{} && res.ptr == end;
}

} // namespace detail

/// Seconds per Binance interval identifier ("1m", "5m", "1h", "1d", ...).
inline std::int64_t interval_seconds(std::string_view id) {
    if (id.size() < 2) throw Error(ErrorCode::InvalidConfig, "bad interval '" + std::string(id) + "'");
    std::int64_t n = 0;
    if (!detail::parse_number(id.substr(0, id.size() - 1), n) || n <= 0)
        throw Error(ErrorCode::InvalidConfig, "bad interval '" + std::string(id) + "'");
    switch (id.back()) {
    case 'm': return n * 60;
    case 'h': return n * 3600;
    case 'd': return n * 86400;
    case 'w': return n * 7 * 86400;
    default: throw Error(ErrorCode::InvalidConfig, "bad interval '" + std::string(id) + "'");
    }
}

/// One bar per line: open_time,open,high,low,close,volume. An optional header
/// line is skipped. Blank lines are ignored.
inline KlineSeries parse_kline_csv(std::istream& in, const CsvOptions& options = {}) {
    KlineSeries series{options.symbol, options.interval_seconds > 0 ? options.interval_seconds : 300, {}};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = detail::trim(line);
        if (text.empty()) continue;
        std::vector<std::string_view> fields;
        std::size_t start = 0;
        while (true) {
            const auto comma = text.find(',', start);
            fields.push_back(text.substr(start, comma == std::string_view::npos ? comma : comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        Kline k;
        const bool ok = fields.size() == 6 && detail::parse_number(fields[0], k.open_time) &&
                        detail::parse_number(fields[1], k.open) && detail::parse_number(fields[2], k.high) &&
                        detail::parse_number(fields[3], k.low) && detail::parse_number(fields[4], k.close) &&
                        detail::parse_number(fields[5], k.volume);
        if (!ok) {
            const bool header = series.bars.empty() && fields.size() == 6 && !fields[0].empty() &&
                                !(fields[0][0] >= '0' && fields[0][0] <= '9');
            if (header) continue;
            throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no), line_no);
        }
        validate_kline(k, line_no);
        if (!series.bars.empty() && k.open_time <= series.bars.back().open_time)
            throw Error(ErrorCode::NonMonotonicTime, "line " + std::to_string(line_no), line_no);
        series.bars.push_back(k);
    }
    if (options.interval_seconds <= 0 && series.bars.size() >= 2) {
        const auto diff = series.bars[1].open_time - series.bars[0].open_time;
        if (diff % 1000 != 0) throw Error(ErrorCode::InvariantViolation, "open_time spacing is not whole seconds");
        series.interval_seconds = diff / 1000;
    }
    enforce_spacing(series, options.gaps);
    return series;
}

inline KlineSeries parse_kline_csv(std::string_view raw, const CsvOptions& options = {}) {
    std::istringstream in{std::string(raw)};
    return parse_kline_csv(in, options);
}

inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string serialize_kline_csv(const KlineSeries& series, bool header = true) {
    std::string out;
    if (header) out += "open_time,open,high,low,close,volume\n";
    for (const auto& k : series.bars) {
        out += std::to_string(k.open_time);
        for (double v : {k.open, k.high, k.low, k.close, k.volume}) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Events

/// First-breach labelling on closes. Index i is an Up event when the forward
/// close return reaches +threshold within `horizon` bars before reaching
/// -threshold (Down symmetric). If the breaching bar's opposite extreme also
/// crossed the opposite barrier, intrabar order is unknown and i is dropped.
/// An accepted event suppresses candidates i' < i + horizon.
inline std::vector<Event> detect_events(const KlineSeries& series, double threshold, std::size_t horizon) {
    if (series.empty()) throw Error(ErrorCode::EmptySeries, "detect_events on an empty series");
    if (!(threshold > 0.0) || !std::isfinite(threshold))
        throw Error(ErrorCode::InvalidThreshold, "threshold must be positive");
    if (horizon < 1) throw Error(ErrorCode::InvalidThreshold, "horizon must be at least one bar");

    const auto& bars = series.bars;
    std::vector<Event> events;
    std::size_t next_allowed = 0;
    for (std::size_t i = next_allowed; i + 1 < bars.size(); ++i) {
        if (i < next_allowed) continue;
        const double base = bars[i].close;
        const double up = base * (1.0 + threshold);
        const double down = base * (1.0 - threshold);
        for (std::size_t h = 1; h <= horizon && i + h < bars.size(); ++h) {
            const auto& bar = bars[i + h];
            const double move = (bar.close - base) / base;
            if (move >= threshold) {
                if (bar.low > down) {
                    events.push_back({i, Direction::Up});
                    next_allowed = i + horizon;
                }
                break;
            }
            if (move <= -threshold) {
                if (bar.high < up) {
                    events.push_back({i, Direction::Down});
                    next_allowed = i + horizon;
                }
                break;
            }
        }
    }
    return events;
}

// ---------------------------------------------------------------------------
// Windows

/// Per-column normalisation. zscore uses the population deviation and maps
/// columns with deviation < 1e-12 to zero; minmax maps constant columns to 0.5.
inline Matrix normalize_window(Matrix window, NormalizationScheme scheme = NormalizationScheme::ZScore) {
    for (double v : window.values)
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "window contains a non-finite value");
    const std::size_t rows = window.rows, cols = window.cols;
    if (rows == 0) return window;
    for (std::size_t c = 0; c < cols; ++c) {
        if (scheme == NormalizationScheme::ZScore) {
            double mu = 0.0;
            for (std::size_t r = 0; r < rows; ++r) mu += window(r, c);
            mu /= static_cast<double>(rows);
            double var = 0.0;
            for (std::size_t r = 0; r < rows; ++r) var += (window(r, c) - mu) * (window(r, c) - mu);
            const double sd = std::sqrt(var / static_cast<double>(rows));
            for (std::size_t r = 0; r < rows; ++r) window(r, c) = sd < 1e-12 ? 0.0 : (window(r, c) - mu) / sd;
        } else {
            double lo = window(0, c), hi = window(0, c);
            for (std::size_t r = 1; r < rows; ++r) {
                lo = std::min(lo, window(r, c));
                hi = std::max(hi, window(r, c));
            }
            for (std::size_t r = 0; r < rows; ++r) window(r, c) = hi > lo ? (window(r, c) - lo) / (hi - lo) : 0.5;
        }
    }
    return window;
}

/// Raw W x 5 window of bars [end - width, end); volume is log1p-transformed.
inline Matrix raw_window(const KlineSeries& series, std::size_t end, std::size_t width) {
    Matrix m(width, kKlineChannels);
    for (std::size_t r = 0; r < width; ++r) {
        const auto& k = series.bars[end - width + r];
        m(r, 0) = k.open;
        m(r, 1) = k.high;
        m(r, 2) = k.low;
        m(r, 3) = k.close;
        m(r, 4) = std::log1p(k.volume);
    }
    return m;
}

inline std::vector<EventSample> extract_samples(const KlineSeries& series, const std::vector<Event>& events,
                                                std::size_t window = kDefaultWindow,
                                                NormalizationScheme scheme = NormalizationScheme::ZScore) {
    if (window < 1) throw Error(ErrorCode::InvalidConfig, "window must be at least one bar");
    std::vector<EventSample> out;
    for (const auto& e : events) {
        if (e.index < window || e.index >= series.size()) continue;
        out.push_back({e.index, normalize_window(raw_window(series, e.index, window), scheme), e.label,
                       series.bars[e.index].open_time});
    }
    return out;
}

/// Chronological split. Samples before `trainval_end` go to train and
/// validation (validation takes the last `validation_fraction` of them); the
/// rest, boundary included, go to test.
inline DatasetSplit split_dataset(const std::vector<EventSample>& samples, TimestampMs trainval_end,
                                  double validation_fraction) {
    if (samples.empty()) throw Error(ErrorCode::EmptySampleList, "nothing to split");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
        throw Error(ErrorCode::InvalidConfig, "validation_fraction must lie in [0, 1)");
    for (std::size_t i = 1; i < samples.size(); ++i)
        if (samples[i].event_time < samples[i - 1].event_time)
            throw Error(ErrorCode::InvariantViolation, "samples are not sorted by event_time");

    DatasetSplit split;
    split.test_start = trainval_end;
    std::size_t trainval = 0;
    while (trainval < samples.size() && samples[trainval].event_time < trainval_end) ++trainval;
    const auto n_val = static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(trainval)));
    const std::size_t n_train = trainval - n_val;
    split.train.assign(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.validation.assign(samples.begin() + static_cast<std::ptrdiff_t>(n_train),
                            samples.begin() + static_cast<std::ptrdiff_t>(trainval));
    split.test.assign(samples.begin() + static_cast<std::ptrdiff_t>(trainval), samples.end());
    split.validation_start = split.validation.empty() ? trainval_end : split.validation.front().event_time;
    return split;
}

} // namespace fluxtrader
