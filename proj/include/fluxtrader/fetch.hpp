#pragma once

// Paginated client for Binance-compatible public kline endpoints
// (GET <path>?symbol=&interval=&startTime=&endTime=&limit=, JSON array of
// [open_time, open, high, low, close, volume, close_time, ...] rows).

#include <chrono>
#include <functional>
#include <string>
#include <thread>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <json.hpp>

#include "fluxtrader/market_data.hpp"

namespace fluxtrader {

struct FetchRequest {
    std::string endpoint = "https://fapi.binance.com/fapi/v1/klines";
    std::string symbol = "BTCUSDT";
    std::string interval = "5m";
    TimestampMs start = 0;
    TimestampMs end = 0; // exclusive
    std::size_t page_limit = 1000;
    std::size_t max_retries = 5;
    std::chrono::milliseconds backoff{500};
    std::chrono::milliseconds max_backoff{30000};
    GapPolicy gaps = GapPolicy::Reject;
};

struct Endpoint {
    std::string origin; // scheme://host[:port]
    std::string path;
};

inline Endpoint split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw Error(ErrorCode::InvalidConfig, "endpoint needs a scheme: " + url);
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

namespace detail {

inline double json_number(const nlohmann::json& v) {
    if (v.is_number()) return v.get<double>();
    double out = 0.0;
    if (v.is_string() && parse_number(v.get<std::string>(), out)) return out;
    throw Error(ErrorCode::MalformedLine, "kline field is neither number nor numeric string");
}

inline Kline kline_from_row(const nlohmann::json& row) {
    if (!row.is_array() || row.size() < 6) throw Error(ErrorCode::MalformedLine, "kline row has fewer than 6 fields");
    Kline k;
    k.open_time = static_cast<TimestampMs>(json_number(row[0]));
    k.open = json_number(row[1]);
    k.high = json_number(row[2]);
    k.low = json_number(row[3]);
    k.close = json_number(row[4]);
    k.volume = json_number(row[5]);
    validate_kline(k);
    return k;
}

} // namespace detail

/// Downloads [start, end) page by page. Transient failures (no response,
/// 429, 418, 5xx) are retried with exponential backoff.
inline KlineSeries fetch_klines(const FetchRequest& req) {
    if (req.page_limit == 0 || req.page_limit > 1000)
        throw Error(ErrorCode::InvalidConfig, "page_limit must lie in [1, 1000]");
    const auto step = interval_seconds(req.interval) * 1000;
    KlineSeries series{req.symbol, step / 1000, {}};
    if (req.end <= req.start) return series;

    const auto endpoint = split_url(req.endpoint);
    httplib::Client client(endpoint.origin);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(std::chrono::seconds(30));

    auto get_page = [&](TimestampMs from) {
        httplib::Params params{{"symbol", req.symbol},
                               {"interval", req.interval},
                               {"startTime", std::to_string(from)},
                               {"endTime", std::to_string(req.end - 1)},
                               {"limit", std::to_string(req.page_limit)}};
        int last_status = 0;
        for (std::size_t attempt = 0;; ++attempt) {
            auto res = client.Get(endpoint.path, params, httplib::Headers{});
            last_status = res ? res->status : 0;
            if (res && res->status == 200) return nlohmann::json::parse(res->body);
            const bool transient = !res || res->status == 429 || res->status == 418 || res->status >= 500;
            if (!transient) throw Error(ErrorCode::HttpError, "status " + std::to_string(last_status), last_status);
            if (attempt >= req.max_retries) break;
            auto delay = req.backoff * (std::int64_t{1} << std::min<std::size_t>(attempt, 20));
            std::this_thread::sleep_for(std::min(delay, req.max_backoff));
        }
        if (last_status == 429 || last_status == 418)
            throw Error(ErrorCode::RateLimited, "retry budget exhausted", last_status);
        throw Error(ErrorCode::HttpError,
                    last_status ? "status " + std::to_string(last_status) : std::string("no response"), last_status);
    };

    TimestampMs cursor = req.start;
    while (cursor < req.end) {
        const auto page = get_page(cursor);
        if (!page.is_array()) throw Error(ErrorCode::MalformedLine, "kline response is not an array");
        if (page.empty()) break;
        bool first = true;
        for (const auto& row : page) {
            const auto k = detail::kline_from_row(row);
            if (k.open_time >= req.end) break;
            if (first && !series.bars.empty() && k.open_time != series.bars.back().open_time + step)
                throw Error(ErrorCode::PaginationGap, "page starting at " + std::to_string(k.open_time) +
                                                          " does not continue " +
                                                          std::to_string(series.bars.back().open_time));
            first = false;
            series.bars.push_back(k);
        }
        if (page.size() < req.page_limit || series.bars.empty()) break;
        const auto next = series.bars.back().open_time + step;
        if (next <= cursor) break;
        cursor = next;
    }
    enforce_spacing(series, req.gaps);
    return series;
}

} // namespace fluxtrader
