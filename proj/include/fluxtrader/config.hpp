#pragma once

// Run configuration as JSON. Omitted keys take the defaults below; unknown
// keys are rejected so typos fail loudly.

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "fluxtrader/autoencoder.hpp"
#include "fluxtrader/backtest.hpp"
#include "fluxtrader/classifier.hpp"
#include "fluxtrader/cnn.hpp"
#include "fluxtrader/gan.hpp"
#include "fluxtrader/market_data.hpp"

namespace fluxtrader {

enum class DataSource { Csv, Endpoint };
enum class SignalSource { Events, Bars };

struct DataConfig {
    DataSource source = DataSource::Csv;
    std::string csv_path = "data/sample_5m.csv";
    std::string endpoint = "https://fapi.binance.com/fapi/v1/klines";
    std::string symbol = "BTCUSDT";
    std::string interval = "5m";
    std::string start = "2019-10-01";
    std::string trainval_end = "2024-01-01";
    std::string end = "2024-11-01";
    GapPolicy gaps = GapPolicy::Reject;
};

struct EventConfig {
    double threshold = 0.02;
    std::size_t horizon = 10;
    std::size_t window = kDefaultWindow;
};

struct SweepConfig {
    std::size_t max_points = 64;
};

struct PipelineConfig {
    std::optional<std::uint64_t> seed;
    DataConfig data;
    EventConfig events;
    NormalizationScheme normalization = NormalizationScheme::ZScore;
    double validation_fraction = 0.2;
    DaeConfig dae;
    CnnConfig cnn;
    GanConfig gan;
    ClassifierConfig classifier;
    BacktestConfig backtest;
    SignalSource signal_source = SignalSource::Events;
    std::string output_dir = "runs/default";
    SweepConfig sweep;

    /// Directory used to resolve relative csv paths (the config file's directory).
    std::filesystem::path base_dir;

    TimestampMs start_ms() const { return parse_utc(data.start); }
    TimestampMs trainval_end_ms() const { return parse_utc(data.trainval_end); }
    TimestampMs end_ms() const { return parse_utc(data.end); }

    std::filesystem::path csv_file() const {
        const std::filesystem::path p(data.csv_path);
        return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    }

    void validate() const {
        if (!seed) throw Error(ErrorCode::InvalidConfig, "config must set \"seed\" (unseeded runs are not allowed)");
        if (!(start_ms() < trainval_end_ms() && trainval_end_ms() < end_ms()))
            throw Error(ErrorCode::InvalidConfig, "date ranges must satisfy start < trainval_end < end");
        if (!(events.threshold > 0.0)) throw Error(ErrorCode::InvalidThreshold, "events.threshold must be positive");
        if (events.horizon < 1 || events.window < 1)
            throw Error(ErrorCode::InvalidConfig, "events.horizon and events.window must be at least 1");
        if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
            throw Error(ErrorCode::InvalidConfig, "validation_fraction must lie in [0, 1)");
        if (data.source == DataSource::Csv && data.csv_path.empty())
            throw Error(ErrorCode::InvalidConfig, "data.csv_path is empty");
        if (dae.input_width != events.window * kKlineChannels)
            throw Error(ErrorCode::InvalidConfig, "dae.input_width must equal events.window * 5");
        if (cnn.input_length != events.window || cnn.input_channels != kKlineChannels)
            throw Error(ErrorCode::InvalidConfig, "cnn input shape must be events.window x 5");
        if (sweep.max_points == 0) throw Error(ErrorCode::InvalidConfig, "sweep.max_points must be positive");
        interval_seconds(data.interval);
        dae.validate();
        cnn.validate();
        gan.validate();
        classifier.validate();
        backtest.validate();
    }
};

namespace detail {

/// Splits a 64-bit seed into independent component seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, where + " must be an object");
    for (const auto& [key, _] : j.items())
        if (!allowed.contains(key)) throw Error(ErrorCode::InvalidConfig, "unknown key '" + key + "' in " + where);
}

} // namespace detail

/// Component seeds actually used by a run: derived from the global seed and
/// the component's own seed field.
inline PipelineConfig with_derived_seeds(PipelineConfig cfg) {
    const auto g = cfg.seed.value();
    cfg.dae.seed = detail::mix_seed(g, cfg.dae.seed);
    cfg.cnn.seed = detail::mix_seed(g, cfg.cnn.seed);
    cfg.gan.seed = detail::mix_seed(g, cfg.gan.seed);
    cfg.classifier.seed = detail::mix_seed(g, cfg.classifier.seed);
    return cfg;
}

inline void to_json(nlohmann::json& j, const DataConfig& d) {
    j = {{"source", d.source == DataSource::Csv ? "csv" : "endpoint"},
         {"csv_path", d.csv_path},
         {"endpoint", d.endpoint},
         {"symbol", d.symbol},
         {"interval", d.interval},
         {"start", d.start},
         {"trainval_end", d.trainval_end},
         {"end", d.end},
         {"gaps", d.gaps == GapPolicy::Reject ? "reject" : "forward_fill"}};
}

inline void from_json(const nlohmann::json& j, DataConfig& d) {
    detail::reject_unknown(j, {"source", "csv_path", "endpoint", "symbol", "interval", "start", "trainval_end", "end", "gaps"},
                           "data");
    const auto source = j.value("source", std::string("csv"));
    if (source != "csv" && source != "endpoint") throw Error(ErrorCode::InvalidConfig, "data.source must be csv or endpoint");
    d.source = source == "csv" ? DataSource::Csv : DataSource::Endpoint;
    d.csv_path = j.value("csv_path", d.csv_path);
    d.endpoint = j.value("endpoint", d.endpoint);
    d.symbol = j.value("symbol", d.symbol);
    d.interval = j.value("interval", d.interval);
    d.start = j.value("start", d.start);
    d.trainval_end = j.value("trainval_end", d.trainval_end);
    d.end = j.value("end", d.end);
    const auto gaps = j.value("gaps", std::string("reject"));
    if (gaps != "reject" && gaps != "forward_fill")
        throw Error(ErrorCode::InvalidConfig, "data.gaps must be reject or forward_fill");
    d.gaps = gaps == "reject" ? GapPolicy::Reject : GapPolicy::ForwardFill;
}

inline void to_json(nlohmann::json& j, const EventConfig& e) {
    j = {{"threshold", e.threshold}, {"horizon", e.horizon}, {"window", e.window}};
}

inline void from_json(const nlohmann::json& j, EventConfig& e) {
    detail::reject_unknown(j, {"threshold", "horizon", "window"}, "events");
    e.threshold = j.value("threshold", e.threshold);
    e.horizon = j.value("horizon", e.horizon);
    e.window = j.value("window", e.window);
}

inline void to_json(nlohmann::json& j, const PipelineConfig& c) {
    j = {{"data", c.data},
         {"events", c.events},
         {"normalization", c.normalization == NormalizationScheme::ZScore ? "zscore" : "minmax"},
         {"validation_fraction", c.validation_fraction},
         {"dae", c.dae},
         {"cnn", c.cnn},
         {"gan", c.gan},
         {"classifier", c.classifier},
         {"backtest", c.backtest},
         {"signal_source", c.signal_source == SignalSource::Events ? "events" : "bars"},
         {"output_dir", c.output_dir},
         {"sweep", {{"max_points", c.sweep.max_points}}}};
    j["seed"] = c.seed ? nlohmann::json(*c.seed) : nlohmann::json(nullptr);
}

inline PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    detail::reject_unknown(j,
                           {"seed", "data", "events", "normalization", "validation_fraction", "dae", "cnn", "gan",
                            "classifier", "backtest", "signal_source", "output_dir", "sweep"},
                           "config");
    PipelineConfig c;
    c.base_dir = base_dir;
    try {
        if (j.contains("seed") && !j["seed"].is_null()) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("data")) c.data = j["data"].get<DataConfig>();
        if (j.contains("events")) c.events = j["events"].get<EventConfig>();
        const auto norm = j.value("normalization", std::string("zscore"));
        if (norm != "zscore" && norm != "minmax")
            throw Error(ErrorCode::InvalidConfig, "normalization must be zscore or minmax");
        c.normalization = norm == "zscore" ? NormalizationScheme::ZScore : NormalizationScheme::MinMax;
        c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
        // the autoencoder and cnn follow the event window unless set explicitly
        c.dae.input_width = c.events.window * kKlineChannels;
        c.cnn.input_length = c.events.window;
        if (j.contains("dae")) from_json(j["dae"], c.dae);
        if (j.contains("cnn")) from_json(j["cnn"], c.cnn);
        if (j.contains("gan")) from_json(j["gan"], c.gan);
        if (j.contains("classifier")) from_json(j["classifier"], c.classifier);
        if (j.contains("backtest")) from_json(j["backtest"], c.backtest);
        const auto sig = j.value("signal_source", std::string("events"));
        if (sig != "events" && sig != "bars") throw Error(ErrorCode::InvalidConfig, "signal_source must be events or bars");
        c.signal_source = sig == "events" ? SignalSource::Events : SignalSource::Bars;
        c.output_dir = j.value("output_dir", c.output_dir);
        if (j.contains("sweep")) {
            detail::reject_unknown(j["sweep"], {"max_points"}, "sweep");
            c.sweep.max_points = j["sweep"].value("max_points", c.sweep.max_points);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("config type error: ") + e.what());
    }
    return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
    }
    return config_from_json(j, path.parent_path());
}

/// Stable hash of everything that influences results (output_dir excluded).
inline std::string config_fingerprint(const PipelineConfig& c) {
    auto j = nlohmann::json(c);
    j.erase("output_dir");
    return j.dump();
}

} // namespace fluxtrader
