#pragma once

// End-to-end orchestration:
//   ingest -> label -> dae -> denoise -> hybrid (cnn + gan + classifier) -> backtest
//
// Until the backtest stage only bars before `trainval_end` are touched; the
// ingest checksum is computed over that slice alone, so two runs that differ
// only in test-range data agree on every checksum up to the backtest.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fluxtrader/autoencoder.hpp"
#include "fluxtrader/backtest.hpp"
#include "fluxtrader/checkpoint.hpp"
#include "fluxtrader/classifier.hpp"
#include "fluxtrader/cnn.hpp"
#include "fluxtrader/config.hpp"
#include "fluxtrader/fetch.hpp"
#include "fluxtrader/gan.hpp"
#include "fluxtrader/market_data.hpp"

namespace fluxtrader {

/// Error raised inside a named pipeline stage.
class StageError : public Error {
public:
    StageError(std::string stage, const Error& cause)
        : Error(cause.code(), "stage '" + stage + "' failed: " + strip_code(cause.what()), cause.detail()),
          stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    static std::string strip_code(const std::string& what) {
        const auto colon = what.find(": ");
        return colon == std::string::npos ? what : what.substr(colon + 2);
    }
    std::string stage_;
};

struct StageRecord {
    std::string name;
    std::string checksum;
    double seconds = 0.0;
    nlohmann::json artifacts = nlohmann::json::object();
};

struct RunManifest {
    nlohmann::json config;
    std::string fingerprint;
    std::vector<StageRecord> stages;
    nlohmann::json metrics = nlohmann::json::object();
    bool complete = false;

    const StageRecord* find(const std::string& name) const {
        for (const auto& s : stages)
            if (s.name == name) return &s;
        return nullptr;
    }
};

inline nlohmann::json to_json(const RunManifest& m) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : m.stages)
        stages.push_back({{"name", s.name}, {"checksum", s.checksum}, {"seconds", s.seconds}, {"artifacts", s.artifacts}});
    return {{"format", "fluxtrader-run"}, {"version", 1},        {"config", m.config},   {"fingerprint", m.fingerprint},
            {"stages", stages},           {"metrics", m.metrics}, {"complete", m.complete}};
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
    if (j.value("format", std::string()) != "fluxtrader-run")
        throw Error(ErrorCode::IncompleteRun, "not a run manifest");
    RunManifest m;
    m.config = j.at("config");
    m.fingerprint = j.at("fingerprint").get<std::string>();
    for (const auto& s : j.at("stages"))
        m.stages.push_back({s.at("name").get<std::string>(), s.at("checksum").get<std::string>(),
                            s.at("seconds").get<double>(), s.at("artifacts")});
    m.metrics = j.value("metrics", nlohmann::json::object());
    m.complete = j.value("complete", false);
    return m;
}

inline RunManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IncompleteRun, "no manifest at " + path.string());
    try {
        return manifest_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::IncompleteRun, "unreadable manifest " + path.string() + ": " + e.what());
    }
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string checksum_samples(const std::vector<EventSample>& samples) {
    Sha256 h;
    for (const auto& s : samples) {
        h.update(static_cast<std::int64_t>(s.event_index));
        h.update(static_cast<std::int64_t>(s.event_time));
        h.update(static_cast<std::int64_t>(s.label == Direction::Up ? 1 : 0));
        h.update(std::span<const double>(s.window.values));
    }
    return h.hex();
}

inline std::string checksum_rows(const std::vector<std::vector<double>>& rows) {
    Sha256 h;
    for (const auto& r : rows) h.update(std::span<const double>(r));
    return h.hex();
}

} // namespace detail

// ---------------------------------------------------------------------------
// Hybrid model: CNN features, adversarial representation, projection, head

struct HybridModel {
    CnnModel cnn;
    GanModel gan;
    TemporalProjection projection;
    ClassifierModel classifier;

    /// Everything trained by the classification loss (the discriminator is not).
    ParameterList supervised_parameters() const {
        return concat(concat(cnn.parameters(), projection.parameters()), classifier.parameters());
    }

    Tensor temporal(const Tensor& windows) const { return temporal_features(cnn.forward(windows), gan, projection); }
    Tensor forward(const Tensor& windows) const { return classifier.forward(temporal(windows)); }
};

struct HybridHistory {
    std::vector<double> classifier_loss;
    std::vector<double> validation_accuracy;
};

struct LabelledWindows {
    std::vector<std::vector<double>> windows; // flattened W x 5, denoised
    std::vector<Direction> labels;
};

inline std::vector<PredictedSignal> predict_windows(const HybridModel& model, const std::vector<std::vector<double>>& windows,
                                                    std::size_t window_length, std::size_t chunk = 64) {
    std::vector<PredictedSignal> out;
    out.reserve(windows.size());
    NoGradGuard no_grad;
    for (std::size_t start = 0; start < windows.size(); start += chunk) {
        const std::vector<std::vector<double>> part(
            windows.begin() + static_cast<std::ptrdiff_t>(start),
            windows.begin() + static_cast<std::ptrdiff_t>(std::min(windows.size(), start + chunk)));
        const auto p = model.forward(windows_to_channels(part, window_length, kKlineChannels));
        for (double v : p.data()) out.push_back(PredictedSignal::from_probability(v));
    }
    return out;
}

inline std::vector<TemporalFeature> temporal_rows(const HybridModel& model, const std::vector<std::vector<double>>& windows,
                                                  std::size_t window_length, std::size_t chunk = 64) {
    std::vector<TemporalFeature> out;
    NoGradGuard no_grad;
    for (std::size_t start = 0; start < windows.size(); start += chunk) {
        const std::vector<std::vector<double>> part(
            windows.begin() + static_cast<std::ptrdiff_t>(start),
            windows.begin() + static_cast<std::ptrdiff_t>(std::min(windows.size(), start + chunk)));
        const auto t = model.temporal(windows_to_channels(part, window_length, kKlineChannels));
        for (std::size_t r = 0; r < part.size(); ++r) {
            TemporalFeature f;
            std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(r * kTemporalWidth), kTemporalWidth,
                        f.values.begin());
            out.push_back(f);
        }
    }
    return out;
}

inline double accuracy_of(const std::vector<PredictedSignal>& predictions, const std::vector<Direction>& labels) {
    if (predictions.empty()) throw Error(ErrorCode::EmptyTestSet, "no predictions to score");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i].direction() == labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

/// Joint training. Each epoch first refreshes the CNN features, runs
/// `gan.epochs` adversarial passes over them, then makes one supervised pass
/// updating CNN, projection and head through the frozen discriminator.
inline HybridModel train_hybrid(const LabelledWindows& train, const LabelledWindows* validation, const CnnConfig& cnn_cfg,
                                const GanConfig& gan_cfg, const ClassifierConfig& clf_cfg, HybridHistory* history = nullptr,
                                std::uint64_t projection_seed = 19) {
    if (train.windows.empty()) throw Error(ErrorCode::EmptyDataset, "no training windows");
    require_both_classes(train.labels);
    if (train.windows.size() < gan_cfg.batch_size)
        throw Error(ErrorCode::TooFewSamples, std::to_string(train.windows.size()) +
                                                  " training windows, adversarial batch needs " +
                                                  std::to_string(gan_cfg.batch_size));
    const std::size_t length = cnn_cfg.input_length;
    HybridModel model{CnnModel(cnn_cfg), {}, {}, ClassifierModel(clf_cfg)};
    const std::size_t channels = cnn_cfg.output_channels(), steps = cnn_cfg.output_length();
    GanTrainer gan(gan_cfg, channels * steps);
    model.projection = TemporalProjection(gan.model().penultimate_width(), channels, projection_seed);

    const auto x_all = windows_to_channels(train.windows, length, kKlineChannels);
    auto params = model.supervised_parameters();
    auto d_params = gan.model().discriminator_parameters();
    AdamState adam;
    adam.learning_rate = clf_cfg.learning_rate;
    std::mt19937_64 rng(clf_cfg.seed ^ 0xd1b54a32d192ed03ULL);

    for (std::size_t epoch = 0; epoch < clf_cfg.epochs; ++epoch) {
        {
            Tensor feats;
            {
                NoGradGuard no_grad;
                feats = model.cnn.forward(x_all);
            }
            const std::size_t width = channels * steps;
            std::vector<std::vector<double>> rows(train.windows.size());
            for (std::size_t r = 0; r < rows.size(); ++r)
                rows[r].assign(feats.data().begin() + static_cast<std::ptrdiff_t>(r * width),
                               feats.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * width));
            gan.train(rows, gan_cfg.epochs);
        }
        model.gan = gan.model();

        double total = 0.0;
        for (const auto& batch : make_batches(train.windows.size(), clf_cfg.batch_size, rng)) {
            std::vector<std::vector<double>> xs;
            for (auto i : batch) xs.push_back(train.windows[i]);
            zero_grads(params);
            zero_grads(d_params);
            Tensor loss;
            try {
                loss = loss_bce(model.forward(windows_to_channels(xs, length, kKlineChannels)),
                                label_batch(train.labels, batch));
            } catch (const Error& e) {
                if (e.code() == ErrorCode::NonFiniteValue) throw Error(ErrorCode::DivergedLoss, e.what());
                throw;
            }
            loss.backward();
            adam_step(params, adam);
            total += loss.item() * static_cast<double>(batch.size());
        }
        zero_grads(d_params);
        const double epoch_loss = total / static_cast<double>(train.windows.size());
        if (!std::isfinite(epoch_loss)) throw Error(ErrorCode::DivergedLoss, "classifier loss is not finite");
        model.classifier.loss_history().push_back(epoch_loss);
        if (history) {
            history->classifier_loss.push_back(epoch_loss);
            if (validation && !validation->windows.empty())
                history->validation_accuracy.push_back(
                    accuracy_of(predict_windows(model, validation->windows, length), validation->labels));
        }
    }
    model.gan = gan.model();
    return model;
}

// ---------------------------------------------------------------------------
// Run

struct RunOptions {
    std::optional<std::filesystem::path> output_dir; // overrides config.output_dir
    bool resume = false;
    std::ostream* log = nullptr;
};

struct RunResult {
    RunManifest manifest;
    std::filesystem::path output_dir;
    BacktestReport backtest;
};

namespace detail {

inline std::filesystem::path cache_path(const PipelineConfig& cfg) {
    const char* env = std::getenv("FLUXTRADER_CACHE");
    if (!env || !*env) return {};
    return std::filesystem::path(env) /
           (cfg.data.symbol + "_" + cfg.data.interval + "_" + std::to_string(cfg.start_ms()) + "_" +
            std::to_string(cfg.end_ms()) + ".csv");
}

} // namespace detail

/// Loads the configured [start, end) range from csv or the endpoint (with the
/// FLUXTRADER_CACHE directory as a download cache).
inline KlineSeries load_series(const PipelineConfig& cfg) {
    const auto step = interval_seconds(cfg.data.interval);
    KlineSeries full;
    if (cfg.data.source == DataSource::Csv) {
        std::ifstream in(cfg.csv_file());
        if (!in) throw Error(ErrorCode::Io, "cannot open " + cfg.csv_file().string());
        full = parse_kline_csv(in, {cfg.data.symbol, step, cfg.data.gaps});
    } else {
        const auto cache = detail::cache_path(cfg);
        if (!cache.empty() && std::filesystem::exists(cache)) {
            std::ifstream in(cache);
            full = parse_kline_csv(in, {cfg.data.symbol, step, cfg.data.gaps});
        } else {
            FetchRequest req;
            req.endpoint = cfg.data.endpoint;
            req.symbol = cfg.data.symbol;
            req.interval = cfg.data.interval;
            req.start = cfg.start_ms();
            req.end = cfg.end_ms();
            req.gaps = cfg.data.gaps;
            full = fetch_klines(req);
            if (!cache.empty()) detail::write_text(cache, serialize_kline_csv(full));
        }
    }
    const auto first = full.lower_bound(cfg.start_ms()), last = full.lower_bound(cfg.end_ms());
    auto series = full.slice(first, last);
    if (series.empty()) throw Error(ErrorCode::EmptySeries, "no bars inside the configured date range");
    return series;
}

class Pipeline {
public:
    Pipeline(PipelineConfig config, RunOptions options)
        : raw_config_(std::move(config)), options_(std::move(options)) {
        raw_config_.validate();
        cfg_ = with_derived_seeds(raw_config_);
        out_ = options_.output_dir ? *options_.output_dir : std::filesystem::path(raw_config_.output_dir);
        manifest_.config = nlohmann::json(raw_config_);
        manifest_.fingerprint = Sha256().update(config_fingerprint(raw_config_)).hex();
    }

    const std::filesystem::path& output_dir() const { return out_; }
    const PipelineConfig& effective_config() const { return cfg_; }

    RunResult run() {
        prepare_output();
        stage("ingest", [&] { return ingest(); });
        stage("label", [&] { return label(); });
        stage("dae", [&] { return train_autoencoder(); });
        stage("denoise", [&] { return denoise_splits(); });
        stage("hybrid", [&] { return train_hybrid_stage(); });
        stage("backtest", [&] { return backtest(); });
        manifest_.complete = true;
        save_manifest();
        return {manifest_, out_, report_};
    }

    /// Runs everything before the hybrid stage (used by sweeps).
    void prepare_training_data() {
        prepare_output();
        stage("ingest", [&] { return ingest(); });
        stage("label", [&] { return label(); });
        stage("dae", [&] { return train_autoencoder(); });
        stage("denoise", [&] { return denoise_splits(); });
    }

    const LabelledWindows& train_windows() const { return train_; }
    const LabelledWindows& validation_windows() const { return validation_; }

private:
    using StageFn = std::function<std::pair<std::string, nlohmann::json>()>;

    void log(const std::string& msg) const {
        if (options_.log) *options_.log << msg << '\n' << std::flush;
    }

    void prepare_output() {
        std::filesystem::create_directories(out_);
        const auto path = out_ / "manifest.json";
        if (options_.resume && std::filesystem::exists(path)) {
            previous_ = read_manifest(path);
            if (previous_->fingerprint != manifest_.fingerprint)
                throw Error(ErrorCode::InvalidConfig, "cannot resume: configuration differs from the recorded run");
        }
        manifest_.stages.clear();
        manifest_.complete = false;
    }

    void save_manifest() const { detail::write_text(out_ / "manifest.json", to_json(manifest_).dump(2) + "\n"); }

    const StageRecord* previous(const std::string& name) const { return previous_ ? previous_->find(name) : nullptr; }

    void stage(const std::string& name, const StageFn& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        log("[" + name + "] start");
        std::pair<std::string, nlohmann::json> result;
        try {
            result = fn();
        } catch (const StageError&) {
            throw;
        } catch (const Error& e) {
            throw StageError(name, e);
        } catch (const std::exception& e) {
            throw StageError(name, Error(ErrorCode::Io, e.what()));
        }
        if (const auto* prev = previous(name); prev && prev->checksum != result.first)
            throw StageError(name, Error(ErrorCode::IncompleteRun, "resumed stage checksum differs from the recorded run"));
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        manifest_.stages.push_back({name, result.first, secs, result.second});
        save_manifest();
        log("[" + name + "] done in " + std::to_string(secs) + " s, checksum " + result.first.substr(0, 12));
    }

    // -- stages ------------------------------------------------------------

    std::pair<std::string, nlohmann::json> ingest() {
        series_ = load_series(cfg_);
        trainval_bars_ = series_.lower_bound(cfg_.trainval_end_ms());
        if (trainval_bars_ == 0) throw Error(ErrorCode::EmptySeries, "no bars before trainval_end");
        const auto digest = Sha256().update(serialize_kline_csv(series_.slice(0, trainval_bars_))).hex();
        return {digest, {{"trainval_bars", trainval_bars_}, {"first_bar", format_utc(series_.bars.front().open_time)}}};
    }

    std::pair<std::string, nlohmann::json> label() {
        // labels never look past trainval_end
        const auto trainval = series_.slice(0, trainval_bars_);
        const auto events = detect_events(trainval, cfg_.events.threshold, cfg_.events.horizon);
        const auto samples = extract_samples(trainval, events, cfg_.events.window, cfg_.normalization);
        if (samples.empty()) throw Error(ErrorCode::EmptySampleList, "no labelled events with full lookback");
        split_ = split_dataset(samples, cfg_.trainval_end_ms(), cfg_.validation_fraction);
        std::size_t ups = 0;
        for (const auto& s : split_.train) ups += s.label == Direction::Up ? 1 : 0;
        return {detail::checksum_samples(samples),
                {{"events", events.size()},
                 {"train", split_.train.size()},
                 {"validation", split_.validation.size()},
                 {"train_up", ups}}};
    }

    std::pair<std::string, nlohmann::json> train_autoencoder() {
        const auto dir = out_ / "checkpoints";
        if (previous("dae") && std::filesystem::exists(dir / "dae.json")) {
            dae_ = DaeModel(cfg_.dae);
            auto params = dae_.parameters();
            const auto hyper = load_checkpoint(dir, "dae", params);
            dae_.loss_history() = hyper.value("loss_history", std::vector<double>{});
            log("[dae] resumed from checkpoint");
        } else {
            dae_ = train_dae(split_.train, cfg_.dae);
            nlohmann::json hyper = cfg_.dae;
            hyper["loss_history"] = dae_.loss_history();
            save_checkpoint(dir, "dae", dae_.parameters(), hyper);
        }
        return {checksum(dae_.parameters()),
                {{"checkpoint", "checkpoints/dae.json"}, {"final_loss", dae_.loss_history().back()}}};
    }

    LabelledWindows denoise_samples(const std::vector<EventSample>& samples) const {
        LabelledWindows out;
        std::vector<std::vector<double>> rows;
        for (const auto& s : samples) {
            rows.push_back(flatten(s.window));
            out.labels.push_back(s.label);
        }
        out.windows = denoise_all(dae_, rows);
        return out;
    }

    std::pair<std::string, nlohmann::json> denoise_splits() {
        train_ = denoise_samples(split_.train);
        validation_ = denoise_samples(split_.validation);
        Sha256 h;
        h.update(detail::checksum_rows(train_.windows)).update(detail::checksum_rows(validation_.windows));
        return {h.hex(), nlohmann::json::object()};
    }

    ParameterList hybrid_parameters() const {
        return concat(concat(concat(hybrid_.cnn.parameters(), hybrid_.gan.parameters()), hybrid_.projection.parameters()),
                      hybrid_.classifier.parameters());
    }

    std::pair<std::string, nlohmann::json> train_hybrid_stage() {
        const auto dir = out_ / "checkpoints";
        const std::size_t channels = cfg_.cnn.output_channels(), steps = cfg_.cnn.output_length();
        const auto projection_seed = detail::mix_seed(*cfg_.seed, 19);
        if (previous("hybrid") && std::filesystem::exists(dir / "hybrid.json")) {
            hybrid_ = HybridModel{CnnModel(cfg_.cnn), GanModel(cfg_.gan, channels * steps), {}, ClassifierModel(cfg_.classifier)};
            hybrid_.projection = TemporalProjection(hybrid_.gan.penultimate_width(), channels, projection_seed);
            auto params = hybrid_parameters();
            const auto hyper = load_checkpoint(dir, "hybrid", params);
            hybrid_.gan.discriminator_losses() = hyper.at("discriminator_losses").get<std::vector<double>>();
            hybrid_.gan.generator_losses() = hyper.at("generator_losses").get<std::vector<double>>();
            history_.classifier_loss = hyper.at("classifier_loss").get<std::vector<double>>();
            history_.validation_accuracy = hyper.at("validation_accuracy").get<std::vector<double>>();
            log("[hybrid] resumed from checkpoint");
        } else {
            history_ = {};
            hybrid_ = train_hybrid(train_, &validation_, cfg_.cnn, cfg_.gan, cfg_.classifier, &history_, projection_seed);
            const nlohmann::json hyper = {{"cnn", cfg_.cnn},
                                          {"gan", cfg_.gan},
                                          {"classifier", cfg_.classifier},
                                          {"discriminator_losses", hybrid_.gan.discriminator_losses()},
                                          {"generator_losses", hybrid_.gan.generator_losses()},
                                          {"classifier_loss", history_.classifier_loss},
                                          {"validation_accuracy", history_.validation_accuracy}};
            save_checkpoint(dir, "hybrid", hybrid_parameters(), hyper);
        }
        const std::size_t length = cfg_.events.window;
        validation_accuracy_.reset();
        if (!validation_.windows.empty())
            validation_accuracy_ = accuracy_of(predict_windows(hybrid_, validation_.windows, length), validation_.labels);

        // classifier-only chronological cross-validation on the frozen features
        cv_.reset();
        LabelledWindows trainval = train_;
        trainval.windows.insert(trainval.windows.end(), validation_.windows.begin(), validation_.windows.end());
        trainval.labels.insert(trainval.labels.end(), validation_.labels.begin(), validation_.labels.end());
        if (trainval.windows.size() >= cfg_.classifier.cv_folds) {
            try {
                cv_ = cross_validate(temporal_rows(hybrid_, trainval.windows, length), trainval.labels, cfg_.classifier);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::SingleClassDataset) throw;
                log("[hybrid] cross-validation skipped: a fold's training part has a single class");
            }
        }

        detail::write_text(out_ / "run" / "gan_losses.json",
                           nlohmann::json{{"discriminator", hybrid_.gan.discriminator_losses()},
                                          {"generator", hybrid_.gan.generator_losses()}}
                                   .dump() +
                               "\n");
        nlohmann::json artifacts = {{"checkpoint", "checkpoints/hybrid.json"},
                                    {"gan_losses", "run/gan_losses.json"},
                                    {"iterations", hybrid_.gan.discriminator_losses().size()}};
        return {checksum(hybrid_parameters()), artifacts};
    }

    std::pair<std::string, nlohmann::json> backtest() {
        const std::size_t w = cfg_.events.window;
        const std::size_t test_first = trainval_bars_;
        if (test_first >= series_.size()) throw Error(ErrorCode::EmptyTestSet, "no bars after trainval_end");

        // events are labelled on the full series; only test-range events count
        std::vector<Event> test_events;
        for (const auto& e : detect_events(series_, cfg_.events.threshold, cfg_.events.horizon))
            if (e.index >= test_first) test_events.push_back(e);
        const auto samples = extract_samples(series_, test_events, w, cfg_.normalization);
        if (samples.empty()) throw Error(ErrorCode::EmptyTestSet, "no test events with full lookback");
        const auto test = denoise_samples(samples);
        const auto predictions = predict_windows(hybrid_, test.windows, w);
        const double accuracy = accuracy_of(predictions, test.labels);

        // majority class of the training labels, as a naive baseline
        std::size_t ups = 0;
        for (auto d : train_.labels) ups += d == Direction::Up ? 1 : 0;
        const auto majority = 2 * ups >= train_.labels.size() ? Direction::Up : Direction::Down;
        std::size_t majority_hits = 0;
        for (auto d : test.labels) majority_hits += d == majority ? 1 : 0;

        const auto test_series = series_.slice(test_first, series_.size());
        std::vector<Signal> signals;
        if (cfg_.signal_source == SignalSource::Events) {
            // window [i - W, i) is complete at the close of bar i - 1
            for (std::size_t k = 0; k < samples.size(); ++k)
                if (samples[k].event_index > test_first)
                    signals.push_back({samples[k].event_index - 1 - test_first, predictions[k]});
        } else {
            std::vector<std::vector<double>> rows;
            std::vector<std::size_t> at;
            for (std::size_t t = std::max(test_first, w - 1); t < series_.size(); ++t) {
                rows.push_back(normalize_window(raw_window(series_, t + 1, w), cfg_.normalization).values);
                at.push_back(t - test_first);
            }
            const auto preds = predict_windows(hybrid_, denoise_all(dae_, rows), w);
            for (std::size_t k = 0; k < preds.size(); ++k) signals.push_back({at[k], preds[k]});
        }
        report_ = run_backtest(test_series, signals, cfg_.backtest);

        nlohmann::json trades = nlohmann::json::array();
        for (const auto& t : report_.trades) trades.push_back(to_json(t));
        nlohmann::json open_times = nlohmann::json::array();
        for (const auto& b : test_series.bars) open_times.push_back(b.open_time);

        auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
        manifest_.metrics = {{"accuracy", accuracy},
                             {"test_event_count", samples.size()},
                             {"majority_baseline_accuracy",
                              static_cast<double>(majority_hits) / static_cast<double>(test.labels.size())},
                             {"validation_accuracy", opt(validation_accuracy_)},
                             {"cross_validation", cv_ ? nlohmann::json{{"fold_accuracies", cv_->accuracies},
                                                                       {"mean", cv_->mean}}
                                                      : nlohmann::json(nullptr)},
                             {"traded_accuracy", opt(report_.traded_accuracy)},
                             {"final_net_value", report_.final_net_value},
                             {"max_drawdown", report_.max_drawdown},
                             {"sharpe_ratio", opt(report_.sharpe_ratio)},
                             {"trade_count", report_.trade_count},
                             {"signal_count", signals.size()},
                             {"train_count", train_.labels.size()},
                             {"validation_count", validation_.labels.size()},
                             {"test_bars", test_series.size()},
                             {"seed", *cfg_.seed},
                             {"signal_source", cfg_.signal_source == SignalSource::Events ? "events" : "bars"}};
        const nlohmann::json doc = {{"metrics", manifest_.metrics},
                                    {"backtest_config", cfg_.backtest},
                                    {"trades", trades},
                                    {"equity", report_.equity},
                                    {"open_times", open_times}};
        const auto text = doc.dump() + "\n";
        detail::write_text(out_ / "run" / "backtest.json", text);
        return {Sha256().update(text).hex(), {{"report", "run/backtest.json"}}};
    }

    PipelineConfig raw_config_;
    PipelineConfig cfg_;
    RunOptions options_;
    std::filesystem::path out_;
    RunManifest manifest_;
    std::optional<RunManifest> previous_;

    KlineSeries series_;
    std::size_t trainval_bars_ = 0;
    DatasetSplit split_;
    DaeModel dae_;
    LabelledWindows train_, validation_;
    HybridModel hybrid_;
    HybridHistory history_;
    std::optional<double> validation_accuracy_;
    std::optional<CrossValidation> cv_;
    BacktestReport report_;
};

// ---------------------------------------------------------------------------
// Report

struct ReportFiles {
    std::filesystem::path metrics, equity, gan_loss;
};

/// Renders metrics.json, equity.csv and gan_loss.csv next to the manifest
/// (in <run>/report/). Wall-clock timings are left out so reruns match byte
/// for byte.
inline ReportFiles render_report(const std::filesystem::path& manifest_path) {
    const auto manifest = read_manifest(manifest_path);
    const auto* bt = manifest.find("backtest");
    const auto* hy = manifest.find("hybrid");
    if (!manifest.complete || !bt || !hy) throw Error(ErrorCode::IncompleteRun, "run did not reach the backtest stage");
    const auto run_dir = manifest_path.parent_path();
    nlohmann::json backtest, losses;
    try {
        backtest = nlohmann::json::parse(detail::read_text(run_dir / bt->artifacts.at("report").get<std::string>()));
        losses = nlohmann::json::parse(detail::read_text(run_dir / hy->artifacts.at("gan_losses").get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::IncompleteRun, std::string("run artifacts unreadable: ") + e.what());
    }

    ReportFiles files{run_dir / "report" / "metrics.json", run_dir / "report" / "equity.csv",
                      run_dir / "report" / "gan_loss.csv"};
    nlohmann::json metrics = backtest.at("metrics");
    nlohmann::json checksums = nlohmann::json::object();
    for (const auto& s : manifest.stages) checksums[s.name] = s.checksum;
    metrics["stage_checksums"] = checksums;
    detail::write_text(files.metrics, metrics.dump(2) + "\n");

    std::string eq = "open_time,equity\n";
    const auto& equity = backtest.at("equity");
    const auto& times = backtest.at("open_times");
    for (std::size_t i = 0; i < equity.size(); ++i)
        eq += format_utc(times[i].get<TimestampMs>()) + "," + format_double(equity[i].get<double>()) + "\n";
    detail::write_text(files.equity, eq);

    std::string gl = "iteration,discriminator_loss,generator_loss\n";
    const auto& jd = losses.at("discriminator");
    const auto& jg = losses.at("generator");
    for (std::size_t i = 0; i < jd.size(); ++i)
        gl += std::to_string(i + 1) + "," + format_double(jd[i].get<double>()) + "," +
              format_double(jg[i].get<double>()) + "\n";
    detail::write_text(files.gan_loss, gl);
    return files;
}

inline RunResult run_pipeline(const PipelineConfig& config, const RunOptions& options = {}) {
    Pipeline pipeline(config, options);
    auto result = pipeline.run();
    render_report(result.output_dir / "manifest.json");
    return result;
}

// ---------------------------------------------------------------------------
// Sweep

/// Hyperparameters a sweep may vary.
inline const std::vector<std::string>& sweep_whitelist() {
    static const std::vector<std::string> keys{"filters", "pool_window", "learning_rate", "epochs"};
    return keys;
}

struct SweepRow {
    std::map<std::string, double> parameters;
    double validation_accuracy = 0.0;
    std::size_t grid_index = 0;
};

struct SweepResult {
    std::vector<SweepRow> rows; // best first
    std::filesystem::path table;
    std::filesystem::path best_config;
};

/// Applies one grid point. `filters` sets the first block's channels and
/// doubles them per later block; `pool_window` sets every block's pooling
/// window and stride; `learning_rate` and `epochs` drive the hybrid stage.
inline PipelineConfig apply_grid_point(PipelineConfig cfg, const std::map<std::string, double>& point) {
    for (const auto& [key, value] : point) {
        if (key == "filters") {
            auto f = static_cast<std::size_t>(value);
            for (auto& b : cfg.cnn.layers) {
                b.out_channels = f;
                f *= 2;
            }
        } else if (key == "pool_window") {
            for (auto& b : cfg.cnn.layers) b.pool_window = b.pool_stride = static_cast<std::size_t>(value);
        } else if (key == "learning_rate") {
            cfg.classifier.learning_rate = value;
        } else if (key == "epochs") {
            cfg.classifier.epochs = static_cast<std::size_t>(value);
        } else {
            throw Error(ErrorCode::InvalidConfig, "sweep parameter '" + key + "' is not tunable");
        }
    }
    return cfg;
}

inline std::vector<std::map<std::string, double>> expand_grid(const nlohmann::json& grid, std::size_t max_points) {
    if (!grid.is_object() || grid.empty()) throw Error(ErrorCode::InvalidConfig, "grid must be a non-empty object");
    const auto& allowed = sweep_whitelist();
    std::size_t total = 1;
    for (const auto& [key, values] : grid.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw Error(ErrorCode::InvalidConfig, "sweep parameter '" + key + "' is not tunable");
        if (!values.is_array() || values.empty())
            throw Error(ErrorCode::InvalidConfig, "grid entry '" + key + "' must be a non-empty list");
        for (const auto& v : values)
            if (!v.is_number()) throw Error(ErrorCode::InvalidConfig, "grid entry '" + key + "' must hold numbers");
        total *= values.size();
        if (total > max_points)
            throw Error(ErrorCode::GridTooLarge, "grid has more than " + std::to_string(max_points) + " points");
    }
    std::vector<std::map<std::string, double>> points{{}};
    for (const auto& [key, values] : grid.items()) {
        std::vector<std::map<std::string, double>> next;
        for (const auto& p : points)
            for (const auto& v : values) {
                auto q = p;
                q[key] = v.get<double>();
                next.push_back(std::move(q));
            }
        points = std::move(next);
    }
    return points;
}

/// Trains one hybrid model per grid point on the train split and scores it on
/// the validation split. The autoencoder is trained once and shared; the test
/// range is never loaded past ingestion.
inline SweepResult run_sweep(const PipelineConfig& config, const nlohmann::json& grid, const RunOptions& options = {}) {
    config.validate();
    const auto points = expand_grid(grid, config.sweep.max_points);
    for (const auto& p : points) apply_grid_point(config, p).validate();

    Pipeline base(config, options);
    base.prepare_training_data();
    const auto& train = base.train_windows();
    const auto& validation = base.validation_windows();
    if (validation.windows.empty())
        throw Error(ErrorCode::InvalidConfig, "sweep needs a non-empty validation split (validation_fraction > 0)");

    SweepResult result;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto cfg = with_derived_seeds(apply_grid_point(config, points[i]));
        try {
            const auto model = train_hybrid(train, nullptr, cfg.cnn, cfg.gan, cfg.classifier, nullptr,
                                            detail::mix_seed(*cfg.seed, 19));
            const double acc = accuracy_of(predict_windows(model, validation.windows, cfg.events.window), validation.labels);
            result.rows.push_back({points[i], acc, i});
        } catch (const Error& e) {
            throw StageError("sweep", e);
        }
        if (options.log) *options.log << "[sweep] point " << i + 1 << "/" << points.size() << " accuracy "
                                      << result.rows.back().validation_accuracy << '\n';
    }
    std::stable_sort(result.rows.begin(), result.rows.end(),
                     [](const SweepRow& a, const SweepRow& b) { return a.validation_accuracy > b.validation_accuracy; });

    std::string csv;
    for (const auto& [key, _] : result.rows.front().parameters) csv += key + ",";
    csv += "validation_accuracy\n";
    for (const auto& row : result.rows) {
        for (const auto& [_, v] : row.parameters) csv += format_double(v) + ",";
        csv += format_double(row.validation_accuracy) + "\n";
    }
    const auto dir = base.output_dir() / "sweep";
    result.table = dir / "results.csv";
    result.best_config = dir / "best_config.json";
    detail::write_text(result.table, csv);
    auto best = apply_grid_point(config, result.rows.front().parameters);
    // the file lives elsewhere than the source config, so pin the data path
    if (best.data.source == DataSource::Csv) best.data.csv_path = std::filesystem::absolute(best.csv_file()).string();
    detail::write_text(result.best_config, nlohmann::json(best).dump(2) + "\n");
    return result;
}

} // namespace fluxtrader
