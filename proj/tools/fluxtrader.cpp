// Command-line front end: fetch, label, run, sweep, report.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fluxtrader/fluxtrader.hpp"

namespace ft = fluxtrader;

namespace {

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
};

ft::PipelineConfig load(const Common& c) {
    try {
        auto cfg = ft::load_config(c.config_path);
        if (c.seed) cfg.seed = *c.seed;
        cfg.validate();
        return cfg;
    } catch (const ft::Error& e) {
        throw ft::StageError("config", e);
    }
}

std::string json_or_null(const nlohmann::json& j, const char* key) {
    return j.contains(key) ? j.at(key).dump() : "null";
}

void print_metrics(const nlohmann::json& m) {
    for (const char* key : {"accuracy", "final_net_value", "max_drawdown", "sharpe_ratio", "trade_count",
                            "traded_accuracy", "validation_accuracy", "majority_baseline_accuracy"})
        std::cout << key << ": " << json_or_null(m, key) << '\n';
}

int fetch_cmd(const Common& c) {
    auto cfg = load(c);
    cfg.data.source = ft::DataSource::Endpoint;
    ft::KlineSeries series;
    try {
        series = ft::load_series(cfg);
    } catch (const ft::Error& e) {
        throw ft::StageError("fetch", e);
    }
    if (c.out.empty()) {
        std::cout << ft::serialize_kline_csv(series);
    } else {
        std::ofstream out(c.out, std::ios::binary | std::ios::trunc);
        if (!out) throw ft::StageError("fetch", ft::Error(ft::ErrorCode::Io, "cannot write " + c.out));
        out << ft::serialize_kline_csv(series);
        std::cerr << "wrote " << series.size() << " bars to " << c.out << '\n';
    }
    return 0;
}

int label_cmd(const Common& c) {
    const auto cfg = load(c);
    std::string csv = "index,open_time,label,split\n";
    std::size_t ups = 0, downs = 0;
    try {
        const auto series = ft::load_series(cfg);
        const auto events = ft::detect_events(series, cfg.events.threshold, cfg.events.horizon);
        const auto boundary = cfg.trainval_end_ms();
        for (const auto& e : events) {
            const auto t = series.bars[e.index].open_time;
            csv += std::to_string(e.index) + "," + ft::format_utc(t) + "," + std::string(ft::to_string(e.label)) + "," +
                   (t < boundary ? "trainval" : "test") + "\n";
            (e.label == ft::Direction::Up ? ups : downs) += 1;
        }
    } catch (const ft::Error& e) {
        throw ft::StageError("label", e);
    }
    if (c.out.empty()) {
        std::cout << csv;
    } else {
        std::ofstream out(c.out, std::ios::binary | std::ios::trunc);
        if (!out) throw ft::StageError("label", ft::Error(ft::ErrorCode::Io, "cannot write " + c.out));
        out << csv;
    }
    std::cerr << ups + downs << " events (" << ups << " up, " << downs << " down)\n";
    return 0;
}

int run_cmd(const Common& c, bool resume) {
    const auto cfg = load(c);
    ft::RunOptions options;
    if (!c.out.empty()) options.output_dir = c.out;
    options.resume = resume;
    options.log = &std::cerr;
    const auto result = ft::run_pipeline(cfg, options);
    std::cout << "manifest: " << (result.output_dir / "manifest.json").string() << '\n';
    print_metrics(result.manifest.metrics);
    return 0;
}

int sweep_cmd(const Common& c, const std::string& grid_arg) {
    const auto cfg = load(c);
    nlohmann::json grid;
    try {
        if (std::ifstream in(grid_arg); in)
            grid = nlohmann::json::parse(in);
        else
            grid = nlohmann::json::parse(grid_arg);
    } catch (const nlohmann::json::exception& e) {
        throw ft::StageError("sweep", ft::Error(ft::ErrorCode::InvalidConfig, std::string("grid: ") + e.what()));
    }
    ft::RunOptions options;
    if (!c.out.empty()) options.output_dir = c.out;
    options.log = &std::cerr;
    const auto result = ft::run_sweep(cfg, grid, options);
    std::cout << "results: " << result.table.string() << '\n' << "best config: " << result.best_config.string() << '\n';
    return 0;
}

int report_cmd(const std::string& manifest) {
    ft::ReportFiles files;
    try {
        files = ft::render_report(manifest);
    } catch (const ft::Error& e) {
        throw ft::StageError("report", e);
    }
    std::cout << files.metrics.string() << '\n' << files.equity.string() << '\n' << files.gan_loss.string() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Autoencoder + CNN + GAN large-move classifier and stop-loss backtester"};
    app.require_subcommand(1);

    Common common;
    bool resume = false;
    std::string grid, manifest;
    auto add_common = [&](CLI::App* sub, const char* out_help) {
        sub->add_option("-c,--config", common.config_path, "JSON config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "Global seed (overrides the config)");
        sub->add_option("-o,--out", common.out, out_help);
    };

    auto* fetch = app.add_subcommand("fetch", "Download klines for the configured range");
    add_common(fetch, "Output csv (stdout if omitted)");
    auto* label = app.add_subcommand("label", "List labelled large-move events");
    add_common(label, "Output csv (stdout if omitted)");
    auto* run = app.add_subcommand("run", "Run every stage and render the report");
    add_common(run, "Run directory (overrides output_dir)");
    run->add_flag("--resume", resume, "Reuse checkpoints of a previous run with the same config");
    auto* sweep = app.add_subcommand("sweep", "Grid search scored on the validation split");
    add_common(sweep, "Run directory (overrides output_dir)");
    sweep->add_option("-g,--grid", grid, "Grid as a JSON file or inline JSON")->required();
    auto* report = app.add_subcommand("report", "Render report files of a completed run");
    report->add_option("-m,--manifest,manifest", manifest, "Path to manifest.json")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*fetch) return fetch_cmd(common);
        if (*label) return label_cmd(common);
        if (*run) return run_cmd(common, resume);
        if (*sweep) return sweep_cmd(common, grid);
        if (*report) return report_cmd(manifest);
    } catch (const ft::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
