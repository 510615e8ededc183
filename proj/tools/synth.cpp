// Writes the planted-signal kline fixture as csv.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "fluxtrader/synthetic.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Generate a planted-signal kline csv"};
    fluxtrader::SyntheticConfig cfg;
    std::string out = "data/sample_5m.csv";
    std::string start = fluxtrader::format_utc(cfg.start);
    app.add_option("-o,--out", out, "Output csv path");
    app.add_option("--bars", cfg.bars, "Number of bars");
    app.add_option("--seed", cfg.seed, "Random seed");
    app.add_option("--start", start, "First bar open time (UTC)");
    app.add_option("--move", cfg.move, "Planted move size");
    app.add_option("--amplitude", cfg.pattern_amplitude, "Pattern amplitude (log price)");
    CLI11_PARSE(app, argc, argv);

    try {
        cfg.start = fluxtrader::parse_utc(start);
        const auto synth = fluxtrader::generate_planted_series(cfg);
        std::ofstream file(out, std::ios::binary | std::ios::trunc);
        if (!file) throw fluxtrader::Error(fluxtrader::ErrorCode::Io, "cannot write " + out);
        file << fluxtrader::serialize_kline_csv(synth.series);
        std::cerr << "wrote " << synth.series.size() << " bars with " << synth.moves.size() << " planted moves to "
                  << out << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
