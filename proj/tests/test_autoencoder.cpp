#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "fluxtrader/autoencoder.hpp"
#include "fluxtrader/checkpoint.hpp"
#include "fluxtrader/grad_check.hpp"
#include "test_support.hpp"

using namespace fluxtrader;
using namespace fluxtrader::testing;

namespace {

std::vector<std::vector<double>> sines(std::size_t n, std::size_t width, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<double>> out;
    for (std::size_t k = 0; k < n; ++k) {
        const double freq = 1.0 + 4.0 * u(rng), phase = 2.0 * std::numbers::pi * u(rng);
        std::vector<double> w(width);
        for (std::size_t t = 0; t < width; ++t)
            w[t] = std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(t) / static_cast<double>(width) + phase);
        out.push_back(std::move(w));
    }
    return out;
}

double mse(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

DaeConfig small_config() {
    DaeConfig cfg;
    cfg.input_width = 32;
    cfg.hidden_sizes = {24, 8};
    cfg.epochs = 5;
    return cfg;
}

} // namespace

TEST_CASE("corrupt", "[dae]") {
    std::mt19937_64 rng(41);
    const auto x = random_values(10000, rng);
    REQUIRE(corrupt(x, 0.0, 5) == x);
    REQUIRE(corrupt(x, 0.1, 5) == corrupt(x, 0.1, 5));
    REQUIRE(corrupt(x, 0.1, 5) != corrupt(x, 0.1, 6));
    const auto y = corrupt(x, 0.1, 5);
    double mu = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) mu += y[i] - x[i];
    mu /= static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) ss += (y[i] - x[i] - mu) * (y[i] - x[i] - mu);
    const double sd = std::sqrt(ss / static_cast<double>(x.size() - 1));
    REQUIRE(sd >= 0.095);
    REQUIRE(sd <= 0.105);
}

TEST_CASE("config validation", "[dae]") {
    DaeConfig cfg;
    cfg.hidden_sizes = {128, 512};
    REQUIRE_THROWS_AS(cfg.validate(), Error);
    cfg = DaeConfig{};
    REQUIRE_NOTHROW(cfg.validate());
    REQUIRE(cfg.input_width == 1800);
    const DaeConfig back = nlohmann::json(cfg).get<DaeConfig>();
    REQUIRE(back.hidden_sizes == cfg.hidden_sizes);
    REQUIRE(back.noise_std == cfg.noise_std);
}

TEST_CASE("training lowers the loss", "[dae]") {
    DaeConfig cfg;
    cfg.input_width = 64;
    const auto model = train_dae(sines(120, 64, 42), cfg);
    REQUIRE(model.loss_history().size() == cfg.epochs);
    REQUIRE(model.loss_history().back() <= model.loss_history().front());
    for (double l : model.loss_history()) REQUIRE(std::isfinite(l));
}

TEST_CASE("single repeated sample is memorised", "[dae]") {
    auto cfg = small_config();
    cfg.noise_std = 0.0;
    cfg.epochs = 300;
    const auto one = sines(1, 32, 43).front();
    const std::vector<std::vector<double>> data(32, one);
    const auto model = train_dae(data, cfg);
    REQUIRE(mse(denoise(model, one), one) < 1e-3);
}

TEST_CASE("training is bit-reproducible", "[dae]") {
    const auto data = sines(40, 32, 44);
    const auto a = train_dae(data, small_config());
    const auto b = train_dae(data, small_config());
    REQUIRE(checksum(a.parameters()) == checksum(b.parameters()));
    REQUIRE(a.loss_history() == b.loss_history());
}

TEST_CASE("denoise contracts", "[dae]") {
    const auto data = sines(64, 32, 45);
    const auto model = train_dae(data, small_config());
    const auto out = denoise(model, data[0]);
    REQUIRE(out.size() == 32);
    REQUIRE(out == denoise(model, data[0]));
    REQUIRE(denoise_all(model, {data[0], data[1]})[1] == denoise(model, data[1]));
    try {
        denoise(model, std::vector<double>(31, 0.0));
        FAIL("expected throw");
    } catch (const Error& e) {
        REQUIRE(e.code() == ErrorCode::ShapeMismatch);
    }
}

TEST_CASE("denoising contracts toward the learned manifold", "[dae][property]") {
    DaeConfig cfg;
    cfg.input_width = 64;
    const auto clean = sines(400, 64, 46);
    const auto model = train_dae(clean, cfg);
    double once = 0.0, twice = 0.0;
    for (std::size_t k = 0; k < clean.size(); ++k) {
        const auto x = corrupt(clean[k], 0.1, k);
        const auto d1 = denoise(model, x);
        const auto d2 = denoise(model, d1);
        once += mse(d1, x);
        twice += mse(d2, d1);
    }
    REQUIRE(twice <= once);
}

TEST_CASE("gradients check before the first step", "[dae][grad]") {
    const auto data = sines(4, 32, 47);
    DaeModel model(small_config());
    auto params = model.parameters();
    const auto noisy = stack_rows({corrupt(data[0], 0.05, 1), corrupt(data[1], 0.05, 2), corrupt(data[2], 0.05, 3)});
    const auto clean = stack_rows({data[0], data[1], data[2]});
    REQUIRE(grad_check([&] { return loss_mse(model.reconstruct(noisy), clean); }, params) < 1e-3);
}

TEST_CASE("train_dae errors", "[dae]") {
    try {
        train_dae(std::vector<std::vector<double>>{}, small_config());
        FAIL("expected throw");
    } catch (const Error& e) {
        REQUIRE(e.code() == ErrorCode::EmptyDataset);
    }
    auto cfg = small_config();
    cfg.learning_rate = 1e300;
    const std::vector<std::vector<double>> huge(8, std::vector<double>(32, 1e200));
    try {
        train_dae(huge, cfg);
        FAIL("expected throw");
    } catch (const Error& e) {
        REQUIRE(e.code() == ErrorCode::DivergedLoss);
    }
}

TEST_CASE("checkpoint round trip keeps outputs", "[dae][checkpoint]") {
    const auto data = sines(32, 32, 48);
    const auto trained = train_dae(data, small_config());
    const auto dir = scratch_dir("dae_ckpt");
    save_checkpoint(dir, "dae", trained.parameters(), nlohmann::json(trained.config()));
    DaeModel fresh(small_config());
    auto params = fresh.parameters();
    load_checkpoint(dir, "dae", params);
    REQUIRE(denoise(fresh, data[3]) == denoise(trained, data[3]));
}
