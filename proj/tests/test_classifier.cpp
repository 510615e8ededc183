#include <catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "fluxtrader/classifier.hpp"
#include "test_support.hpp"

using namespace fluxtrader;
using namespace fluxtrader::testing;
using Catch::Approx;

namespace {

struct LabelledSet {
    std::vector<TemporalFeature> x;
    std::vector<Direction> y;
};

/// Labels from the sign of a fixed random hyperplane over the first `active`
/// coordinates, with a margin.
LabelledSet separable(std::size_t n, std::uint64_t seed, std::size_t active = kTemporalWidth) {
    std::mt19937_64 rng(seed);
    std::mt19937_64 plane_rng(99);
    auto w = random_values(kTemporalWidth, plane_rng);
    std::fill(w.begin() + static_cast<std::ptrdiff_t>(active), w.end(), 0.0);
    LabelledSet out;
    while (out.x.size() < n) {
        TemporalFeature f;
        const auto v = random_values(kTemporalWidth, rng);
        std::copy(v.begin(), v.end(), f.values.begin());
        double dot = 0.0;
        for (std::size_t i = 0; i < kTemporalWidth; ++i) dot += w[i] * v[i];
        if (std::abs(dot) < 0.1 * std::sqrt(static_cast<double>(active))) continue;
        out.x.push_back(f);
        out.y.push_back(dot > 0 ? Direction::Up : Direction::Down);
    }
    return out;
}

LabelledSet noise(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);
    LabelledSet out;
    for (std::size_t k = 0; k < n; ++k) {
        TemporalFeature f;
        const auto v = random_values(kTemporalWidth, rng);
        std::copy(v.begin(), v.end(), f.values.begin());
        out.x.push_back(f);
        out.y.push_back(coin(rng) ? Direction::Up : Direction::Down);
    }
    return out;
}

} // namespace

TEST_CASE("separable features are learned", "[classifier]") {
    const auto data = separable(400, 1);
    const auto model = train_classifier(data.x, data.y, ClassifierConfig{});
    REQUIRE(evaluate(model, data.x, data.y) >= 0.99);
    REQUIRE(model.loss_history().size() == ClassifierConfig{}.epochs);
    REQUIRE(model.loss_history().back() < model.loss_history().front());
}

TEST_CASE("random labels give chance-level held-out accuracy", "[classifier]") {
    const auto train = noise(400, 2);
    const auto test = noise(2000, 3);
    const auto model = train_classifier(train.x, train.y, ClassifierConfig{});
    const double acc = evaluate(model, test.x, test.y);
    REQUIRE(acc >= 0.4);
    REQUIRE(acc <= 0.6);
}

TEST_CASE("training is seeded and deterministic", "[classifier]") {
    const auto data = separable(100, 4);
    ClassifierConfig cfg;
    cfg.epochs = 5;
    const auto a = train_classifier(data.x, data.y, cfg);
    const auto b = train_classifier(data.x, data.y, cfg);
    const auto pa = a.parameters(), pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) REQUIRE(std::ranges::equal(pa[i].tensor.data(), pb[i].tensor.data()));
    REQUIRE(predict(a, data.x[0]).p_up == predict(a, data.x[0]).p_up);
}

TEST_CASE("training errors", "[classifier]") {
    const auto data = separable(10, 5);
    std::vector<Direction> all_up(10, Direction::Up);
    try {
        train_classifier(data.x, all_up, ClassifierConfig{});
        FAIL("expected throw");
    } catch (const Error& e) {
        REQUIRE(e.code() == ErrorCode::SingleClassDataset);
    }
    try {
        train_classifier({}, {}, ClassifierConfig{});
        FAIL("expected throw");
    } catch (const Error& e) {
        REQUIRE(e.code() == ErrorCode::EmptyDataset);
    }
}

TEST_CASE("predict and evaluate contracts", "[classifier]") {
    ClassifierModel zero(ClassifierConfig{});
    zero.zero_parameters();
    const auto data = noise(50, 6);
    const auto sig = predict(zero, data.x[0]);
    REQUIRE(sig.p_up == 0.5);
    REQUIRE(sig.direction() == Direction::Up);
    REQUIRE(sig.confidence == 0.5);

    const auto model = train_classifier(data.x, data.y, [] {
        ClassifierConfig c;
        c.epochs = 3;
        return c;
    }());
    std::vector<Direction> flipped;
    for (auto d : data.y) flipped.push_back(flip(d));
    for (const auto& f : data.x) REQUIRE(predict(model, f).confidence >= 0.5);
    REQUIRE(evaluate(model, data.x, data.y) + evaluate(model, data.x, flipped) == 1.0);
    REQUIRE_THROWS_AS(evaluate(model, {}, {}), Error);
}

TEST_CASE("evaluate counts matches", "[classifier]") {
    // A model whose output is fixed by its bias: weights zero, output bias b gives p = sigmoid(b).
    ClassifierModel m(ClassifierConfig{});
    m.zero_parameters();
    auto params = m.parameters();
    params.back().tensor.mutable_data()[0] = 3.0; // always Up
    const auto data = noise(3, 7);
    REQUIRE(evaluate(m, data.x, {Direction::Up, Direction::Up, Direction::Down}) == Approx(2.0 / 3.0));
    REQUIRE(evaluate(m, data.x, {Direction::Up, Direction::Up, Direction::Up}) == 1.0);
}

TEST_CASE("chronological folds", "[classifier][cv]") {
    const auto folds = chronological_folds(100, 5);
    REQUIRE(folds.size() == 5);
    for (std::size_t f = 0; f < 5; ++f) {
        REQUIRE(folds[f].second - folds[f].first == 20);
        if (f > 0) REQUIRE(folds[f].first == folds[f - 1].second);
    }
    const auto uneven = chronological_folds(13, 4);
    REQUIRE(uneven.front() == std::pair<std::size_t, std::size_t>{0, 4});
    REQUIRE(uneven.back().second == 13);
    try {
        chronological_folds(3, 5);
        FAIL("expected throw");
    } catch (const Error& e) {
        REQUIRE(e.code() == ErrorCode::TooFewSamples);
    }
}

TEST_CASE("cross validation on separable data", "[classifier][cv]") {
    const auto data = separable(1500, 8, 4);
    const auto cv = cross_validate(data.x, data.y, ClassifierConfig{});
    REQUIRE(cv.accuracies.size() == 5);
    double total = 0.0;
    for (double a : cv.accuracies) {
        REQUIRE(a >= 0.95);
        total += a;
    }
    REQUIRE(cv.mean == total / 5.0);
}
