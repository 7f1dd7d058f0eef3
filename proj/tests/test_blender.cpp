#include <random>

#include "doctest.h"
#include "nowcast/blender.hpp"
#include "nowcast/errors.hpp"
#include "support.hpp"

using namespace nowcast;
using namespace nowcast::blend;

namespace {

ForecastBundle bundle_of(double v, int n = 4) {
    ForecastBundle b;
    for (auto& g : b.predictions) g = Grid(ChannelKind::Rain, n, n, 0, v);
    return b;
}

BlendWeights weights_of(double w, int n = 4) {
    BlendWeights bw;
    for (auto& g : bw.maps) g = Grid(ChannelKind::Rain, n, n, 0, w);
    return bw;
}

}  // namespace

TEST_CASE("rescaling probability maps") {
    std::mt19937_64 rng(2);
    Grid p0(ChannelKind::Rain, 8, 8, 0);
    std::uniform_real_distribution<double> d(0.05, 0.9);
    for (double& v : p0.values) v = d(rng);
    const std::array<Grid, kHours> same{p0, p0, p0};
    const auto s = rescale_probabilities(same);
    for (int h = 0; h < kHours; ++h) {
        CHECK(s.factors[h] == 1.0);
        CHECK(s.maps[h].values == p0.values);
    }
    Grid half = p0;
    for (double& v : half.values) v *= 0.5;
    const std::array<Grid, kHours> fading{p0, half, half};
    const auto r = rescale_probabilities(fading);
    CHECK(r.factors[1] == doctest::Approx(2.0));
    CHECK(r.maps[0].values == p0.values);
    for (std::size_t i = 0; i < p0.values.size(); ++i)
        CHECK(r.maps[1].values[i] == doctest::Approx(std::min(1.0, half.values[i] * 2.0)));
    Grid big = p0;
    for (double& v : big.values) v = 0.9;
    big.values[0] = 0.1;
    const std::array<Grid, kHours> clip{big, p0, p0};
    const auto clipped = rescale_probabilities(clip);
    for (double v : clipped.maps[1].values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    const std::array<Grid, kHours> dead{p0, Grid(ChannelKind::Rain, 8, 8, 0), p0};
    try {
        rescale_probabilities(dead);
        FAIL("accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DegenerateMap);
    }
}

TEST_CASE("blend endpoints, midpoint, bounds and monotonicity") {
    std::mt19937_64 rng(8);
    ForecastBundle model, pers;
    for (int h = 0; h < kHours; ++h) {
        model.predictions[h] = testsupport::random_grid(5, 5, rng, 30.0);
        pers.predictions[h] = testsupport::random_grid(5, 5, rng, 30.0);
    }
    const auto one = blend::blend(weights_of(1.0, 5), model, pers);
    const auto zero = blend::blend(weights_of(0.0, 5), model, pers);
    for (int h = 0; h < kHours; ++h) {
        CHECK(one.predictions[h].values == model.predictions[h].values);
        CHECK(zero.predictions[h].values == pers.predictions[h].values);
    }
    CHECK(blend::blend(weights_of(0.5), bundle_of(4), bundle_of(2)).predictions[0].values[0] == doctest::Approx(3.0));

    std::uniform_real_distribution<double> d(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        BlendWeights w = weights_of(0.0, 5);
        for (auto& g : w.maps)
            for (double& v : g.values) v = d(rng);
        const auto out = blend::blend(w, model, pers);
        for (int h = 0; h < kHours; ++h)
            for (std::size_t i = 0; i < 25; ++i) {
                const double a = model.predictions[h].values[i], b = pers.predictions[h].values[i];
                CHECK(out.predictions[h].values[i] >= std::min(a, b));
                CHECK(out.predictions[h].values[i] <= std::max(a, b));
            }
    }
    double prev = -1;
    for (double w = 0; w <= 1.0; w += 0.05) {
        const double v = blend::blend(weights_of(w), bundle_of(7), bundle_of(2)).predictions[1].values[3];
        CHECK(v >= prev);
        prev = v;
    }
    CHECK_THROWS_AS(blend::blend(weights_of(0.5, 3), bundle_of(1), bundle_of(2)), Error);
}
