#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "qfl/error.hpp"
#include "qfl/noise.hpp"
#include "qfl/random.hpp"

using namespace qfl;

namespace {

std::vector<double> random_distribution(std::size_t n, Rng& rng) {
    std::uniform_real_distribution<double> d(0, 1);
    std::vector<double> p(n);
    double total = 0;
    for (auto& x : p) {
        x = d(rng);
        total += x;
    }
    for (auto& x : p) {
        x /= total;
    }
    return p;
}

NoiseSpec spec(double depolarizing, double flip) { return NoiseSpec{true, depolarizing, flip}; }

}  // namespace

TEST(ApplyNoise, ZeroNoiseIsIdentity) {
    const std::vector<double> p{0.1, 0.2, 0.3, 0.4};
    EXPECT_EQ(apply_noise(p, spec(0, 0)), p);
    EXPECT_EQ(apply_noise(p, NoiseSpec{false, 0.5, 0.5}), p);
}

TEST(ApplyNoise, FullDepolarizingIsUniform) {
    const std::vector<double> p{0.7, 0.1, 0.2, 0.0};
    for (double x : apply_noise(p, spec(1, 0))) {
        EXPECT_NEAR(x, 0.25, 1e-15);
    }
}

TEST(ApplyNoise, CertainReadoutFlip) {
    const auto out = apply_noise(std::vector<double>{0.9, 0.1}, spec(0, 1));
    EXPECT_NEAR(out[0], 0.1, 1e-15);
    EXPECT_NEAR(out[1], 0.9, 1e-15);
}

TEST(ApplyNoise, ReadoutFlipMatchesKroneckerMixing) {
    // Two qubits, flip probability f per bit: the mixing matrix is M (x) M with
    // M = [[1-f, f], [f, 1-f]].
    const double f = 0.15;
    const std::vector<double> p{0.4, 0.3, 0.2, 0.1};
    const double m[2][2] = {{1 - f, f}, {f, 1 - f}};
    std::vector<double> want(4, 0.0);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            want[static_cast<std::size_t>(i)] += m[i >> 1][j >> 1] * m[i & 1][j & 1] * p[static_cast<std::size_t>(j)];
        }
    }
    const auto got = apply_noise(p, spec(0, f));
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(got[i], want[i], 1e-15);
    }
}

TEST(ApplyNoise, RejectsOutOfRange) {
    EXPECT_THROW(spec(-0.1, 0).validate(), ConfigError);
    EXPECT_THROW(spec(0, 1.5).validate(), ConfigError);
    EXPECT_THROW((void)apply_noise(std::vector<double>{0.5, 0.5}, spec(2, 0)), ConfigError);
    EXPECT_NO_THROW(spec(1, 1).validate());
}

TEST(ApplyNoise, OutputIsAlwaysADistribution) {
    Rng rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = std::size_t{1} << (1 + trial % 5);
        const auto p = random_distribution(n, rng);
        const auto out = apply_noise(p, spec(u(rng), u(rng)));
        double total = 0;
        for (double x : out) {
            EXPECT_GE(x, 0.0);
            total += x;
        }
        EXPECT_NEAR(total, 1.0, 1e-10);
    }
}

TEST(ApplyNoise, DepolarizingContractsTowardUniform) {
    Rng rng(4);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = std::size_t{1} << (1 + trial % 4);
        const auto p = random_distribution(n, rng);
        const double dp = u(rng);
        const auto out = apply_noise(p, spec(dp, 0));
        const double uniform = 1.0 / static_cast<double>(n);
        double before = 0;
        double after = 0;
        for (std::size_t i = 0; i < n; ++i) {
            before = std::max(before, std::abs(p[i] - uniform));
            after = std::max(after, std::abs(out[i] - uniform));
        }
        EXPECT_LE(after, (1 - dp) * before + 1e-15);
    }
}
