#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "qfb/markov.hpp"

using namespace qfb;

namespace {

std::vector<double> theta_grid() {
    std::vector<double> g;
    for (int k = -7; k <= 8; ++k)
        g.push_back(k * pi / 8);
    return g;
}
const std::vector<double> eta_grid{0.2, 0.5, 0.8, 0.95, 1.0};
const std::vector<double> gamma_grid{0.0, 0.05, 0.5};

} // namespace

TEST(StationaryWithFeedback, ZeroGainIsUndriven) {
    for (double a : {-1.0, 0.0, 0.3, 2.0})
        for (double g : gamma_grid) {
            const auto s = stationary_with_feedback(a, 0.0, 0.7, g);
            const auto b = stationary_no_feedback(a, g);
            EXPECT_NEAR(s.bloch.x, b.x, 1e-15);
            EXPECT_NEAR(s.bloch.z, b.z, 1e-15);
        }
}

TEST(StationaryWithFeedback, ExcitedState) {
    const auto s = stationary_with_feedback(0.0, -1.0, 1.0, 0.0);
    EXPECT_EQ(s.bloch, (BlochVector{0, 0, 1}));
    const auto t = stationary_with_feedback(0.0, -1.0, 0.8, 0.0);
    EXPECT_NEAR(t.bloch.z, 2.0 / 3.0, 1e-15);
    EXPECT_EQ(t.bloch.x, 0.0);
}

TEST(StationaryWithFeedback, RejectsBadEfficiency) {
    EXPECT_THROW(stationary_with_feedback(0.0, -1.0, 0.0, 0.0), std::domain_error);
    EXPECT_THROW(stationary_with_feedback(0.0, -1.0, 1.5, 0.0), std::domain_error);
}

TEST(DrivingForTarget, Examples) {
    EXPECT_EQ(driving_for_target(-0.7, 0.0, 0.9, 0.1), 0.0);
    EXPECT_NEAR(driving_for_target(0.4, pi, 0.9, 0.1), 0.0, 1e-15);
    const double l = -(1.0 + std::sqrt(2.0) / 2.0) / 2.0;
    const double a = driving_for_target(l, pi / 4, 1.0, 0.0);
    EXPECT_NEAR(a, 0.25 + l + l * l, 1e-15);
    const auto s = stationary_with_feedback(a, l, 1.0, 0.0);
    EXPECT_NEAR(std::atan2(s.bloch.x, s.bloch.z), pi / 4, 1e-12);
    EXPECT_THROW(driving_for_target(l, pi / 2, 1.0, 0.0), std::domain_error);
}

TEST(RssOfLambda, Examples) {
    // no feedback, no driving: the ground state, on the ray opposite theta0 = 0
    EXPECT_DOUBLE_EQ(rss_of_lambda(0.0, 0.0, 1.0, 0.0), -1.0);
    EXPECT_DOUBLE_EQ(rss_of_lambda(-1.0, 0.0, 1.0, 0.0), 1.0);
    EXPECT_NEAR(std::abs(rss_of_lambda(-1.0, 0.0, 0.8, 0.0)), 2.0 / 3.0, 1e-15);
}

TEST(RssOfLambda, AgreesWithStationaryState) {
    for (double th : theta_grid()) {
        if (is_equatorial(th))
            continue;
        for (double eta : eta_grid)
            for (double g : gamma_grid)
                for (double l : {-2.0, -0.9, -0.3, 0.0, 0.6}) {
                    double r;
                    try {
                        r = rss_of_lambda(l, th, eta, g);
                    } catch (const std::domain_error&) {
                        continue;
                    }
                    const auto s = stationary_with_feedback(driving_for_target(l, th, eta, g), l, eta, g);
                    // signed radius along the target ray
                    const double along = s.bloch.x * std::sin(th) + s.bloch.z * std::cos(th);
                    EXPECT_NEAR(along, r, 1e-12);
                    EXPECT_NEAR(std::abs(along), s.r_ss, 1e-12);
                }
    }
}

TEST(OptimalGain, Examples) {
    const auto g0 = optimal_gain(0.0, 0.8, 0.0);
    EXPECT_NEAR(g0.r0, 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(g0.lambda, -1.0, 1e-15);

    EXPECT_NEAR(optimal_gain(pi / 4, 0.5, 0.0).r0, 0.25881904510252074, 1e-14);

    for (double eta : eta_grid)
        for (double g : gamma_grid) {
            const auto gp = optimal_gain(pi, eta, g);
            EXPECT_NEAR(gp.r0, 1.0, 1e-15);
            EXPECT_NEAR(gp.lambda, 0.0, 1e-15);
        }
}

TEST(OptimalGain, QuadraticResidual) {
    for (double th : theta_grid())
        for (double eta : eta_grid)
            for (double g : gamma_grid) {
                const auto q = markov_quadratic(th, eta, g);
                const auto og = optimal_gain(th, eta, g);
                EXPECT_LT(std::abs(q(og.r0)), 1e-12) << th << ' ' << eta << ' ' << g;
                EXPECT_GE(og.r0, 0.0);
                EXPECT_LE(og.r0, 1.0 + 1e-15);
            }
}

// Dense scan of the signed radius along the target over lambda in [-3, 1].
TEST(OptimalGain, ArgmaxOfScan) {
    for (double th : theta_grid())
        for (double eta : eta_grid)
            for (double g : gamma_grid) {
                double best = -INFINITY;
                for (int i = 0; i <= 400000; ++i) {
                    const double l = -3.0 + 4.0 * i / 400000.0;
                    try {
                        best = std::max(best, rss_of_lambda(l, th, eta, g));
                    } catch (const std::domain_error&) {
                    }
                }
                const auto og = optimal_gain(th, eta, g);
                EXPECT_NEAR(best, og.r0, 1e-6) << th << ' ' << eta << ' ' << g;
                if (!og.equatorial_unstabilizable && og.lambda > -3.0 && og.lambda < 1.0) {
                    EXPECT_LE(best, rss_of_lambda(og.lambda, th, eta, g) + 1e-12);
                }
            }
}

TEST(OptimalGain, ConsistentStationaryState) {
    for (double th : theta_grid()) {
        if (is_equatorial(th))
            continue;
        for (double eta : eta_grid)
            for (double g : gamma_grid) {
                const auto og = optimal_gain(th, eta, g);
                ASSERT_TRUE(og.alpha.has_value());
                const auto s = stationary_with_feedback(*og.alpha, og.lambda, eta, g);
                EXPECT_NEAR(s.r_ss, og.r0, 1e-9);
                if (s.r_ss > 1e-9) {
                    EXPECT_LT(std::abs(wrap_angle(std::atan2(s.bloch.x, s.bloch.z) - th)), 1e-9);
                }
            }
    }
}

TEST(OptimalGain, Equator) {
    for (double th : {pi / 2, -pi / 2}) {
        const auto og = optimal_gain(th, 1.0, 0.0);
        EXPECT_TRUE(og.equatorial_unstabilizable);
        EXPECT_EQ(og.r0, 0.0);
        EXPECT_FALSE(og.alpha.has_value());
    }
}

// Under perfect conditions r0 = 1 right up to the equator, so the approach
// to zero is continuous only once detection or dephasing is imperfect.
TEST(OptimalGain, EquatorialLimit) {
    for (double d : {1e-2, 1e-4, 1e-6})
        EXPECT_DOUBLE_EQ(optimal_gain(pi / 2 - d, 1.0, 0.0).r0, 1.0);
    double prev = 1.0;
    for (double d : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5}) {
        const double r = optimal_gain(pi / 2 - d, 0.8, 0.0).r0;
        EXPECT_LT(r, prev);
        prev = r;
    }
    EXPECT_LT(prev, 1e-4);
    EXPECT_LT(optimal_gain(pi / 2 - 1e-5, 1.0, 0.05).r0, 1e-3);
}

TEST(OptimalGain, MirrorSymmetryUnderDephasing) {
    for (double g : {0.01, 0.05, 0.5, 3.0})
        for (double th = 0.0; th <= pi; th += pi / 64) {
            if (is_equatorial(th))
                continue;
            EXPECT_NEAR(optimal_gain(th, 1.0, g).r0, optimal_gain(pi - th, 1.0, g).r0, 1e-12);
        }
}

TEST(PerfectConditions, Examples) {
    const auto e = perfect_conditions(0.0);
    EXPECT_EQ(e.alpha, 0.0);
    EXPECT_EQ(e.lambda, -1.0);
    const auto g = perfect_conditions(pi);
    EXPECT_NEAR(g.alpha, 0.0, 1e-16);
    EXPECT_NEAR(g.lambda, 0.0, 1e-16);
    const auto a = perfect_conditions(pi / 2);
    const auto b = perfect_conditions(-pi / 2);
    EXPECT_EQ(a.alpha, b.alpha);
    EXPECT_EQ(a.lambda, b.lambda);
    EXPECT_EQ(a.lambda, -0.5);
    EXPECT_EQ(a.alpha, 0.0);
}

TEST(PerfectConditions, MatchesOptimalGain) {
    for (double th : theta_grid()) {
        if (is_equatorial(th))
            continue;
        const auto pc = perfect_conditions(th);
        const auto og = optimal_gain(th, 1.0, 0.0);
        EXPECT_NEAR(pc.lambda, og.lambda, 1e-14);
        EXPECT_NEAR(pc.alpha, *og.alpha, 1e-14);
        EXPECT_DOUBLE_EQ(og.r0, 1.0);
    }
}

TEST(ExcitedStatePurity, Examples) {
    EXPECT_EQ(excited_state_purity(1.0), 1.0);
    EXPECT_NEAR(excited_state_purity(0.8), 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(excited_state_purity(0.5), 1.0 / 3.0, 1e-15);
    for (double eta : eta_grid)
        EXPECT_NEAR(optimal_gain(0.0, eta, 0.3).r0, excited_state_purity(eta), 1e-14);
}

TEST(NonnegativeRoot, Branches) {
    EXPECT_FALSE(nonnegative_root({0, 0, 0}).has_value());
    EXPECT_DOUBLE_EQ(*nonnegative_root({0, 2, -1}), 0.5);
    EXPECT_DOUBLE_EQ(*nonnegative_root({1, 0, -4}), 2.0);
    EXPECT_NEAR(*nonnegative_root({1, -3, 2}), 2.0, 1e-15);
    // cancellation-prone: b >> |c|
    EXPECT_NEAR(*nonnegative_root({1, 1e8, -1}), 1e-8, 1e-22);
}
