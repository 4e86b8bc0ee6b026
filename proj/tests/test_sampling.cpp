#include <gtest/gtest.h>

#include <set>

#include "uqmr/sampling.hpp"

using namespace uqmr;

namespace {

std::set<std::pair<int, int>> points_of(const Mask2D& m) {
    std::set<std::pair<int, int>> pts;
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j)
            if (m(i, j)) pts.insert({i, j});
    return pts;
}

size_t lines_of(const Mask2D& m) {
    size_t lines = 0;
    for (int i = 0; i < m.rows; ++i) {
        bool full = true;
        for (int j = 0; j < m.cols; ++j) full &= (m(i, j) != 0);
        lines += full;
    }
    return lines;
}

}  // namespace

TEST(PoissonDisc, FullSamplingAtUnitR) {
    const SamplingMask m = poisson_disc_mask({64, 64}, 1.0, 4, 1);
    EXPECT_EQ(m.sampled(), m.total());
    EXPECT_DOUBLE_EQ(acceleration_of(m), 1.0);
}

TEST(PoissonDisc, RealizedCountWithinTenPercent) {
    // 4096 / 4 +- 10%
    const SamplingMask m = poisson_disc_mask({64, 64}, 4.0, 4, 7);
    EXPECT_GE(m.sampled(), 922u);
    EXPECT_LE(m.sampled(), 1127u);
}

TEST(PoissonDisc, CenterRegionFullySampled) {
    const SamplingMask m = poisson_disc_mask({64, 64}, 8.0, 4, 3);
    const Mask2D& g = m.phases[0];
    for (int i = 0; i < 64; ++i)
        for (int j = 0; j < 64; ++j)
            if (std::hypot(i - 32.0, j - 32.0) <= 4.0) ASSERT_TRUE(g(i, j));
}

TEST(PoissonDisc, DeterministicUnderSeed) {
    const SamplingMask a = poisson_disc_mask({64, 64}, 8.0, 4, 5);
    const SamplingMask b = poisson_disc_mask({64, 64}, 8.0, 4, 5);
    EXPECT_EQ(a.phases[0].on, b.phases[0].on);
    const SamplingMask c = poisson_disc_mask({64, 64}, 8.0, 4, 6);
    EXPECT_NE(a.phases[0].on, c.phases[0].on);
}

TEST(PoissonDisc, UnreachableTargetReportsRealizedR) {
    // calibration disk alone exceeds the sample budget for R = 32
    try {
        poisson_disc_mask({64, 64}, 32.0, 12, 1);
        FAIL() << "expected MaskGenerationError";
    } catch (const MaskGenerationError& e) {
        EXPECT_GT(e.realized_R, 0.0);
        EXPECT_LT(e.realized_R, 32.0);
    }
}

TEST(PoissonDisc, RejectsBadArguments) {
    EXPECT_THROW(poisson_disc_mask({64, 64}, 0.5, 4, 1), std::invalid_argument);
    EXPECT_THROW(poisson_disc_mask({64, 64}, 4.0, 40, 1), std::invalid_argument);
}

TEST(AccelerationOf, HandComputedValues) {
    SamplingMask half;
    half.phases.emplace_back(8, 8, 0);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 4; ++j) half.phases[0](i, j) = 1;
    EXPECT_DOUBLE_EQ(acceleration_of(half), 2.0);

    SamplingMask empty;
    empty.phases.emplace_back(8, 8, 0);
    EXPECT_THROW(acceleration_of(empty), std::invalid_argument);
}

TEST(AccelerationOf, GeneratedSixteenX) {
    const SamplingMask m = poisson_disc_mask({64, 64}, 16.0, 2, 3);
    const double r = acceleration_of(m);
    EXPECT_GE(r, 14.4);
    EXPECT_LE(r, 17.6);
}

TEST(Vista, FullSamplingAtUnitR) {
    const SamplingMask m = vista_mask({64, 2}, 1.0, 1);
    EXPECT_EQ(m.phases.size(), 2u);
    EXPECT_EQ(m.sampled(), m.total());
}

TEST(Vista, LineBudgetNearTarget) {
    // 128 line slots / 8 = 16 -> within [14, 18]
    const SamplingMask m = vista_mask({64, 2}, 8.0, 5);
    const size_t total_lines = lines_of(m.phases[0]) + lines_of(m.phases[1]);
    EXPECT_GE(total_lines, 14u);
    EXPECT_LE(total_lines, 18u);
}

TEST(Vista, PerFrameAndAggregateTolerances) {
    for (uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        for (double R : {4.0, 8.0, 16.0}) {
            const SamplingMask m = vista_mask({64, 4}, R, seed, 0);
            EXPECT_NEAR(acceleration_of(m), R, 0.10 * R) << "seed " << seed << " R " << R;
            for (const auto& ph : m.phases) {
                const double fr = 64.0 / static_cast<double>(lines_of(ph));
                EXPECT_NEAR(fr, R, 0.15 * R) << "seed " << seed << " R " << R;
            }
        }
    }
}

TEST(Vista, AdjacentFrameOverlapBounded) {
    for (uint64_t seed : {10u, 11u, 12u, 13u, 14u, 15u, 16u, 17u, 18u, 19u}) {
        const SamplingMask m = vista_mask({64, 4}, 4.0, seed, 0, 0.5);
        for (size_t t = 1; t < m.phases.size(); ++t) {
            size_t shared = 0, lines = 0;
            for (int k = 0; k < 64; ++k) {
                lines += (m.phases[t](k, 0) != 0);
                shared += (m.phases[t](k, 0) && m.phases[t - 1](k, 0));
            }
            EXPECT_LE(shared, static_cast<size_t>(0.5 * lines) + 1) << "seed " << seed;
        }
    }
}

TEST(Vista, CenterLinesAlwaysOn) {
    const SamplingMask m = vista_mask({64, 3}, 16.0, 2, 1);
    for (const auto& ph : m.phases)
        for (int k = 31; k <= 33; ++k)
            for (int j = 0; j < 64; ++j) ASSERT_TRUE(ph(k, j));
}

TEST(NestedSchedule, TwoFactorNesting) {
    const AccelerationSchedule s =
        nested_schedule(MaskKind::PoissonDisc, {64, 64}, {32.0, 4.0}, 4, 9);
    const auto sparse = points_of(s.masks[0].phases[0]);
    const auto dense = points_of(s.masks[1].phases[0]);
    for (const auto& p : sparse) ASSERT_TRUE(dense.count(p));
}

TEST(NestedSchedule, SingleFactor) {
    const AccelerationSchedule s = nested_schedule(MaskKind::PoissonDisc, {64, 64}, {4.0}, 4, 9);
    EXPECT_EQ(s.masks.size(), 1u);
    EXPECT_NEAR(acceleration_of(s.masks[0]), 4.0, 0.4);
}

TEST(NestedSchedule, DefaultEightSteps) {
    const AccelerationSchedule s = nested_schedule(
        MaskKind::PoissonDisc, {64, 64}, AccelerationSchedule::default_factors(), 4, 21);
    ASSERT_EQ(s.masks.size(), 8u);
    size_t prev = 0;
    for (size_t t = 0; t < s.masks.size(); ++t) {
        const size_t count = s.masks[t].sampled();
        EXPECT_GE(count, prev);
        prev = count;
        EXPECT_NEAR(acceleration_of(s.masks[t]), s.factors[t], 0.10 * s.factors[t]);
        // center region present at every step
        const Mask2D& g = s.masks[t].phases[0];
        for (int i = 0; i < 64; ++i)
            for (int j = 0; j < 64; ++j)
                if (std::hypot(i - 32.0, j - 32.0) <= 4.0) ASSERT_TRUE(g(i, j));
    }
    // exact set inclusion between every adjacent pair
    for (size_t t = 0; t + 1 < s.masks.size(); ++t) {
        const auto a = points_of(s.masks[t].phases[0]);
        const auto b = points_of(s.masks[t + 1].phases[0]);
        for (const auto& p : a) ASSERT_TRUE(b.count(p));
    }
}

TEST(NestedSchedule, VistaNestingPerPhase) {
    const AccelerationSchedule s = nested_schedule(
        MaskKind::VistaLike, {64, 2}, AccelerationSchedule::default_factors(), 0, 13);
    for (size_t t = 0; t + 1 < s.masks.size(); ++t)
        for (size_t p = 0; p < 2; ++p) {
            const auto a = points_of(s.masks[t].phases[p]);
            const auto b = points_of(s.masks[t + 1].phases[p]);
            for (const auto& q : a) ASSERT_TRUE(b.count(q));
        }
    for (size_t t = 0; t < s.masks.size(); ++t)
        EXPECT_NEAR(acceleration_of(s.masks[t]), s.factors[t], 0.10 * s.factors[t]);
}

TEST(NestedSchedule, DeterministicUnderSeed) {
    const AccelerationSchedule a =
        nested_schedule(MaskKind::PoissonDisc, {64, 64}, {16.0, 8.0, 4.0}, 4, 5);
    const AccelerationSchedule b =
        nested_schedule(MaskKind::PoissonDisc, {64, 64}, {16.0, 8.0, 4.0}, 4, 5);
    for (size_t t = 0; t < a.masks.size(); ++t)
        EXPECT_EQ(a.masks[t].phases[0].on, b.masks[t].phases[0].on);
}

TEST(NestedSchedule, RejectsNonDecreasingFactors) {
    EXPECT_THROW(nested_schedule(MaskKind::PoissonDisc, {64, 64}, {4.0, 8.0}, 4, 1),
                 std::invalid_argument);
    EXPECT_THROW(nested_schedule(MaskKind::PoissonDisc, {64, 64}, {}, 4, 1),
                 std::invalid_argument);
}
