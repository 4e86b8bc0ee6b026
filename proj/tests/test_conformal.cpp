#include <gtest/gtest.h>

#include <cmath>

#include "uqmr/conformal.hpp"
#include "uqmr/rng.hpp"

using namespace uqmr;

namespace {

std::vector<CalibrationRecord> records_with_scores(const std::vector<double>& scores) {
    // sigma = 1 makes the score equal |w_true - w_hat|
    std::vector<CalibrationRecord> recs;
    for (double s : scores) recs.push_back({s, 0.0, 1.0, 1.0});
    return recs;
}

}  // namespace

TEST(Score, HandValues) {
    EXPECT_DOUBLE_EQ(nonconformity_score({5.0, 4.0, 0.5, 1.0}, 1e-6), 2.0);
    EXPECT_DOUBLE_EQ(nonconformity_score({3.0, 3.0, 0.7, 1.0}, 1e-6), 0.0);
    EXPECT_NEAR(nonconformity_score({1.001, 1.0, 0.0, 1.0}, 1e-6), 1000.0, 1e-6);
    EXPECT_THROW(nonconformity_score({1, 1, 1, 1}, 0.0), std::invalid_argument);
}

TEST(Calibrate, TenRecordsAtTenPercentTakesMaximum) {
    // k = ceil(0.9 * 11) = 10 -> the largest of the 10 scores
    const auto recs = records_with_scores({3, 1, 4, 1.5, 9, 2.6, 5, 3.5, 8, 7});
    EXPECT_DOUBLE_EQ(calibrate(recs, 0.1, 1e-6), 9.0);
}

TEST(Calibrate, FiveRecordsAtTenPercentIsUnattainable) {
    // k = ceil(0.9 * 6) = 6 > 5 -> +inf sentinel, never clamped
    const auto recs = records_with_scores({1, 2, 3, 4, 5});
    EXPECT_TRUE(std::isinf(calibrate(recs, 0.1, 1e-6)));
}

TEST(Calibrate, ExactOrderStatisticOnIntegerScores) {
    for (int n : {5, 10, 20}) {
        std::vector<double> scores;
        for (int i = 1; i <= n; ++i) scores.push_back(i);
        for (int j = 1; j <= n; ++j) {
            // alpha chosen so (1-alpha)(n+1) = j exactly
            const double alpha = 1.0 - static_cast<double>(j) / (n + 1);
            EXPECT_DOUBLE_EQ(calibrate(records_with_scores(scores), alpha, 1e-6),
                             static_cast<double>(j))
                << "n=" << n << " j=" << j;
        }
    }
}

TEST(Calibrate, MonotoneInConfidence) {
    const auto recs = records_with_scores({0.3, 1.2, 0.5, 2.0, 0.9, 1.7, 0.1, 1.1, 0.6, 1.4});
    double prev = 0.0;
    for (double alpha : {0.5, 0.4, 0.3, 0.2, 0.1}) {
        const double q = calibrate(recs, alpha, 1e-6);
        EXPECT_GE(q, prev);
        prev = q;
    }
}

// Monte-Carlo quantile of the half-normal: the 0.9(n+1)/n order statistic at
// n = 9999 approaches Phi^-1(0.95) = 1.645
TEST(Calibrate, HalfNormalQuantile) {
    Rng rng(2024);
    std::vector<CalibrationRecord> recs;
    for (int i = 0; i < 9999; ++i) recs.push_back({std::abs(rng.normal()), 0.0, 1.0, 1.0});
    EXPECT_NEAR(calibrate(recs, 0.1, 1e-6), 1.645, 0.03);
}

TEST(Calibrate, Errors) {
    EXPECT_THROW(calibrate(std::vector<CalibrationRecord>{}, 0.1, 1e-6), std::invalid_argument);
    const auto recs = records_with_scores({1, 2});
    EXPECT_THROW(calibrate(recs, 0.0, 1e-6), std::invalid_argument);
    EXPECT_THROW(calibrate(recs, 1.0, 1e-6), std::invalid_argument);
}

TEST(Interval, HandValues) {
    const PredictionInterval iv = interval(10.0, 2.0, 1.5, 1e-6);
    EXPECT_DOUBLE_EQ(iv.lo, 7.0);
    EXPECT_DOUBLE_EQ(iv.hi, 13.0);
    EXPECT_DOUBLE_EQ(iv.width, 6.0);
    EXPECT_DOUBLE_EQ(iv.center, 10.0);
    EXPECT_FALSE(iv.unbounded);
}

TEST(Interval, UnitQuantileReproducesOneStdInterval) {
    const PredictionInterval iv = interval(4.0, 0.5, 1.0, 1e-6);
    EXPECT_DOUBLE_EQ(iv.lo, 3.5);
    EXPECT_DOUBLE_EQ(iv.hi, 4.5);
}

TEST(Interval, SigmaFloorControlsWidth) {
    const PredictionInterval iv = interval(1.0, 0.0, 2.0, 1e-3);
    EXPECT_DOUBLE_EQ(iv.width, 2.0 * 2.0 * 1e-3);
}

TEST(Interval, UnboundedSentinel) {
    const PredictionInterval iv =
        interval(1.0, 0.5, std::numeric_limits<double>::infinity(), 1e-6);
    EXPECT_TRUE(iv.unbounded);
    EXPECT_TRUE(std::isinf(iv.width));
    EXPECT_TRUE(iv.contains(-1e12) && iv.contains(1e12));
}

// symmetry and width identity on a dyadic grid where the arithmetic is exact
TEST(Interval, ExactSymmetryOnDyadicInputs) {
    Rng rng(5);
    for (int t = 0; t < 200; ++t) {
        const double c = static_cast<double>(static_cast<int>(rng.below(2048)) - 1024) / 64.0;
        const double s = static_cast<double>(rng.below(512)) / 128.0;
        const double q = static_cast<double>(rng.below(64)) / 16.0;
        const PredictionInterval iv = interval(c, s, q, 1.0 / 1024.0);
        ASSERT_EQ(iv.center - iv.lo, iv.hi - iv.center);
        ASSERT_EQ(iv.width, 2.0 * q * std::max(s, 1.0 / 1024.0));
    }
}

TEST(Coverage, HandValues) {
    std::vector<PredictionInterval> ivs = {interval(1, 1, 1, 1e-6), interval(5, 2, 1, 1e-6)};
    std::vector<double> center_truths = {1.0, 5.0};
    EXPECT_DOUBLE_EQ(empirical_coverage(ivs, center_truths), 1.0);
    std::vector<double> outside = {10.0, -10.0};
    EXPECT_DOUBLE_EQ(empirical_coverage(ivs, outside), 0.0);
    std::vector<double> boundary = {2.0, 3.0};  // hi of first, lo of second
    EXPECT_DOUBLE_EQ(empirical_coverage(ivs, boundary), 1.0);  // closed interval
    std::vector<double> short_truths = {1.0};
    EXPECT_THROW(empirical_coverage(ivs, short_truths), std::invalid_argument);
}

// Monte-Carlo check of the finite-sample marginal guarantee: mean coverage
// over resampled calibration/test splits lies in [1-alpha, 1-alpha+1/(n+1)]
// up to simulation error.
TEST(Coverage, SplitConformalGuarantee) {
    Rng rng(31337);
    const int n_calib = 50, n_test = 100, trials = 400;
    double mean_cov = 0.0;
    for (int t = 0; t < trials; ++t) {
        std::vector<CalibrationRecord> calib;
        for (int i = 0; i < n_calib; ++i) {
            const double sigma = std::exp(rng.normal(std::log(0.5), 0.4));
            const double w = rng.normal(10.0, 2.0);
            calib.push_back({w, w + 2.0 * sigma * rng.normal(), sigma, 1.0});
        }
        const double q = calibrate(calib, 0.1, 1e-6);
        ASSERT_FALSE(std::isinf(q));
        std::vector<PredictionInterval> ivs;
        std::vector<double> truths;
        for (int i = 0; i < n_test; ++i) {
            const double sigma = std::exp(rng.normal(std::log(0.5), 0.4));
            const double w = rng.normal(10.0, 2.0);
            ivs.push_back(interval(w + 2.0 * sigma * rng.normal(), sigma, q, 1e-6));
            truths.push_back(w);
        }
        mean_cov += empirical_coverage(ivs, truths);
    }
    mean_cov /= trials;
    EXPECT_GE(mean_cov, 0.89);
    EXPECT_LE(mean_cov, 0.93);
}

TEST(CalibratorTable, LookupAndCoverage) {
    CalibratorTable t;
    t.entries = {{32.0, 3.5, 10}, {4.0, 2.0, 10}};
    EXPECT_DOUBLE_EQ(t.q_for(32.0), 3.5);
    EXPECT_THROW(t.q_for(8.0), std::out_of_range);
    std::vector<double> ok = {32.0, 4.0}, missing = {32.0, 8.0};
    EXPECT_TRUE(t.covers(ok));
    EXPECT_FALSE(t.covers(missing));
}

TEST(CalibratorTable, PerFactorGrouping) {
    std::vector<CalibrationRecord> recs;
    for (int i = 1; i <= 10; ++i) recs.push_back({double(i), 0.0, 1.0, 8.0});
    for (int i = 1; i <= 10; ++i) recs.push_back({double(2 * i), 0.0, 1.0, 4.0});
    std::vector<double> factors = {8.0, 4.0};
    const CalibratorTable t = calibrate_per_factor(recs, factors, 0.1, 1e-6);
    EXPECT_DOUBLE_EQ(t.q_for(8.0), 10.0);
    EXPECT_DOUBLE_EQ(t.q_for(4.0), 20.0);
    std::vector<double> missing = {2.0};
    EXPECT_THROW(calibrate_per_factor(recs, missing, 0.1, 1e-6), std::invalid_argument);
}
