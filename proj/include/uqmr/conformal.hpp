#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace uqmr {

/// One calibration example: ground-truth metric, heuristic prediction and
/// spread, and the acceleration factor it was produced at.
struct CalibrationRecord {
    double w_true = 0.0;
    double w_hat = 0.0;
    double sigma = 0.0;
    double R = 1.0;
};

/// Symmetric prediction interval [center - q*sigma', center + q*sigma'].
struct PredictionInterval {
    double lo = 0.0;
    double hi = 0.0;
    double width = 0.0;
    double center = 0.0;
    bool unbounded = false;  // +inf sentinel quantile: never satisfiable

    bool contains(double w) const { return lo <= w && w <= hi; }
};

/// Normalized absolute error |w - w_hat| / max(sigma, sigma_floor).
inline double nonconformity_score(const CalibrationRecord& rec, double sigma_floor) {
    if (sigma_floor <= 0) throw std::invalid_argument("nonconformity_score: floor must be > 0");
    return std::abs(rec.w_true - rec.w_hat) / std::max(rec.sigma, sigma_floor);
}

/// Finite-sample conformal quantile: the ceil((1-alpha)(n+1))-th smallest
/// nonconformity score. When that index exceeds n the guarantee is
/// unattainable at this n and +inf is returned rather than clamping.
inline double calibrate(std::span<const CalibrationRecord> records, double alpha,
                        double sigma_floor) {
    if (records.empty()) throw std::invalid_argument("calibrate: no records");
    if (alpha <= 0.0 || alpha >= 1.0) throw std::invalid_argument("calibrate: alpha in (0,1)");
    std::vector<double> scores;
    scores.reserve(records.size());
    for (const auto& r : records) scores.push_back(nonconformity_score(r, sigma_floor));
    std::stable_sort(scores.begin(), scores.end());
    const size_t n = scores.size();
    // guard against binary round-up at integer-valued (1-alpha)(n+1)
    const double raw = (1.0 - alpha) * static_cast<double>(n + 1);
    const auto k = static_cast<long long>(std::ceil(raw - 1e-9));
    if (k > static_cast<long long>(n)) return std::numeric_limits<double>::infinity();
    return scores[static_cast<size_t>(k - 1)];
}

inline PredictionInterval interval(double w_hat, double sigma, double q_hat, double sigma_floor) {
    if (sigma_floor <= 0) throw std::invalid_argument("interval: floor must be > 0");
    if (q_hat < 0) throw std::invalid_argument("interval: q_hat must be >= 0 or +inf");
    PredictionInterval iv;
    iv.center = w_hat;
    if (std::isinf(q_hat)) {
        iv.unbounded = true;
        iv.lo = -std::numeric_limits<double>::infinity();
        iv.hi = std::numeric_limits<double>::infinity();
        iv.width = std::numeric_limits<double>::infinity();
        return iv;
    }
    const double s = std::max(sigma, sigma_floor);
    iv.lo = w_hat - q_hat * s;
    iv.hi = w_hat + q_hat * s;
    iv.width = 2.0 * q_hat * s;
    return iv;
}

/// Fraction of cases whose truth lies inside the (closed) interval.
inline double empirical_coverage(std::span<const PredictionInterval> intervals,
                                 std::span<const double> truths) {
    if (intervals.size() != truths.size())
        throw std::invalid_argument("empirical_coverage: length mismatch");
    if (intervals.empty()) throw std::invalid_argument("empirical_coverage: empty input");
    size_t hit = 0;
    for (size_t i = 0; i < intervals.size(); ++i) hit += intervals[i].contains(truths[i]);
    return static_cast<double>(hit) / static_cast<double>(intervals.size());
}

/// Per-acceleration-factor conformal scaling factors with provenance.
struct CalibratorEntry {
    double R = 1.0;
    double q_hat = 1.0;
    int n_calib = 0;
};

struct CalibratorTable {
    double alpha = 0.1;
    double sigma_floor = 1e-6;
    std::vector<CalibratorEntry> entries;

    const CalibratorEntry* find(double R) const {
        for (const auto& e : entries)
            if (e.R == R) return &e;
        return nullptr;
    }

    double q_for(double R) const {
        const auto* e = find(R);
        if (!e) throw std::out_of_range("calibrator table has no entry for R = " + std::to_string(R));
        return e->q_hat;
    }

    bool covers(std::span<const double> factors) const {
        for (double R : factors)
            if (!find(R)) return false;
        return true;
    }
};

/// Build a per-R table from records grouped by their acceleration factor.
inline CalibratorTable calibrate_per_factor(std::span<const CalibrationRecord> records,
                                            std::span<const double> factors, double alpha,
                                            double sigma_floor) {
    CalibratorTable table;
    table.alpha = alpha;
    table.sigma_floor = sigma_floor;
    for (double R : factors) {
        std::vector<CalibrationRecord> group;
        for (const auto& r : records)
            if (r.R == R) group.push_back(r);
        if (group.empty())
            throw std::invalid_argument("calibrate_per_factor: no records for R = " +
                                        std::to_string(R));
        table.entries.push_back({R, calibrate(group, alpha, sigma_floor),
                                 static_cast<int>(group.size())});
    }
    return table;
}

}  // namespace uqmr
