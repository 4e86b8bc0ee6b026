#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "uqmr/image.hpp"
#include "uqmr/types.hpp"

namespace uqmr {

using SegmentationMask = LabelMap;

enum class MetricKind { VolumeCm3, LvefPercent };

/// Rule-based segmenter settings: Gaussian smoothing followed by fixed
/// intensity thresholds and largest-connected-component selection.
/// The thresholds are frozen constants tuned once on noiseless phantoms;
/// they sit at the midpoint of the smoothed intensity transition of the
/// corresponding tissue boundary, so the recovered contour tracks the
/// generating geometry.
struct SegmenterParams {
    double sigma_blur = 0.5;
    int blur_radius = 2;
    double threshold_structure = 0.45;
    double threshold_tissue = 0.19;
};

inline SegmenterParams default_segmenter(PhantomKind kind) {
    SegmenterParams p;
    if (kind == PhantomKind::CardiacTwoPhase) {
        // blood pool is surrounded by myocardium, not background
        p.threshold_structure = 0.60;
    }
    return p;
}

namespace detail {

inline RealImage gaussian_blur(const RealImage& x, double sigma, int radius) {
    if (sigma <= 0.0 || radius < 1) return x;
    std::vector<double> k(static_cast<size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[i + radius];
    }
    for (auto& w : k) w /= sum;

    const auto reflect = [](int i, int n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
        return i;
    };
    RealImage tmp(x.rows, x.cols), out(x.rows, x.cols);
    for (int r = 0; r < x.rows; ++r)
        for (int c = 0; c < x.cols; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[i + radius] * x(r, reflect(c + i, x.cols));
            tmp(r, c) = acc;
        }
    for (int r = 0; r < x.rows; ++r)
        for (int c = 0; c < x.cols; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[i + radius] * tmp(reflect(r + i, x.rows), c);
            out(r, c) = acc;
        }
    return out;
}

/// Keep only the largest 4-connected component of `mask` (ties resolved by
/// first occurrence in row-major scan order, so the result is deterministic).
inline void keep_largest_component(std::vector<uint8_t>& mask, int rows, int cols) {
    std::vector<int32_t> comp(mask.size(), -1);
    std::vector<size_t> stack;
    int32_t n_comp = 0;
    size_t best_size = 0;
    int32_t best_comp = -1;
    for (size_t start = 0; start < mask.size(); ++start) {
        if (!mask[start] || comp[start] >= 0) continue;
        size_t sz = 0;
        stack.push_back(start);
        comp[start] = n_comp;
        while (!stack.empty()) {
            const size_t p = stack.back();
            stack.pop_back();
            ++sz;
            const int r = static_cast<int>(p) / cols, c = static_cast<int>(p) % cols;
            const int nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
            for (const auto& q : nb) {
                if (q[0] < 0 || q[0] >= rows || q[1] < 0 || q[1] >= cols) continue;
                const size_t qi = static_cast<size_t>(q[0]) * cols + q[1];
                if (mask[qi] && comp[qi] < 0) {
                    comp[qi] = n_comp;
                    stack.push_back(qi);
                }
            }
        }
        if (sz > best_size) {
            best_size = sz;
            best_comp = n_comp;
        }
        ++n_comp;
    }
    if (n_comp <= 1) return;
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i] && comp[i] != best_comp) mask[i] = 0;
}

}  // namespace detail

/// Deterministic segmentation: magnitude -> Gaussian smoothing -> per-class
/// thresholding -> largest connected component per foreground class.
inline SegmentationMask segment(const ComplexImage& x, const SegmenterParams& p) {
    const RealImage smoothed = detail::gaussian_blur(magnitude(x), p.sigma_blur, p.blur_radius);
    const size_t n = smoothed.size();
    std::vector<uint8_t> structure(n, 0), tissue(n, 0);
    for (size_t i = 0; i < n; ++i) {
        const double v = smoothed.data[i];
        if (v > p.threshold_structure)
            structure[i] = 1;
        else if (v > p.threshold_tissue)
            tissue[i] = 1;
    }
    detail::keep_largest_component(structure, x.rows, x.cols);
    detail::keep_largest_component(tissue, x.rows, x.cols);
    SegmentationMask out(x.rows, x.cols, kClassBackground);
    for (size_t i = 0; i < n; ++i) {
        if (structure[i])
            out.data[i] = kClassStructure;
        else if (tissue[i])
            out.data[i] = kClassDistractor;
    }
    return out;
}

inline SegmentationMask segment(const ComplexImage& x, PhantomKind kind) {
    return segment(x, default_segmenter(kind));
}

/// Volume of one label class in cm^3: voxel count * dx*dy*dz / 1000.
inline double volume_cm3(const SegmentationMask& s, int32_t class_id, const VoxelSpacing& sp) {
    if (sp.dx <= 0 || sp.dy <= 0 || sp.dz <= 0)
        throw std::invalid_argument("volume_cm3: spacing must be positive");
    if (class_id != kClassBackground && class_id != kClassStructure && class_id != kClassDistractor)
        throw std::invalid_argument("volume_cm3: unknown class id " + std::to_string(class_id));
    return static_cast<double>(s.count(class_id)) * sp.voxel_mm3() / 1000.0;
}

/// LVEF = (v_ED - v_ES) / v_ED * 100%.
inline double ejection_fraction(double v_ed, double v_es) {
    if (v_ed <= 0.0) throw std::domain_error("ejection_fraction: v_ED must be positive");
    return (v_ed - v_es) / v_ed * 100.0;
}

/// Monte-Carlo samples of a scalar clinical metric.
struct MetricDistribution {
    std::vector<double> samples;
    double mean = 0.0;
    double std = 0.0;  // unbiased (n-1) sample standard deviation
    MetricKind kind = MetricKind::VolumeCm3;
    size_t excluded = 0;  // degenerate LVEF pairings dropped
};

inline MetricDistribution make_metric_distribution(std::vector<double> samples, MetricKind kind,
                                                   size_t excluded = 0) {
    if (samples.empty()) throw std::invalid_argument("metric distribution needs >= 1 sample");
    MetricDistribution d;
    d.samples = std::move(samples);
    d.kind = kind;
    d.excluded = excluded;
    double s = 0.0;
    for (double v : d.samples) s += v;
    d.mean = s / static_cast<double>(d.samples.size());
    if (d.samples.size() > 1) {
        double ss = 0.0;
        for (double v : d.samples) ss += (v - d.mean) * (v - d.mean);
        d.std = std::sqrt(ss / static_cast<double>(d.samples.size() - 1));
    }
    return d;
}

/// Segment each reconstruction sample and compute the structure volume.
inline MetricDistribution propagate_volume(std::span<const ComplexImage> samples, PhantomKind kind,
                                           int32_t class_id, const VoxelSpacing& sp) {
    if (samples.size() < 2) throw std::invalid_argument("propagate_volume: need M >= 2 samples");
    std::vector<double> vols;
    vols.reserve(samples.size());
    for (const auto& x : samples) vols.push_back(volume_cm3(segment(x, kind), class_id, sp));
    return make_metric_distribution(std::move(vols), MetricKind::VolumeCm3);
}

/// LVEF over all (ED, ES) sample pairings; pairings with non-positive v_ED
/// are excluded and counted.
inline MetricDistribution propagate_lvef(std::span<const ComplexImage> samples_ed,
                                         std::span<const ComplexImage> samples_es, PhantomKind kind,
                                         int32_t class_id, const VoxelSpacing& sp) {
    if (samples_ed.size() < 2 || samples_es.size() < 2)
        throw std::invalid_argument("propagate_lvef: need M >= 2 samples per phase");
    std::vector<double> v_ed, v_es;
    for (const auto& x : samples_ed) v_ed.push_back(volume_cm3(segment(x, kind), class_id, sp));
    for (const auto& x : samples_es) v_es.push_back(volume_cm3(segment(x, kind), class_id, sp));
    std::vector<double> efs;
    efs.reserve(v_ed.size() * v_es.size());
    size_t excluded = 0;
    for (double ed : v_ed)
        for (double es : v_es) {
            if (ed <= 0.0) {
                ++excluded;
                continue;
            }
            efs.push_back(ejection_fraction(ed, es));
        }
    if (efs.empty())
        throw std::domain_error("propagate_lvef: all pairings degenerate (v_ED <= 0)");
    return make_metric_distribution(std::move(efs), MetricKind::LvefPercent, excluded);
}

}  // namespace uqmr
