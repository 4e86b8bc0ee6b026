#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "uqmr/image.hpp"

namespace uqmr {

struct QualityReport {
    double ssim = 0.0;
    double psnr = 0.0;  // dB; +inf when MSE == 0
    double dice = 0.0;
};

/// Windowed SSIM on magnitude images: 7x7 uniform window, stabilizers
/// k1 = 0.01, k2 = 0.03, averaged over fully-interior windows. When no data
/// range is supplied it is taken from the reference b (max - min); a
/// degenerate range falls back to exact-equality comparison.
inline double ssim(const RealImage& a, const RealImage& b,
                   std::optional<double> data_range = std::nullopt, int window = 7) {
    if (!a.same_dims(b)) throw std::invalid_argument("ssim: dimension mismatch");
    double range;
    if (data_range) {
        range = *data_range;
    } else {
        const auto [mn, mx] = std::minmax_element(b.data.begin(), b.data.end());
        range = *mx - *mn;
    }
    if (range <= 0.0) return a.data == b.data ? 1.0 : 0.0;

    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);
    const int half = window / 2;
    const int nw = window * window;
    if (a.rows < window || a.cols < window)
        throw std::invalid_argument("ssim: image smaller than window");

    double acc = 0.0;
    long count = 0;
    for (int r = half; r < a.rows - half; ++r)
        for (int c = half; c < a.cols - half; ++c) {
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            for (int i = -half; i <= half; ++i)
                for (int j = -half; j <= half; ++j) {
                    const double va = a(r + i, c + j), vb = b(r + i, c + j);
                    sa += va;
                    sb += vb;
                    saa += va * va;
                    sbb += vb * vb;
                    sab += va * vb;
                }
            const double ma = sa / nw, mb = sb / nw;
            // unbiased (n-1) sample statistics
            const double va = (saa - sa * ma) / (nw - 1);
            const double vb = (sbb - sb * mb) / (nw - 1);
            const double cov = (sab - sa * mb) / (nw - 1);
            acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                   ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return acc / static_cast<double>(count);
}

inline double psnr(const RealImage& a, const RealImage& b, double data_range) {
    if (!a.same_dims(b)) throw std::invalid_argument("psnr: dimension mismatch");
    if (data_range <= 0) throw std::invalid_argument("psnr: data_range must be positive");
    double mse = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(data_range * data_range / mse);
}

/// Dice coefficient 2|A n B| / (|A| + |B|) for one label class;
/// two empty masks count as a perfect match.
inline double dice(const LabelMap& s1, const LabelMap& s2, int32_t class_id) {
    if (!s1.same_dims(s2)) throw std::invalid_argument("dice: dimension mismatch");
    size_t na = 0, nb = 0, inter = 0;
    for (size_t i = 0; i < s1.size(); ++i) {
        const bool ia = s1.data[i] == class_id, ib = s2.data[i] == class_id;
        na += ia;
        nb += ib;
        inter += (ia && ib);
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

}  // namespace uqmr
