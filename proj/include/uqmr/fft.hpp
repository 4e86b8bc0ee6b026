#pragma once

#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "uqmr/image.hpp"

namespace uqmr {

namespace detail {

inline bool is_pow2(unsigned n) { return n != 0 && (n & (n - 1)) == 0; }

/// Forward twiddle factors w_n^k = exp(-2pi i k / n) for k < n/2, cached per
/// transform length (thread-local: plans are confined per worker).
inline const std::vector<cplx>& twiddles(int n) {
    thread_local std::vector<std::vector<cplx>> cache;
    size_t log2n = 0;
    while ((1 << log2n) < n) ++log2n;
    if (cache.size() <= log2n) cache.resize(log2n + 1);
    auto& tw = cache[log2n];
    if (tw.empty()) {
        tw.resize(static_cast<size_t>(n / 2));
        for (int k = 0; k < n / 2; ++k)
            tw[k] = std::polar(1.0, -2.0 * std::numbers::pi * k / n);
    }
    return tw;
}

/// In-place radix-2 Cooley-Tukey, no normalization. sign = -1 forward, +1 inverse.
inline void fft_raw(cplx* a, int n, int sign) {
    // bit-reversal permutation
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const std::vector<cplx>& tw = twiddles(n);
    for (int len = 2; len <= n; len <<= 1) {
        const int stride = n / len;
        for (int i = 0; i < n; i += len) {
            for (int k = 0; k < len / 2; ++k) {
                const cplx w = sign < 0 ? tw[static_cast<size_t>(k) * stride]
                                        : std::conj(tw[static_cast<size_t>(k) * stride]);
                const cplx u = a[i + k];
                const cplx v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
            }
        }
    }
}

}  // namespace detail

/// Unitary 2D FFT in place (1/sqrt(N) scaling in both directions).
/// Dimensions must be powers of two.
inline void fft2_inplace(ComplexImage& x, bool inverse = false) {
    const int r = x.rows, c = x.cols;
    if (!detail::is_pow2(static_cast<unsigned>(r)) || !detail::is_pow2(static_cast<unsigned>(c)))
        throw std::invalid_argument("fft2: dimensions must be powers of two");
    const int sign = inverse ? +1 : -1;
    for (int i = 0; i < r; ++i) detail::fft_raw(&x.data[static_cast<size_t>(i) * c], c, sign);
    std::vector<cplx> col(static_cast<size_t>(r));
    for (int j = 0; j < c; ++j) {
        for (int i = 0; i < r; ++i) col[i] = x(i, j);
        detail::fft_raw(col.data(), r, sign);
        for (int i = 0; i < r; ++i) x(i, j) = col[i];
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(r) * c);
    for (auto& z : x.data) z *= scale;
}

inline ComplexImage fft2(const ComplexImage& x) {
    ComplexImage out = x;
    fft2_inplace(out, false);
    return out;
}

inline ComplexImage ifft2(const ComplexImage& x) {
    ComplexImage out = x;
    fft2_inplace(out, true);
    return out;
}

/// Swap quadrants so DC moves between index 0 and the grid center.
/// Self-inverse for even dimensions (all grids here are powers of two).
inline void fftshift2_inplace(ComplexImage& x) {
    const int hr = x.rows / 2, hc = x.cols / 2;
    for (int i = 0; i < hr; ++i)
        for (int j = 0; j < x.cols; ++j)
            std::swap(x(i, j), x((i + hr) % x.rows, (j + hc) % x.cols));
}

inline ComplexImage fftshift2(const ComplexImage& x) {
    ComplexImage out = x;
    fftshift2_inplace(out);
    return out;
}

}  // namespace uqmr
