#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "uqmr/fft.hpp"
#include "uqmr/image.hpp"
#include "uqmr/phantom.hpp"
#include "uqmr/rng.hpp"
#include "uqmr/sampling.hpp"

namespace uqmr {

/// Per-coil frequency-domain measurements in centered k-space layout.
/// Entries at unsampled mask locations are exactly zero.
struct MultiCoilKSpace {
    std::vector<ComplexImage> coils;
    Mask2D mask;
    double noise_std = 0.0;  // std of the complex noise per sampled entry

    int n_coils() const { return static_cast<int>(coils.size()); }
};

namespace detail {

inline void check_dims(const ComplexImage& x, const CoilSensitivities& sens, const Mask2D& mask) {
    if (sens.maps.empty()) throw std::invalid_argument("kspace: no coil maps");
    if (x.rows != sens.rows() || x.cols != sens.cols())
        throw std::invalid_argument("kspace: image / sensitivity dimension mismatch");
    if (x.rows != mask.rows || x.cols != mask.cols)
        throw std::invalid_argument("kspace: image / mask dimension mismatch");
}

}  // namespace detail

/// Forward encoding: per coil, mask o FFT2(s_c o x) + mask o n_c, with the
/// unitary FFT and circularly-symmetric complex Gaussian noise of
/// per-component std noise_std/sqrt(2). The noise field is drawn for the
/// full grid in a mask-independent order, so re-running with the same seed
/// and a denser mask reveals the same realization progressively.
inline MultiCoilKSpace forward(const ComplexImage& x, const CoilSensitivities& sens,
                               const Mask2D& mask, double noise_std, uint64_t seed) {
    detail::check_dims(x, sens, mask);
    if (noise_std < 0) throw std::invalid_argument("forward: noise_std must be >= 0");

    MultiCoilKSpace y;
    y.mask = mask;
    y.noise_std = noise_std;
    const double comp_std = noise_std / std::sqrt(2.0);
    for (int c = 0; c < sens.n_coils(); ++c) {
        ComplexImage k(x.rows, x.cols);
        for (size_t i = 0; i < x.size(); ++i) k.data[i] = sens.maps[c].data[i] * x.data[i];
        fft2_inplace(k, false);
        fftshift2_inplace(k);
        if (noise_std > 0) {
            Rng rng(derive_seed(seed, 0x105eu, static_cast<uint64_t>(c)));
            for (size_t i = 0; i < k.size(); ++i) {
                const cplx n(comp_std * rng.normal(), comp_std * rng.normal());
                k.data[i] = mask.on[i] ? k.data[i] + n : cplx(0.0, 0.0);
            }
        } else {
            for (size_t i = 0; i < k.size(); ++i)
                if (!mask.on[i]) k.data[i] = cplx(0.0, 0.0);
        }
        y.coils.push_back(std::move(k));
    }
    return y;
}

/// Adjoint of the forward operator: sum_c conj(s_c) o IFFT2(mask o y_c).
inline ComplexImage adjoint(const MultiCoilKSpace& y, const CoilSensitivities& sens) {
    if (y.n_coils() != sens.n_coils())
        throw std::invalid_argument("adjoint: coil count mismatch");
    if (y.coils.empty()) throw std::invalid_argument("adjoint: empty k-space");
    detail::check_dims(y.coils[0], sens, y.mask);

    ComplexImage out(y.coils[0].rows, y.coils[0].cols);
    for (int c = 0; c < y.n_coils(); ++c) {
        ComplexImage k = y.coils[c];
        for (size_t i = 0; i < k.size(); ++i)
            if (!y.mask.on[i]) k.data[i] = cplx(0.0, 0.0);
        fftshift2_inplace(k);
        fft2_inplace(k, true);
        for (size_t i = 0; i < out.size(); ++i)
            out.data[i] += std::conj(sens.maps[c].data[i]) * k.data[i];
    }
    return out;
}

/// Zero-filled reconstruction x_u: the adjoint applied to the measurements.
inline ComplexImage zero_filled(const MultiCoilKSpace& y, const CoilSensitivities& sens) {
    return adjoint(y, sens);
}

}  // namespace uqmr
