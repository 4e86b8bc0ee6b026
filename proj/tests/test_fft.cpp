#include <gtest/gtest.h>

#include <numbers>

#include "uqmr/fft.hpp"
#include "uqmr/rng.hpp"

using namespace uqmr;

namespace {

// brute-force unitary 2D DFT straight from the definition
ComplexImage dft2_reference(const ComplexImage& x, bool inverse) {
    const int R = x.rows, C = x.cols;
    const double sign = inverse ? 1.0 : -1.0;
    ComplexImage out(R, C);
    for (int ki = 0; ki < R; ++ki)
        for (int kj = 0; kj < C; ++kj) {
            cplx acc = 0.0;
            for (int i = 0; i < R; ++i)
                for (int j = 0; j < C; ++j) {
                    const double ang = sign * 2.0 * std::numbers::pi *
                                       (double(ki) * i / R + double(kj) * j / C);
                    acc += x(i, j) * std::polar(1.0, ang);
                }
            out(ki, kj) = acc / std::sqrt(double(R) * C);
        }
    return out;
}

ComplexImage random_image(int r, int c, uint64_t seed) {
    Rng rng(seed);
    ComplexImage x(r, c);
    for (auto& z : x.data) z = cplx(rng.normal(), rng.normal());
    return x;
}

}  // namespace

TEST(Fft, MatchesBruteForceDft) {
    for (int n : {8, 16}) {
        const ComplexImage x = random_image(n, n, 42 + n);
        const ComplexImage want = dft2_reference(x, false);
        const ComplexImage got = fft2(x);
        for (size_t i = 0; i < x.size(); ++i)
            ASSERT_NEAR(std::abs(want.data[i] - got.data[i]), 0.0, 1e-10);
    }
}

TEST(Fft, InverseMatchesBruteForce) {
    const ComplexImage x = random_image(16, 16, 7);
    const ComplexImage want = dft2_reference(x, true);
    const ComplexImage got = ifft2(x);
    for (size_t i = 0; i < x.size(); ++i)
        ASSERT_NEAR(std::abs(want.data[i] - got.data[i]), 0.0, 1e-10);
}

TEST(Fft, RoundTripIdentity) {
    const ComplexImage x = random_image(32, 32, 11);
    const ComplexImage back = ifft2(fft2(x));
    for (size_t i = 0; i < x.size(); ++i)
        ASSERT_NEAR(std::abs(back.data[i] - x.data[i]), 0.0, 1e-12);
}

TEST(Fft, UnitaryParseval) {
    const ComplexImage x = random_image(64, 64, 5);
    EXPECT_NEAR(norm2(fft2(x)), norm2(x), 1e-9);
}

TEST(Fft, ImpulseIsFlat) {
    ComplexImage x(16, 16);
    x(0, 0) = 1.0;
    const ComplexImage k = fft2(x);
    for (const auto& z : k.data) ASSERT_NEAR(std::abs(z), 1.0 / 16.0, 1e-12);
}

TEST(Fft, RejectsNonPowerOfTwo) {
    ComplexImage x(12, 12);
    EXPECT_THROW(fft2(x), std::invalid_argument);
}

TEST(Fft, ShiftIsSelfInverseForEvenDims) {
    const ComplexImage x = random_image(16, 16, 3);
    ComplexImage y = x;
    fftshift2_inplace(y);
    EXPECT_NE(y.data, x.data);
    fftshift2_inplace(y);
    EXPECT_EQ(y.data, x.data);
}

TEST(Fft, ShiftMovesDcToCenter) {
    ComplexImage x(8, 8);
    for (auto& z : x.data) z = 1.0;  // constant image: energy only at DC
    ComplexImage k = fft2(x);
    fftshift2_inplace(k);
    EXPECT_NEAR(std::abs(k(4, 4)), 8.0, 1e-12);
    EXPECT_NEAR(std::abs(k(0, 0)), 0.0, 1e-12);
}
