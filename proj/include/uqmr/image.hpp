#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace uqmr {

using cplx = std::complex<double>;

/// 2D complex-valued field, row-major storage.
struct ComplexImage {
    int rows = 0;
    int cols = 0;
    std::vector<cplx> data;

    ComplexImage() = default;
    ComplexImage(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c) {}

    cplx& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    const cplx& operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return data.size(); }
    bool same_dims(const ComplexImage& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (const auto& z : data)
            if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
        return true;
    }
};

/// 2D real-valued field, row-major storage.
struct RealImage {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    RealImage() = default;
    RealImage(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    const double& operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return data.size(); }
    bool same_dims(const RealImage& o) const { return rows == o.rows && cols == o.cols; }
};

/// Integer label map on the image grid. 0 is background by convention.
struct LabelMap {
    int rows = 0;
    int cols = 0;
    std::vector<int32_t> data;

    LabelMap() = default;
    LabelMap(int r, int c, int32_t fill = 0)
        : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    int32_t& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    const int32_t& operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return data.size(); }
    bool same_dims(const LabelMap& o) const { return rows == o.rows && cols == o.cols; }

    size_t count(int32_t label) const {
        size_t n = 0;
        for (auto v : data) n += (v == label);
        return n;
    }
};

inline RealImage magnitude(const ComplexImage& x) {
    RealImage out(x.rows, x.cols);
    for (size_t i = 0; i < x.size(); ++i) out.data[i] = std::abs(x.data[i]);
    return out;
}

/// Inner product <a, b> = sum conj(a_i) * b_i.
inline cplx dot(const ComplexImage& a, const ComplexImage& b) {
    if (!a.same_dims(b)) throw std::invalid_argument("dot: dimension mismatch");
    cplx s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += std::conj(a.data[i]) * b.data[i];
    return s;
}

inline double norm2(const ComplexImage& a) { return std::sqrt(std::abs(dot(a, a))); }

}  // namespace uqmr
