#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "uqmr/downstream.hpp"
#include "uqmr/fft.hpp"
#include "uqmr/image.hpp"
#include "uqmr/rng.hpp"
#include "uqmr/types.hpp"

namespace uqmr {

/// Specification of a randomized synthetic case. `shape_params` holds range
/// endpoints for the per-case random draws; geometry keys are fractions of
/// grid_size, intensity keys are absolute. Any key left out falls back to
/// the documented default (see detail::shape_param_defaults).
struct PhantomSpec {
    PhantomKind kind = PhantomKind::KneeStatic;
    int grid_size = 64;
    VoxelSpacing voxel_spacing{1.0, 1.0, 1.0};
    int n_coils = 1;
    std::map<std::string, double> shape_params;
    uint64_t seed = 0;

    bool operator==(const PhantomSpec&) const = default;

    double param(const std::string& name) const;
    void validate() const;
};

namespace detail {

// Default draw ranges. Shapes are axis-aligned ellipses; the structure of
// interest is drawn last and wins label overlaps.
inline const std::map<std::string, double>& shape_param_defaults() {
    static const std::map<std::string, double> d = {
        // KneeStatic: structure of interest (cartilage analogue)
        {"knee_struct_cx_lo", 0.55},   {"knee_struct_cx_hi", 0.66},
        {"knee_struct_cy_lo", 0.32},   {"knee_struct_cy_hi", 0.44},
        {"knee_struct_ax_lo", 0.14},   {"knee_struct_ax_hi", 0.22},
        {"knee_struct_int_lo", 0.80},  {"knee_struct_int_hi", 0.90},
        // KneeStatic: distractor tissue (bone analogue)
        {"knee_distr_cx_lo", 0.28},    {"knee_distr_cx_hi", 0.40},
        {"knee_distr_cy_lo", 0.58},    {"knee_distr_cy_hi", 0.70},
        {"knee_distr_ax_lo", 0.12},    {"knee_distr_ax_hi", 0.20},
        {"knee_distr_int_lo", 0.31},   {"knee_distr_int_hi", 0.35},
        // CardiacTwoPhase: outer myocardium ellipse and LV blood pool
        {"card_center_lo", 0.45},      {"card_center_hi", 0.55},
        {"card_outer_ax_lo", 0.26},    {"card_outer_ax_hi", 0.34},
        {"card_cavity_frac_lo", 0.55}, {"card_cavity_frac_hi", 0.72},
        {"card_blood_int_lo", 0.82},   {"card_blood_int_hi", 0.92},
        {"card_myo_int_lo", 0.31},     {"card_myo_int_hi", 0.35},
        {"card_ef_lo", 0.30},          {"card_ef_hi", 0.75},
        // shared
        {"background_int", 0.05},
        {"texture_amp", 0.03},
    };
    return d;
}

}  // namespace detail

inline double PhantomSpec::param(const std::string& name) const {
    if (auto it = shape_params.find(name); it != shape_params.end()) return it->second;
    const auto& d = detail::shape_param_defaults();
    auto it = d.find(name);
    if (it == d.end()) throw std::invalid_argument("unknown shape parameter: " + name);
    return it->second;
}

inline void PhantomSpec::validate() const {
    if (grid_size < 16 || (grid_size & (grid_size - 1)) != 0)
        throw std::invalid_argument("grid_size must be >= 16 and a power of two");
    if (n_coils < 1) throw std::invalid_argument("n_coils must be >= 1");
    if (voxel_spacing.dx <= 0 || voxel_spacing.dy <= 0 || voxel_spacing.dz <= 0)
        throw std::invalid_argument("voxel spacing must be positive");

    const double g = grid_size;
    const auto check_inside = [&](double c_lo, double c_hi, double ax_hi, const char* what) {
        if (ax_hi <= 0) throw std::invalid_argument(std::string(what) + ": axes must be positive");
        if ((c_hi + ax_hi) * g > g - 2.0 || (c_lo - ax_hi) * g < 1.0)
            throw std::invalid_argument(std::string(what) + ": shape range exits the grid");
    };
    if (kind == PhantomKind::KneeStatic) {
        check_inside(param("knee_struct_cx_lo"), param("knee_struct_cx_hi"),
                     param("knee_struct_ax_hi"), "knee structure");
        check_inside(param("knee_struct_cy_lo"), param("knee_struct_cy_hi"),
                     param("knee_struct_ax_hi"), "knee structure");
        check_inside(param("knee_distr_cx_lo"), param("knee_distr_cx_hi"),
                     param("knee_distr_ax_hi"), "knee distractor");
        check_inside(param("knee_distr_cy_lo"), param("knee_distr_cy_hi"),
                     param("knee_distr_ax_hi"), "knee distractor");
        if (param("knee_struct_ax_lo") <= 0 || param("knee_distr_ax_lo") <= 0)
            throw std::invalid_argument("ellipse axes must be strictly positive");
    } else {
        check_inside(param("card_center_lo"), param("card_center_hi"), param("card_outer_ax_hi"),
                     "cardiac outer ellipse");
        if (param("card_outer_ax_lo") <= 0)
            throw std::invalid_argument("ellipse axes must be strictly positive");
        // 0 is allowed: identical ED/ES phases, LVEF = 0
        if (param("card_ef_lo") < 0 || param("card_ef_hi") >= 1)
            throw std::invalid_argument("ejection ratio range must lie in [0, 1)");
    }
}

/// One phase of a case: complex image plus its ground-truth labels.
struct PhaseImage {
    ComplexImage image;
    LabelMap labels;
};

struct GroundTruthCase {
    PhantomKind kind = PhantomKind::KneeStatic;
    ComplexImage image;  // for CardiacTwoPhase this aliases the ED phase
    LabelMap labels;
    VoxelSpacing voxel_spacing;
    double true_metric = 0.0;        // cm^3 (knee) or percent (cardiac)
    std::vector<PhaseImage> phases;  // {ED, ES} for CardiacTwoPhase, else empty
    uint64_t seed = 0;
};

/// Per-coil complex sensitivity maps, root-sum-of-squares normalized.
struct CoilSensitivities {
    std::vector<ComplexImage> maps;

    int n_coils() const { return static_cast<int>(maps.size()); }
    int rows() const { return maps.empty() ? 0 : maps[0].rows; }
    int cols() const { return maps.empty() ? 0 : maps[0].cols; }
};

/// Smooth low-spatial-frequency coil maps: one Gaussian lobe per coil placed
/// around the FOV with a gentle linear phase, then RSS-normalized per pixel.
inline CoilSensitivities make_coils(int grid_size, int n_coils, uint64_t seed) {
    if (n_coils < 1) throw std::invalid_argument("make_coils: n_coils must be >= 1");
    Rng rng(derive_seed(seed, 0xc011u));
    const int n = grid_size;
    CoilSensitivities sens;
    sens.maps.reserve(static_cast<size_t>(n_coils));
    for (int c = 0; c < n_coils; ++c) {
        const double ang =
            2.0 * std::numbers::pi * c / n_coils + rng.uniform(-0.2, 0.2);
        const double cx = n / 2.0 + 0.75 * n * std::cos(ang);
        const double cy = n / 2.0 + 0.75 * n * std::sin(ang);
        const double w = 0.6 * n;
        const double ph_a = rng.uniform(-0.4, 0.4), ph_b = rng.uniform(-0.4, 0.4);
        const double ph_0 = rng.uniform(-std::numbers::pi, std::numbers::pi);
        ComplexImage m(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double d2 = ((i - cx) * (i - cx) + (j - cy) * (j - cy)) / (w * w);
                const double mag = std::exp(-0.5 * d2);
                const double ph = ph_0 + ph_a * (i - cx) / n + ph_b * (j - cy) / n;
                m(i, j) = std::polar(mag, ph);
            }
        sens.maps.push_back(std::move(m));
    }
    // RSS-normalize; each lobe is strictly positive so the sum never vanishes
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double rss = 0.0;
            for (const auto& m : sens.maps) rss += std::norm(m(i, j));
            rss = std::sqrt(rss);
            for (auto& m : sens.maps) m(i, j) /= rss;
        }
    return sens;
}

namespace detail {

inline void fill_ellipse(RealImage& img, LabelMap& lab, double cx, double cy, double a, double b,
                         double intensity, int32_t label) {
    for (int i = 0; i < img.rows; ++i)
        for (int j = 0; j < img.cols; ++j) {
            const double u = (i - cx) / a, v = (j - cy) / b;
            if (u * u + v * v <= 1.0) {
                img(i, j) = intensity;
                lab(i, j) = label;
            }
        }
}

/// Band-limited noise: white field low-passed in k-space, unit std, zero mean.
inline RealImage bandlimited_texture(int n, Rng& rng) {
    ComplexImage w(n, n);
    for (auto& z : w.data) z = cplx(rng.normal(), 0.0);
    fft2_inplace(w, false);
    const double kw = n / 10.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            // distance to DC in unshifted FFT layout
            const double di = std::min(i, n - i), dj = std::min(j, n - j);
            w(i, j) *= std::exp(-0.5 * (di * di + dj * dj) / (kw * kw));
        }
    fft2_inplace(w, true);
    RealImage t(n, n);
    double mean = 0.0;
    for (size_t k = 0; k < w.size(); ++k) mean += w.data[k].real();
    mean /= static_cast<double>(w.size());
    double var = 0.0;
    for (size_t k = 0; k < w.size(); ++k) {
        t.data[k] = w.data[k].real() - mean;
        var += t.data[k] * t.data[k];
    }
    const double std = std::sqrt(var / static_cast<double>(t.size()));
    for (auto& v : t.data) v /= (std > 0 ? std : 1.0);
    return t;
}

/// Smooth low-order polynomial phase, bounded away from +-pi.
inline ComplexImage apply_phase(const RealImage& mag, Rng& rng) {
    const int n = mag.rows;
    const double p0 = rng.uniform(-0.4, 0.4);
    const double p1 = rng.uniform(-0.6, 0.6), p2 = rng.uniform(-0.6, 0.6);
    const double p3 = rng.uniform(-0.3, 0.3), p4 = rng.uniform(-0.3, 0.3),
                 p5 = rng.uniform(-0.3, 0.3);
    ComplexImage x(n, mag.cols);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < mag.cols; ++j) {
            const double u = (i - n / 2.0) / n, v = (j - mag.cols / 2.0) / mag.cols;
            const double ph = p0 + p1 * u + p2 * v + p3 * u * v + p4 * u * u + p5 * v * v;
            x(i, j) = std::polar(mag(i, j), ph);
        }
    return x;
}

}  // namespace detail

inline GroundTruthCase make_case(const PhantomSpec& spec) {
    spec.validate();
    Rng rng(derive_seed(spec.seed, 0xca5eu));
    const int n = spec.grid_size;
    const double g = n;
    const double bg = spec.param("background_int");

    GroundTruthCase out;
    out.kind = spec.kind;
    out.voxel_spacing = spec.voxel_spacing;
    out.seed = spec.seed;

    if (spec.kind == PhantomKind::KneeStatic) {
        RealImage mag(n, n, bg);
        LabelMap lab(n, n, kClassBackground);
        const double dcx = g * rng.uniform(spec.param("knee_distr_cx_lo"), spec.param("knee_distr_cx_hi"));
        const double dcy = g * rng.uniform(spec.param("knee_distr_cy_lo"), spec.param("knee_distr_cy_hi"));
        const double da = g * rng.uniform(spec.param("knee_distr_ax_lo"), spec.param("knee_distr_ax_hi"));
        const double db = g * rng.uniform(spec.param("knee_distr_ax_lo"), spec.param("knee_distr_ax_hi"));
        const double di = rng.uniform(spec.param("knee_distr_int_lo"), spec.param("knee_distr_int_hi"));
        detail::fill_ellipse(mag, lab, dcx, dcy, da, db, di, kClassDistractor);

        const double scx = g * rng.uniform(spec.param("knee_struct_cx_lo"), spec.param("knee_struct_cx_hi"));
        const double scy = g * rng.uniform(spec.param("knee_struct_cy_lo"), spec.param("knee_struct_cy_hi"));
        const double sa = g * rng.uniform(spec.param("knee_struct_ax_lo"), spec.param("knee_struct_ax_hi"));
        const double sb = g * rng.uniform(spec.param("knee_struct_ax_lo"), spec.param("knee_struct_ax_hi"));
        const double si = rng.uniform(spec.param("knee_struct_int_lo"), spec.param("knee_struct_int_hi"));
        detail::fill_ellipse(mag, lab, scx, scy, sa, sb, si, kClassStructure);

        const RealImage tex = detail::bandlimited_texture(n, rng);
        const double amp = spec.param("texture_amp");
        for (size_t k = 0; k < mag.size(); ++k)
            mag.data[k] = std::max(0.0, mag.data[k] + amp * tex.data[k]);

        out.image = detail::apply_phase(mag, rng);
        out.labels = lab;
        out.true_metric = volume_cm3(lab, kClassStructure, spec.voxel_spacing);
        return out;
    }

    // CardiacTwoPhase: concentric ventricle shrink between ED and ES
    const double ccx = g * rng.uniform(spec.param("card_center_lo"), spec.param("card_center_hi"));
    const double ccy = g * rng.uniform(spec.param("card_center_lo"), spec.param("card_center_hi"));
    const double oa = g * rng.uniform(spec.param("card_outer_ax_lo"), spec.param("card_outer_ax_hi"));
    const double ob = g * rng.uniform(spec.param("card_outer_ax_lo"), spec.param("card_outer_ax_hi"));
    const double cavity = rng.uniform(spec.param("card_cavity_frac_lo"), spec.param("card_cavity_frac_hi"));
    const double blood = rng.uniform(spec.param("card_blood_int_lo"), spec.param("card_blood_int_hi"));
    const double myo = rng.uniform(spec.param("card_myo_int_lo"), spec.param("card_myo_int_hi"));
    const double ef = rng.uniform(spec.param("card_ef_lo"), spec.param("card_ef_hi"));
    const double shrink = std::sqrt(1.0 - ef);

    const RealImage tex = detail::bandlimited_texture(n, rng);
    const double amp = spec.param("texture_amp");
    Rng phase_rng(derive_seed(spec.seed, 0x9a5eu));

    const auto build_phase = [&](double vent_scale) {
        RealImage mag(n, n, bg);
        LabelMap lab(n, n, kClassBackground);
        detail::fill_ellipse(mag, lab, ccx, ccy, oa, ob, myo, kClassDistractor);
        detail::fill_ellipse(mag, lab, ccx, ccy, vent_scale * cavity * oa, vent_scale * cavity * ob,
                             blood, kClassStructure);
        for (size_t k = 0; k < mag.size(); ++k)
            mag.data[k] = std::max(0.0, mag.data[k] + amp * tex.data[k]);
        PhaseImage ph;
        ph.image = detail::apply_phase(mag, phase_rng);
        ph.labels = lab;
        return ph;
    };
    PhaseImage ed = build_phase(1.0);
    PhaseImage es = build_phase(shrink);
    const double v_ed = volume_cm3(ed.labels, kClassStructure, spec.voxel_spacing);
    const double v_es = volume_cm3(es.labels, kClassStructure, spec.voxel_spacing);
    out.true_metric = ejection_fraction(v_ed, v_es);
    out.image = ed.image;
    out.labels = ed.labels;
    out.phases.push_back(std::move(ed));
    out.phases.push_back(std::move(es));
    return out;
}

/// n cases with i.i.d. shape parameters; case i uses a sub-seed derived from
/// (seed, i), so the cohort is a pure function of (spec_template, n, seed).
inline std::vector<GroundTruthCase> make_cohort(const PhantomSpec& spec_template, int n,
                                                uint64_t seed) {
    if (n < 1) throw std::invalid_argument("make_cohort: n must be >= 1");
    std::vector<GroundTruthCase> cases;
    cases.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        PhantomSpec s = spec_template;
        s.seed = derive_seed(seed, static_cast<uint64_t>(i));
        cases.push_back(make_case(s));
    }
    return cases;
}

}  // namespace uqmr
