#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "uqmr/rng.hpp"

namespace uqmr {

enum class MaskKind { PoissonDisc, VistaLike, Full };

inline std::string to_string(MaskKind k) {
    switch (k) {
        case MaskKind::PoissonDisc: return "PoissonDisc";
        case MaskKind::VistaLike: return "VistaLike";
        default: return "Full";
    }
}

inline MaskKind mask_kind_from_string(const std::string& s) {
    if (s == "PoissonDisc") return MaskKind::PoissonDisc;
    if (s == "VistaLike") return MaskKind::VistaLike;
    if (s == "Full") return MaskKind::Full;
    throw std::invalid_argument("unknown mask kind: " + s);
}

/// Binary k-space mask in centered layout: DC sits at (rows/2, cols/2).
struct Mask2D {
    int rows = 0;
    int cols = 0;
    std::vector<uint8_t> on;

    Mask2D() = default;
    Mask2D(int r, int c, uint8_t fill = 0)
        : rows(r), cols(c), on(static_cast<size_t>(r) * c, fill) {}

    uint8_t& operator()(int r, int c) { return on[static_cast<size_t>(r) * cols + c]; }
    const uint8_t& operator()(int r, int c) const { return on[static_cast<size_t>(r) * cols + c]; }

    size_t total() const { return on.size(); }
    size_t sampled() const { return static_cast<size_t>(std::count(on.begin(), on.end(), 1)); }
};

/// A sampling pattern for one acquisition; CardiacTwoPhase uses one binary
/// matrix per temporal phase, static acquisitions use a single one.
struct SamplingMask {
    MaskKind kind = MaskKind::Full;
    double target_R = 1.0;
    int center_radius = 0;
    uint64_t seed = 0;
    std::vector<Mask2D> phases;

    size_t total() const {
        size_t t = 0;
        for (const auto& p : phases) t += p.total();
        return t;
    }
    size_t sampled() const {
        size_t s = 0;
        for (const auto& p : phases) s += p.sampled();
        return s;
    }
};

struct MaskGenerationError : std::runtime_error {
    double realized_R;
    MaskGenerationError(const std::string& msg, double r)
        : std::runtime_error(msg), realized_R(r) {}
};

/// Realized acceleration: total entries / sampled entries.
inline double acceleration_of(const SamplingMask& m) {
    const size_t s = m.sampled();
    if (m.total() == 0) throw std::invalid_argument("acceleration_of: empty mask");
    if (s == 0) throw std::invalid_argument("acceleration_of: mask has no sampled entries");
    return static_cast<double>(m.total()) / static_cast<double>(s);
}

namespace detail {

// Variable-density weight, probability ~ (1 + d/d0)^-p with d0 = grid/8, p = 2.
inline double density_weight(double d, double d0) {
    const double t = 1.0 + d / d0;
    return 1.0 / (t * t);
}

}  // namespace detail

inline SamplingMask full_mask(std::pair<int, int> shape, int n_phases = 1) {
    SamplingMask m;
    m.kind = MaskKind::Full;
    m.target_R = 1.0;
    for (int p = 0; p < n_phases; ++p) m.phases.emplace_back(shape.first, shape.second, 1);
    return m;
}

/// Variable-density Poisson-disc mask by dart throwing: the local minimum
/// distance grows with k-space radius, darts are accepted until the target
/// count is reached. If the pattern saturates before that, the base radius
/// is relaxed a bounded number of times before giving up.
inline SamplingMask poisson_disc_mask(std::pair<int, int> shape, double target_R,
                                      int center_radius, uint64_t seed) {
    const int rows = shape.first, cols = shape.second;
    if (target_R < 1.0) throw std::invalid_argument("poisson_disc_mask: target_R must be >= 1");
    if (center_radius >= std::min(rows, cols) / 2)
        throw std::invalid_argument("poisson_disc_mask: center_radius too large for shape");

    SamplingMask out;
    out.kind = MaskKind::PoissonDisc;
    out.target_R = target_R;
    out.center_radius = center_radius;
    out.seed = seed;

    if (target_R == 1.0) {
        out.phases.emplace_back(rows, cols, 1);
        return out;
    }

    const size_t n = static_cast<size_t>(rows) * cols;
    const size_t target = std::max<size_t>(1, static_cast<size_t>(std::llround(n / target_R)));
    const double cr = rows / 2.0, cc = cols / 2.0;
    const double d0 = std::min(rows, cols) / 8.0;

    Mask2D mask(rows, cols, 0);
    size_t count = 0;
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            if (std::hypot(i - cr, j - cc) <= center_radius) {
                mask(i, j) = 1;
                ++count;
            }
    if (count > target + target / 10)
        throw MaskGenerationError("poisson_disc_mask: calibration region alone exceeds target",
                                  static_cast<double>(n) / static_cast<double>(count));

    // base radius from the saturation density of the variable-density profile
    double weight_sum = 0.0;
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            weight_sum += detail::density_weight(std::hypot(i - cr, j - cc), d0);
    double r_base = std::sqrt(0.68 * weight_sum / static_cast<double>(target));

    Rng rng(derive_seed(seed, 0x9d15cu));
    const int max_rounds = 8;
    for (int round = 0; round < max_rounds && count < target; ++round) {
        const size_t budget = 60 * n;
        for (size_t att = 0; att < budget && count < target; ++att) {
            const size_t cand = rng.below(n);
            const int ci = static_cast<int>(cand) / cols, cj = static_cast<int>(cand) % cols;
            if (mask(ci, cj)) continue;
            const double r = r_base * (1.0 + std::hypot(ci - cr, cj - cc) / d0);
            const int w = static_cast<int>(std::ceil(r));
            bool blocked = false;
            for (int di = -w; di <= w && !blocked; ++di) {
                const int qi = ci + di;
                if (qi < 0 || qi >= rows) continue;
                for (int dj = -w; dj <= w; ++dj) {
                    const int qj = cj + dj;
                    if (qj < 0 || qj >= cols) continue;
                    if (mask(qi, qj) && di * di + dj * dj < r * r) {
                        blocked = true;
                        break;
                    }
                }
            }
            if (!blocked) {
                mask(ci, cj) = 1;
                ++count;
            }
        }
        r_base *= 0.85;
    }
    if (count * 10 < target * 9)  // realized R more than 10% above target
        throw MaskGenerationError("poisson_disc_mask: target density unreachable, realized R = " +
                                      std::to_string(static_cast<double>(n) / count),
                                  static_cast<double>(n) / count);
    out.phases.push_back(std::move(mask));
    return out;
}

namespace detail {

/// Weighted sampling without replacement among lines not yet selected.
/// Returns -1 when nothing remains.
inline int draw_weighted_line(const std::vector<double>& w, const std::vector<uint8_t>& taken,
                              Rng& rng) {
    double total = 0.0;
    for (size_t i = 0; i < w.size(); ++i)
        if (!taken[i]) total += w[i];
    if (total <= 0.0) return -1;
    double u = rng.uniform() * total;
    for (size_t i = 0; i < w.size(); ++i) {
        if (taken[i]) continue;
        u -= w[i];
        if (u <= 0.0) return static_cast<int>(i);
    }
    for (size_t i = w.size(); i-- > 0;)
        if (!taken[i]) return static_cast<int>(i);
    return -1;
}

struct VistaLines {
    std::vector<std::vector<int>> frames;  // selected ky line indices per frame
    int n_ky = 0;
};

/// Per-frame variable-density ky-line selection with inter-frame shifting:
/// adjacent frames share at most max_overlap_frac of their lines (central
/// calibration lines always count as shared).
inline VistaLines vista_lines(int n_ky, int n_t, double target_R, int center_radius,
                              double max_overlap_frac, uint64_t seed) {
    VistaLines out;
    out.n_ky = n_ky;
    const double cc = n_ky / 2.0;
    const double d0 = n_ky / 8.0;
    std::vector<double> w(static_cast<size_t>(n_ky));
    std::vector<int> center_lines;
    for (int k = 0; k < n_ky; ++k) {
        w[k] = density_weight(std::abs(k - cc), d0);
        if (std::abs(k - cc) <= center_radius) center_lines.push_back(k);
    }
    const size_t total_target =
        std::max<size_t>(1, static_cast<size_t>(std::llround(n_ky * n_t / target_R)));
    Rng rng(derive_seed(seed, 0x715a1u));
    std::vector<uint8_t> prev(static_cast<size_t>(n_ky), 0);
    for (int t = 0; t < n_t; ++t) {
        // distribute the total target over frames as evenly as possible
        const size_t goal = total_target * (t + 1) / n_t - total_target * t / n_t;
        const size_t per_frame = std::max<size_t>(goal, center_lines.size());
        std::vector<uint8_t> taken(static_cast<size_t>(n_ky), 0);
        std::vector<int> sel;
        for (int k : center_lines) {
            taken[k] = 1;
            sel.push_back(k);
        }
        while (sel.size() < per_frame) {
            const int k = draw_weighted_line(w, taken, rng);
            if (k < 0) break;
            taken[k] = 1;
            sel.push_back(k);
        }
        if (t > 0) {
            const size_t allowed = std::max(
                center_lines.size(),
                static_cast<size_t>(std::floor(max_overlap_frac * static_cast<double>(sel.size()))));
            // swap shared non-center lines for fresh ones until within bound
            for (int guard = 0; guard < n_ky; ++guard) {
                size_t shared = 0;
                int swap_idx = -1;
                for (size_t s = 0; s < sel.size(); ++s)
                    if (prev[sel[s]]) {
                        ++shared;
                        if (std::abs(sel[s] - cc) > center_radius) swap_idx = static_cast<int>(s);
                    }
                if (shared <= allowed || swap_idx < 0) break;
                std::vector<uint8_t> blocked = taken;
                for (int k = 0; k < n_ky; ++k)
                    if (prev[k]) blocked[k] = 1;
                const int fresh = draw_weighted_line(w, blocked, rng);
                if (fresh < 0) break;
                taken[sel[swap_idx]] = 0;
                taken[fresh] = 1;
                sel[swap_idx] = fresh;
            }
        }
        std::sort(sel.begin(), sel.end());
        prev.assign(static_cast<size_t>(n_ky), 0);
        for (int k : sel) prev[k] = 1;
        out.frames.push_back(std::move(sel));
    }
    return out;
}

inline Mask2D lines_to_mask(const std::vector<int>& lines, int n_ky, int n_kx) {
    Mask2D m(n_ky, n_kx, 0);
    for (int k : lines)
        for (int j = 0; j < n_kx; ++j) m(k, j) = 1;
    return m;
}

}  // namespace detail

/// VISTA-like Cartesian ky x t pattern. shape_ky_t = (ky lines, frames);
/// the per-phase 2D masks sample full kx readouts on the selected lines
/// (kx dimension equals ky for the square grids used here).
inline SamplingMask vista_mask(std::pair<int, int> shape_ky_t, double target_R, uint64_t seed,
                               int center_radius = 0, double max_overlap_frac = 0.5) {
    const int n_ky = shape_ky_t.first, n_t = shape_ky_t.second;
    if (target_R < 1.0) throw std::invalid_argument("vista_mask: target_R must be >= 1");
    SamplingMask out;
    out.kind = MaskKind::VistaLike;
    out.target_R = target_R;
    out.center_radius = center_radius;
    out.seed = seed;
    if (target_R == 1.0) {
        for (int t = 0; t < n_t; ++t) out.phases.emplace_back(n_ky, n_ky, 1);
        return out;
    }
    const auto lines = detail::vista_lines(n_ky, n_t, target_R, center_radius, max_overlap_frac, seed);
    for (const auto& f : lines.frames) out.phases.push_back(detail::lines_to_mask(f, n_ky, n_ky));
    const double realized = acceleration_of(out);
    if (realized > 1.1 * target_R)
        throw MaskGenerationError("vista_mask: target density unreachable", realized);
    return out;
}

/// Nested mask sequence over a strictly decreasing factor list. The densest
/// mask (last factor) is generated first and thinned by variable-density
/// priority order, so every sparser mask is a subset of every denser one.
struct AccelerationSchedule {
    std::vector<double> factors;
    std::vector<SamplingMask> masks;

    static const std::vector<double>& default_factors() {
        static const std::vector<double> f = {32, 28, 24, 20, 16, 12, 8, 4};
        return f;
    }
};

inline AccelerationSchedule nested_schedule(MaskKind kind, std::pair<int, int> shape,
                                            const std::vector<double>& factors, int center_radius,
                                            uint64_t seed) {
    if (factors.empty()) throw std::invalid_argument("nested_schedule: factors empty");
    for (size_t i = 1; i < factors.size(); ++i)
        if (factors[i] >= factors[i - 1])
            throw std::invalid_argument("nested_schedule: factors must be strictly decreasing");

    AccelerationSchedule sched;
    sched.factors = factors;
    const double densest_R = factors.back();

    if (kind == MaskKind::Full) {
        for (double R : factors) {
            (void)R;
            sched.masks.push_back(full_mask(shape));
        }
        return sched;
    }

    if (kind == MaskKind::PoissonDisc) {
        const SamplingMask densest = poisson_disc_mask(shape, densest_R, center_radius, seed);
        const Mask2D& base = densest.phases[0];
        const double cr = base.rows / 2.0, cc = base.cols / 2.0;
        const double d0 = std::min(base.rows, base.cols) / 8.0;

        struct Pt {
            int i, j;
            double priority;
        };
        std::vector<Pt> pts;
        Rng rng(derive_seed(seed, 0x7411u));
        for (int i = 0; i < base.rows; ++i)
            for (int j = 0; j < base.cols; ++j) {
                if (!base(i, j)) continue;
                const double d = std::hypot(i - cr, j - cc);
                if (d <= center_radius) {
                    pts.push_back({i, j, 2.0});  // calibration region: always kept
                } else {
                    // weighted priority: keep-top-k reproduces the density profile
                    const double u = rng.uniform();
                    pts.push_back({i, j, std::pow(u, 1.0 / detail::density_weight(d, d0))});
                }
            }
        std::stable_sort(pts.begin(), pts.end(),
                         [](const Pt& a, const Pt& b) { return a.priority > b.priority; });
        size_t n_center = 0;
        for (const auto& p : pts) n_center += (p.priority == 2.0);

        const size_t n = base.total();
        for (double R : factors) {
            const size_t want = std::max<size_t>(1, static_cast<size_t>(std::llround(n / R)));
            const size_t keep = std::min(pts.size(), std::max(want, n_center));
            SamplingMask m;
            m.kind = kind;
            m.target_R = R;
            m.center_radius = center_radius;
            m.seed = seed;
            Mask2D g(base.rows, base.cols, 0);
            for (size_t k = 0; k < keep; ++k) g(pts[k].i, pts[k].j) = 1;
            m.phases.push_back(std::move(g));
            sched.masks.push_back(std::move(m));
        }
        return sched;
    }

    // VistaLike: thin the densest frame-line sets by per-frame priority
    const int n_ky = shape.first, n_t = shape.second;
    const SamplingMask densest = vista_mask(shape, densest_R, seed, center_radius);
    const double cc = n_ky / 2.0;
    const double d0 = n_ky / 8.0;
    Rng rng(derive_seed(seed, 0x7412u));
    struct Line {
        int k;
        double priority;
    };
    std::vector<std::vector<Line>> ordered(static_cast<size_t>(n_t));
    for (int t = 0; t < n_t; ++t) {
        for (int k = 0; k < n_ky; ++k) {
            if (!densest.phases[t](k, 0)) continue;
            const double d = std::abs(k - cc);
            const double pr =
                d <= center_radius ? 2.0 : std::pow(rng.uniform(), 1.0 / detail::density_weight(d, d0));
            ordered[t].push_back({k, pr});
        }
        std::stable_sort(ordered[t].begin(), ordered[t].end(),
                         [](const Line& a, const Line& b) { return a.priority > b.priority; });
    }
    for (double R : factors) {
        const size_t total_target =
            std::max<size_t>(1, static_cast<size_t>(std::llround(n_ky * n_t / R)));
        SamplingMask m;
        m.kind = kind;
        m.target_R = R;
        m.center_radius = center_radius;
        m.seed = seed;
        for (int t = 0; t < n_t; ++t) {
            const size_t goal = total_target * (t + 1) / n_t - total_target * t / n_t;
            size_t n_center = 0;
            for (const auto& ln : ordered[t]) n_center += (ln.priority == 2.0);
            const size_t keep =
                std::min(ordered[t].size(), std::max({static_cast<size_t>(1), goal, n_center}));
            std::vector<int> lines;
            for (size_t s = 0; s < keep; ++s) lines.push_back(ordered[t][s].k);
            m.phases.push_back(detail::lines_to_mask(lines, n_ky, n_ky));
        }
        sched.masks.push_back(std::move(m));
    }
    return sched;
}

}  // namespace uqmr
