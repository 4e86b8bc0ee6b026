#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "uqmr/downstream.hpp"
#include "uqmr/image.hpp"
#include "uqmr/kspace.hpp"
#include "uqmr/rng.hpp"

namespace uqmr {

enum class SolverKind { Dense, ConjugateGradient };

/// Configuration of the Gaussian posterior sampler for the linear model
/// y = A x + n with prior x ~ CN(0, (1/prior_precision) I) and noise
/// n ~ CN(0, (1/noise_precision) I) on sampled entries.
struct PosteriorSamplerConfig {
    double prior_precision = 1.0;   // alpha = 1 / tau^2; tau ~ phantom dynamic range
    double noise_precision = 1.0;   // beta = 1 / noise_std^2
    SolverKind solver = SolverKind::ConjugateGradient;
    double cg_tol = 1e-5;
    int cg_max_iter = 500;
    double overconfidence_shrink = 1.0;  // scales sampled deviations; 1 = faithful

    bool operator==(const PosteriorSamplerConfig&) const = default;

    void validate() const {
        if (prior_precision <= 0 || noise_precision <= 0)
            throw std::invalid_argument("sampler: precisions must be positive");
        if (cg_tol <= 0) throw std::invalid_argument("sampler: cg_tol must be positive");
        if (cg_max_iter < 1) throw std::invalid_argument("sampler: cg_max_iter must be >= 1");
        if (overconfidence_shrink <= 0 || overconfidence_shrink > 1.0)
            throw std::invalid_argument("sampler: overconfidence_shrink must be in (0, 1]");
    }
};

struct ReconSampleSet {
    std::vector<ComplexImage> samples;
    ComplexImage posterior_mean;
    double source_mask_R = 1.0;
};

struct CgError : std::runtime_error {
    double residual;
    int iterations;
    CgError(double res, int it)
        : std::runtime_error("conjugate gradient did not converge: relative residual " +
                             std::to_string(res) + " after " + std::to_string(it) + " iterations"),
          residual(res),
          iterations(it) {}
};

namespace detail {

/// Applies beta * A^H A + alpha * I with A = mask o FFT2 o coil-multiply.
/// The mask is kept in unshifted FFT order so the hot loop avoids quadrant
/// swaps entirely.
class NormalOperator {
  public:
    NormalOperator(const CoilSensitivities& sens, const Mask2D& mask, double alpha, double beta)
        : sens_(sens), alpha_(alpha), beta_(beta), rows_(mask.rows), cols_(mask.cols),
          mask_fft_(mask.total()), buf_(mask.rows, mask.cols) {
        const int hr = rows_ / 2, hc = cols_ / 2;
        for (int i = 0; i < rows_; ++i)
            for (int j = 0; j < cols_; ++j)
                mask_fft_[static_cast<size_t>((i + hr) % rows_) * cols_ + (j + hc) % cols_] =
                    mask.on[static_cast<size_t>(i) * cols_ + j];
    }

    void apply(const ComplexImage& x, ComplexImage& out) {
        if (out.rows != rows_ || out.cols != cols_) out = ComplexImage(rows_, cols_);
        for (size_t i = 0; i < out.size(); ++i) out.data[i] = alpha_ * x.data[i];
        for (const auto& s : sens_.maps) {
            for (size_t i = 0; i < buf_.size(); ++i) buf_.data[i] = s.data[i] * x.data[i];
            fft2_inplace(buf_, false);
            for (size_t i = 0; i < buf_.size(); ++i)
                if (!mask_fft_[i]) buf_.data[i] = cplx(0.0, 0.0);
            fft2_inplace(buf_, true);
            for (size_t i = 0; i < out.size(); ++i)
                out.data[i] += beta_ * std::conj(s.data[i]) * buf_.data[i];
        }
    }

  private:
    const CoilSensitivities& sens_;
    double alpha_, beta_;
    int rows_, cols_;
    std::vector<uint8_t> mask_fft_;
    ComplexImage buf_;
};

/// Plain conjugate gradient on the Hermitian positive definite system.
/// An optional warm start cuts the iteration count when the solution is a
/// small perturbation of a known one.
inline ComplexImage solve_cg(NormalOperator& op, const ComplexImage& b, double tol, int max_iter,
                             const ComplexImage* x0 = nullptr) {
    const double bnorm = norm2(b);
    if (bnorm == 0.0) return ComplexImage(b.rows, b.cols);  // SPD system: x = 0
    ComplexImage x = x0 ? *x0 : ComplexImage(b.rows, b.cols);
    ComplexImage r = b, Ap(b.rows, b.cols);
    if (x0) {
        op.apply(x, Ap);
        for (size_t i = 0; i < r.size(); ++i) r.data[i] -= Ap.data[i];
    }
    double rs = std::abs(dot(r, r));
    if (std::sqrt(rs) <= tol * bnorm) return x;
    ComplexImage p = r;
    for (int it = 0; it < max_iter; ++it) {
        op.apply(p, Ap);
        const double denom = std::real(dot(p, Ap));
        const double a = rs / denom;
        for (size_t i = 0; i < x.size(); ++i) {
            x.data[i] += a * p.data[i];
            r.data[i] -= a * Ap.data[i];
        }
        const double rs2 = std::abs(dot(r, r));
        if (std::sqrt(rs2) < tol * bnorm) return x;
        const double beta = rs2 / rs;
        rs = rs2;
        for (size_t i = 0; i < p.size(); ++i) p.data[i] = r.data[i] + beta * p.data[i];
    }
    throw CgError(std::sqrt(rs) / bnorm, max_iter);
}

inline Eigen::VectorXcd to_eigen(const ComplexImage& x) {
    return Eigen::Map<const Eigen::VectorXcd>(x.data.data(), static_cast<Eigen::Index>(x.size()));
}

inline ComplexImage from_eigen(const Eigen::VectorXcd& v, int rows, int cols) {
    ComplexImage x(rows, cols);
    for (size_t i = 0; i < x.size(); ++i) x.data[i] = v[static_cast<Eigen::Index>(i)];
    return x;
}

/// Full forward matrix for the dense route, built from the explicit DFT
/// definition rather than the FFT code path, so the dense posterior is an
/// algebraically independent reference.
inline Eigen::MatrixXcd dense_forward_matrix(const CoilSensitivities& sens, const Mask2D& mask) {
    const int rows = mask.rows, cols = mask.cols;
    const Eigen::Index n = static_cast<Eigen::Index>(rows) * cols;
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(n, n);
    const auto& s = sens.maps[0];
    for (int a = 0; a < rows; ++a)
        for (int b = 0; b < cols; ++b) {
            const Eigen::Index row = static_cast<Eigen::Index>(a) * cols + b;
            if (!mask.on[static_cast<size_t>(row)]) continue;  // zero row: unsampled
            const int ka = (a + rows / 2) % rows;              // centered -> FFT order
            const int kb = (b + cols / 2) % cols;
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j) {
                    const double ang = -2.0 * std::numbers::pi *
                                       (static_cast<double>(ka) * i / rows +
                                        static_cast<double>(kb) * j / cols);
                    A(row, static_cast<Eigen::Index>(i) * cols + j) =
                        scale * std::polar(1.0, ang) * s(i, j);
                }
        }
    return A;
}

inline void check_dense_cap(const MultiCoilKSpace& y) {
    const size_t n = y.coils.empty() ? 0 : y.coils[0].size();
    if (y.n_coils() != 1 || n > 1024)
        throw std::invalid_argument(
            "dense solver is limited to single-coil grids of at most 32x32");
}

}  // namespace detail

/// Analytic Gaussian posterior (mean and full covariance) of the linear
/// model, materialized densely. Only valid within the dense size cap.
struct DensePosterior {
    Eigen::VectorXcd mean;
    Eigen::MatrixXcd covariance;

    double trace() const { return covariance.trace().real(); }
};

inline DensePosterior dense_posterior(const MultiCoilKSpace& y, const CoilSensitivities& sens,
                                      const PosteriorSamplerConfig& cfg) {
    cfg.validate();
    detail::check_dense_cap(y);
    const int rows = y.coils[0].rows, cols = y.coils[0].cols;
    const Eigen::Index n = static_cast<Eigen::Index>(rows) * cols;
    const Eigen::MatrixXcd A = detail::dense_forward_matrix(sens, y.mask);
    Eigen::MatrixXcd precision = cfg.noise_precision * (A.adjoint() * A);
    precision += cfg.prior_precision * Eigen::MatrixXcd::Identity(n, n);
    const Eigen::LLT<Eigen::MatrixXcd> llt(precision);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("dense_posterior: Cholesky factorization failed");
    DensePosterior post;
    post.mean = llt.solve(cfg.noise_precision * (A.adjoint() * detail::to_eigen(y.coils[0])));
    post.covariance = llt.solve(Eigen::MatrixXcd::Identity(n, n));
    return post;
}

/// Draw M exact samples from the Gaussian posterior. The Dense route
/// factorizes the precision matrix; the ConjugateGradient route produces the
/// mean by an iterative solve and samples by solving against noise-perturbed
/// right-hand sides. Sample m depends only on (seed, m), so parallel
/// generation stays order-deterministic.
inline ReconSampleSet sample_posterior(const MultiCoilKSpace& y, const CoilSensitivities& sens,
                                       const PosteriorSamplerConfig& cfg, int M, uint64_t seed) {
    cfg.validate();
    if (M < 1) throw std::invalid_argument("sample_posterior: M must be >= 1");
    if (y.coils.empty()) throw std::invalid_argument("sample_posterior: empty k-space");
    detail::check_dims(y.coils[0], sens, y.mask);
    const int rows = y.coils[0].rows, cols = y.coils[0].cols;
    const double alpha = cfg.prior_precision, beta = cfg.noise_precision;
    const double shrink = cfg.overconfidence_shrink;

    ReconSampleSet set;
    const size_t sampled = y.mask.sampled();
    set.source_mask_R = sampled == 0 ? std::numeric_limits<double>::infinity()
                                     : static_cast<double>(y.mask.total()) / sampled;

    if (cfg.solver == SolverKind::Dense) {
        detail::check_dense_cap(y);
        const Eigen::Index n = static_cast<Eigen::Index>(rows) * cols;
        const Eigen::MatrixXcd A = detail::dense_forward_matrix(sens, y.mask);
        Eigen::MatrixXcd precision = beta * (A.adjoint() * A);
        precision += alpha * Eigen::MatrixXcd::Identity(n, n);
        const Eigen::LLT<Eigen::MatrixXcd> llt(precision);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("sample_posterior: Cholesky factorization failed");
        const Eigen::VectorXcd mu = llt.solve(beta * (A.adjoint() * detail::to_eigen(y.coils[0])));
        set.posterior_mean = detail::from_eigen(mu, rows, cols);
        const Eigen::MatrixXcd L = llt.matrixL();
        for (int m = 0; m < M; ++m) {
            Rng rng(derive_seed(seed, static_cast<uint64_t>(m)));
            Eigen::VectorXcd xi(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double re = rng.normal(), im = rng.normal();
                xi[i] = cplx(re, im) / std::sqrt(2.0);
            }
            // cov(L^-H xi) = (L L^H)^-1 = posterior covariance
            const Eigen::VectorXcd dev = L.adjoint().triangularView<Eigen::Upper>().solve(xi);
            set.samples.push_back(detail::from_eigen(mu + shrink * dev, rows, cols));
        }
        return set;
    }

    detail::NormalOperator op(sens, y.mask, alpha, beta);
    ComplexImage b0 = adjoint(y, sens);
    for (auto& z : b0.data) z *= beta;
    set.posterior_mean = detail::solve_cg(op, b0, cfg.cg_tol, cfg.cg_max_iter);

    const double e_std = std::sqrt(1.0 / beta) / std::sqrt(2.0);
    const double g_std = std::sqrt(1.0 / alpha) / std::sqrt(2.0);
    for (int m = 0; m < M; ++m) {
        Rng rng(derive_seed(seed, static_cast<uint64_t>(m)));
        // rhs = b0 + beta * A^H e + alpha * g, e ~ CN(0, 1/beta), g ~ CN(0, 1/alpha)
        MultiCoilKSpace e;
        e.mask = y.mask;
        for (int c = 0; c < y.n_coils(); ++c) {
            ComplexImage ec(rows, cols);
            for (auto& z : ec.data) z = cplx(e_std * rng.normal(), e_std * rng.normal());
            e.coils.push_back(std::move(ec));
        }
        ComplexImage rhs = adjoint(e, sens);
        for (size_t i = 0; i < rhs.size(); ++i) {
            const cplx g(g_std * rng.normal(), g_std * rng.normal());
            rhs.data[i] = b0.data[i] + beta * rhs.data[i] + alpha * g;
        }
        // the perturbed solution is close to the mean: warm-start there
        const ComplexImage xp =
            detail::solve_cg(op, rhs, cfg.cg_tol, cfg.cg_max_iter, &set.posterior_mean);
        ComplexImage s(rows, cols);
        for (size_t i = 0; i < s.size(); ++i)
            s.data[i] = set.posterior_mean.data[i] +
                        shrink * (xp.data[i] - set.posterior_mean.data[i]);
        set.samples.push_back(std::move(s));
    }
    return set;
}

/// Posterior mean alone (one solve, no sampling).
inline ComplexImage posterior_mean(const MultiCoilKSpace& y, const CoilSensitivities& sens,
                                   const PosteriorSamplerConfig& cfg) {
    cfg.validate();
    if (cfg.solver == SolverKind::Dense) {
        const DensePosterior p = dense_posterior(y, sens, cfg);
        return detail::from_eigen(p.mean, y.coils[0].rows, y.coils[0].cols);
    }
    detail::NormalOperator op(sens, y.mask, cfg.prior_precision, cfg.noise_precision);
    ComplexImage b0 = adjoint(y, sens);
    for (auto& z : b0.data) z *= cfg.noise_precision;
    return detail::solve_cg(op, b0, cfg.cg_tol, cfg.cg_max_iter);
}

/// Degenerate baseline: M identical copies of the zero-filled reconstruction,
/// so any propagated metric has zero spread.
inline ReconSampleSet zero_filled_sampler(const MultiCoilKSpace& y, const CoilSensitivities& sens,
                                          int M) {
    if (M < 1) throw std::invalid_argument("zero_filled_sampler: M must be >= 1");
    ReconSampleSet set;
    set.posterior_mean = zero_filled(y, sens);
    const size_t sampled = y.mask.sampled();
    set.source_mask_R = sampled == 0 ? std::numeric_limits<double>::infinity()
                                     : static_cast<double>(y.mask.total()) / sampled;
    for (int m = 0; m < M; ++m) set.samples.push_back(set.posterior_mean);
    return set;
}

// spec-shaped overloads: propagate metrics directly from a sample set
inline MetricDistribution propagate_volume(const ReconSampleSet& s, PhantomKind kind,
                                           int32_t class_id, const VoxelSpacing& sp) {
    return propagate_volume(std::span<const ComplexImage>(s.samples), kind, class_id, sp);
}

inline MetricDistribution propagate_lvef(const ReconSampleSet& ed, const ReconSampleSet& es,
                                         PhantomKind kind, int32_t class_id,
                                         const VoxelSpacing& sp) {
    return propagate_lvef(std::span<const ComplexImage>(ed.samples),
                          std::span<const ComplexImage>(es.samples), kind, class_id, sp);
}

}  // namespace uqmr
