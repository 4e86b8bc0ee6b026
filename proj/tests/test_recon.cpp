#include <gtest/gtest.h>

#include "uqmr/recon.hpp"

using namespace uqmr;

namespace {

CoilSensitivities unit_coil(int n) {
    CoilSensitivities s;
    ComplexImage m(n, n);
    for (auto& z : m.data) z = 1.0;
    s.maps.push_back(std::move(m));
    return s;
}

ComplexImage random_image(int n, uint64_t seed) {
    Rng rng(seed);
    ComplexImage x(n, n);
    for (auto& z : x.data) z = cplx(rng.normal(), rng.normal());
    return x;
}

PosteriorSamplerConfig cg_config(double alpha, double beta) {
    PosteriorSamplerConfig cfg;
    cfg.prior_precision = alpha;
    cfg.noise_precision = beta;
    cfg.solver = SolverKind::ConjugateGradient;
    cfg.cg_tol = 1e-10;
    cfg.cg_max_iter = 2000;
    return cfg;
}

struct Moments {
    std::vector<cplx> mean;
    std::vector<double> var;  // E |x - mean|^2, unbiased
};

Moments sample_moments(const std::vector<ComplexImage>& samples) {
    const size_t n = samples[0].size();
    const double M = static_cast<double>(samples.size());
    Moments m;
    m.mean.assign(n, cplx(0, 0));
    m.var.assign(n, 0.0);
    for (const auto& s : samples)
        for (size_t i = 0; i < n; ++i) m.mean[i] += s.data[i];
    for (auto& z : m.mean) z /= M;
    for (const auto& s : samples)
        for (size_t i = 0; i < n; ++i) m.var[i] += std::norm(s.data[i] - m.mean[i]);
    for (auto& v : m.var) v /= (M - 1.0);
    return m;
}

}  // namespace

// Full mask, unit coil: the posterior factorizes per k-space coefficient,
// mean = beta/(alpha+beta) A^H y and variance = 1/(alpha+beta). This closed
// form checks the dense route end to end.
TEST(DensePosterior, MatchesDiagonalClosedForm) {
    const int n = 8;
    const double alpha = 2.0, beta = 50.0;
    const ComplexImage x = random_image(n, 3);
    const MultiCoilKSpace y = forward(x, unit_coil(n), Mask2D(n, n, 1), 0.0, 0);
    PosteriorSamplerConfig cfg = cg_config(alpha, beta);
    const DensePosterior post = dense_posterior(y, unit_coil(n), cfg);

    const ComplexImage expected_mean = adjoint(y, unit_coil(n));
    const double gain = beta / (alpha + beta);
    for (size_t i = 0; i < x.size(); ++i)
        ASSERT_NEAR(std::abs(post.mean[static_cast<Eigen::Index>(i)] - gain * expected_mean.data[i]),
                    0, 1e-9);
    for (Eigen::Index i = 0; i < post.covariance.rows(); ++i)
        ASSERT_NEAR(post.covariance(i, i).real(), 1.0 / (alpha + beta), 1e-9);
}

TEST(DensePosterior, SizeAndCoilCapEnforced) {
    const MultiCoilKSpace big = forward(random_image(64, 1), unit_coil(64), Mask2D(64, 64, 1), 0, 0);
    EXPECT_THROW(dense_posterior(big, unit_coil(64), cg_config(1, 1)), std::invalid_argument);

    const CoilSensitivities two = make_coils(16, 2, 1);
    const MultiCoilKSpace y2 = forward(random_image(16, 1), two, Mask2D(16, 16, 1), 0, 0);
    EXPECT_THROW(dense_posterior(y2, two, cg_config(1, 1)), std::invalid_argument);
    PosteriorSamplerConfig dense_cfg = cg_config(1, 1);
    dense_cfg.solver = SolverKind::Dense;
    EXPECT_THROW(sample_posterior(y2, two, dense_cfg, 2, 0), std::invalid_argument);
}

TEST(SamplePosterior, HighNoisePrecisionRecoversTruthOnFullMask) {
    const int n = 16;
    const ComplexImage x = random_image(n, 5);
    const MultiCoilKSpace y = forward(x, unit_coil(n), Mask2D(n, n, 1), 0.0, 0);
    const ComplexImage mu = posterior_mean(y, unit_coil(n), cg_config(1.0, 1e8));
    for (size_t i = 0; i < x.size(); ++i)
        ASSERT_NEAR(std::abs(mu.data[i] - x.data[i]), 0.0, 1e-3);
}

// Empty mask: the posterior is the prior. Per-pixel sample mean over 1e4
// draws stays within 3 standard errors (= 3 tau / 100 per component) for
// at least 99% of pixels.
TEST(SamplePosterior, EmptyMaskSamplesFromPrior) {
    const int n = 8;
    const double tau = 1.0;
    MultiCoilKSpace y;
    y.mask = Mask2D(n, n, 0);
    y.coils.emplace_back(n, n);
    const PosteriorSamplerConfig cfg = cg_config(1.0 / (tau * tau), 100.0);
    const ReconSampleSet set = sample_posterior(y, unit_coil(n), cfg, 10000, 77);
    for (const auto& z : set.posterior_mean.data) ASSERT_EQ(z, cplx(0, 0));

    const Moments m = sample_moments(set.samples);
    const double lim = 3.0 * tau / 100.0;
    int ok = 0;
    for (size_t i = 0; i < m.mean.size(); ++i)
        ok += (std::abs(m.mean[i].real()) < lim && std::abs(m.mean[i].imag()) < lim);
    EXPECT_GE(ok, static_cast<int>(0.99 * m.mean.size()));
    // and the spread is the prior's
    double mean_var = 0;
    for (double v : m.var) mean_var += v;
    mean_var /= static_cast<double>(m.var.size());
    EXPECT_NEAR(mean_var, tau * tau, 0.05);
}

// CG + perturbation sampling against the dense analytic posterior on a small
// undersampled single-coil problem: per-pixel empirical mean and variance
// must match mu and diag(Sigma) within 3 Monte-Carlo standard errors.
TEST(SamplePosterior, CgMatchesDenseOracle) {
    const int n = 8;
    const double alpha = 1.0, beta = 400.0;
    const SamplingMask mask = poisson_disc_mask({n, n}, 2.0, 1, 21);
    const ComplexImage x = random_image(n, 9);
    const MultiCoilKSpace y = forward(x, unit_coil(n), mask.phases[0], 0.05, 13);

    PosteriorSamplerConfig cfg = cg_config(alpha, beta);
    const DensePosterior oracle = dense_posterior(y, unit_coil(n), cfg);

    const int M = 4000;
    const ReconSampleSet set = sample_posterior(y, unit_coil(n), cfg, M, 55);

    // CG mean equals analytic mean to solver tolerance
    for (size_t i = 0; i < set.posterior_mean.size(); ++i)
        ASSERT_NEAR(std::abs(set.posterior_mean.data[i] - oracle.mean[static_cast<Eigen::Index>(i)]),
                    0, 1e-6);

    const Moments m = sample_moments(set.samples);
    int mean_ok = 0, var_ok = 0;
    for (size_t i = 0; i < m.mean.size(); ++i) {
        const double sd = std::sqrt(oracle.covariance(static_cast<Eigen::Index>(i),
                                                      static_cast<Eigen::Index>(i))
                                        .real());
        const double se_mean = sd / std::sqrt(2.0 * M);  // per component
        const cplx diff = m.mean[i] - oracle.mean[static_cast<Eigen::Index>(i)];
        mean_ok += (std::abs(diff.real()) < 3 * se_mean && std::abs(diff.imag()) < 3 * se_mean);
        const double se_var = sd * sd / std::sqrt(static_cast<double>(M));
        var_ok += (std::abs(m.var[i] - sd * sd) < 3 * se_var);
    }
    EXPECT_GE(mean_ok, static_cast<int>(0.99 * m.mean.size()));
    EXPECT_GE(var_ok, static_cast<int>(0.99 * m.var.size()));
}

TEST(SamplePosterior, MonotoneInformationOverNestedSchedule) {
    const int n = 8;
    const AccelerationSchedule sched =
        nested_schedule(MaskKind::PoissonDisc, {n, n}, {8.0, 4.0, 2.0}, 1, 31);
    const ComplexImage x = random_image(n, 17);
    const PosteriorSamplerConfig cfg = cg_config(1.0, 200.0);
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& m : sched.masks) {
        const MultiCoilKSpace y = forward(x, unit_coil(n), m.phases[0], 0.0, 0);
        const double tr = dense_posterior(y, unit_coil(n), cfg).trace();
        ASSERT_LE(tr, prev);
        prev = tr;
    }
}

// deviations scale exactly by the shrink factor for matching seeds
TEST(SamplePosterior, OverconfidenceShrinkScalesDeviations) {
    const int n = 16;
    const SamplingMask mask = poisson_disc_mask({n, n}, 4.0, 1, 3);
    const CoilSensitivities sens = make_coils(n, 2, 5);
    const ComplexImage x = random_image(n, 2);
    const MultiCoilKSpace y = forward(x, sens, mask.phases[0], 0.05, 1);

    PosteriorSamplerConfig faithful = cg_config(1.0, 400.0);
    PosteriorSamplerConfig shrunk = faithful;
    shrunk.overconfidence_shrink = 0.3;

    const ReconSampleSet a = sample_posterior(y, sens, faithful, 5, 99);
    const ReconSampleSet b = sample_posterior(y, sens, shrunk, 5, 99);
    for (int m = 0; m < 5; ++m)
        for (size_t i = 0; i < a.samples[m].size(); ++i) {
            const cplx da = a.samples[m].data[i] - a.posterior_mean.data[i];
            const cplx db = b.samples[m].data[i] - b.posterior_mean.data[i];
            ASSERT_NEAR(std::abs(db - 0.3 * da), 0.0, 1e-12);
        }
}

TEST(SamplePosterior, SampleMDependsOnlyOnSeedXorM) {
    const int n = 16;
    const SamplingMask mask = poisson_disc_mask({n, n}, 4.0, 1, 3);
    const ComplexImage x = random_image(n, 2);
    const MultiCoilKSpace y = forward(x, unit_coil(n), mask.phases[0], 0.05, 1);
    const PosteriorSamplerConfig cfg = cg_config(1.0, 100.0);
    const ReconSampleSet five = sample_posterior(y, unit_coil(n), cfg, 5, 42);
    const ReconSampleSet three = sample_posterior(y, unit_coil(n), cfg, 3, 42);
    for (int m = 0; m < 3; ++m) EXPECT_EQ(five.samples[m].data, three.samples[m].data);
}

TEST(SamplePosterior, CgNonConvergenceCarriesResidual) {
    const int n = 16;
    const ComplexImage x = random_image(n, 4);
    // undersampled multi-coil system: the spectrum is spread, one Krylov
    // step cannot reach a 1e-14 residual
    const CoilSensitivities sens = make_coils(n, 4, 9);
    const SamplingMask mask = poisson_disc_mask({n, n}, 4.0, 1, 5);
    const MultiCoilKSpace y = forward(x, sens, mask.phases[0], 0.0, 0);
    PosteriorSamplerConfig cfg = cg_config(1.0, 1e6);
    cfg.cg_max_iter = 1;
    cfg.cg_tol = 1e-14;
    try {
        sample_posterior(y, sens, cfg, 1, 0);
        FAIL() << "expected CgError";
    } catch (const CgError& e) {
        EXPECT_GT(e.residual, 0.0);
        EXPECT_EQ(e.iterations, 1);
    }
}

TEST(SamplePosterior, RejectsBadArguments) {
    const int n = 16;
    const MultiCoilKSpace y = forward(random_image(n, 1), unit_coil(n), Mask2D(n, n, 1), 0, 0);
    EXPECT_THROW(sample_posterior(y, unit_coil(n), cg_config(1, 1), 0, 0), std::invalid_argument);
    PosteriorSamplerConfig bad = cg_config(1, 1);
    bad.overconfidence_shrink = 1.5;
    EXPECT_THROW(sample_posterior(y, unit_coil(n), bad, 1, 0), std::invalid_argument);
    bad = cg_config(-1, 1);
    EXPECT_THROW(sample_posterior(y, unit_coil(n), bad, 1, 0), std::invalid_argument);
}

TEST(ZeroFilledSampler, AllSamplesIdenticalWithZeroSpread) {
    const int n = 16;
    const SamplingMask mask = poisson_disc_mask({n, n}, 2.0, 1, 7);
    const CoilSensitivities sens = make_coils(n, 4, 2);
    const ComplexImage x = random_image(n, 11);
    const MultiCoilKSpace y = forward(x, sens, mask.phases[0], 0.02, 3);
    const ReconSampleSet set = zero_filled_sampler(y, sens, 6);
    ASSERT_EQ(set.samples.size(), 6u);
    const ComplexImage zf = zero_filled(y, sens);
    EXPECT_EQ(set.posterior_mean.data, zf.data);
    for (const auto& s : set.samples) EXPECT_EQ(s.data, zf.data);
}
