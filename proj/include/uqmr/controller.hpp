#pragma once

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "uqmr/conformal.hpp"
#include "uqmr/phantom.hpp"
#include "uqmr/quality.hpp"
#include "uqmr/recon.hpp"
#include "uqmr/sampling.hpp"

namespace uqmr {

enum class WidthMode { FullWidth, HalfWidth };

/// Stop once the interval is tighter than epsilon (strict); if no step
/// satisfies the criterion the scan runs to the densest mask.
struct StoppingPolicy {
    double epsilon = 0.5;
    bool use_calibration = true;
    WidthMode width_mode = WidthMode::FullWidth;

    // epsilon = 0 is the degenerate never-stop policy (width is strictly
    // positive once the sigma floor applies), anything negative is rejected
    void validate() const {
        if (epsilon < 0) throw std::invalid_argument("policy: epsilon must be >= 0");
    }
};

inline bool stop_check(const PredictionInterval& iv, const StoppingPolicy& policy) {
    if (iv.unbounded) return false;
    const double w = policy.width_mode == WidthMode::FullWidth ? iv.width : iv.width / 2.0;
    return w < policy.epsilon;
}

struct StepRecord {
    double R = 1.0;
    PredictionInterval interval;
    double w_hat = 0.0;
    double sigma = 0.0;
    double error_vs_truth = 0.0;  // test-time bookkeeping only
    double ssim = 0.0;
    double psnr = 0.0;
    double dice = 0.0;
    double wall_time_ms = 0.0;
    std::string warning;  // non-empty when the step was skipped
};

struct AcquisitionTrace {
    std::string case_id;
    std::vector<StepRecord> steps;
    double stopped_at_R = 1.0;
    bool stopped = false;
    PredictionInterval final_interval;
    double final_error = 0.0;
    double true_metric = 0.0;
};

/// Forward-simulation settings for one adaptive run.
struct AcquireParams {
    double noise_std = 0.0;  // measurement noise of the simulated scanner
    int M = 20;              // posterior samples per step (per phase)
    int32_t class_id = kClassStructure;
    std::string case_id;
};

namespace detail {

inline double quality_scale(const RealImage& ref) {
    double mx = 0.0;
    for (double v : ref.data) mx = std::max(mx, v);
    return mx > 0 ? mx : 1.0;
}

}  // namespace detail

/// The adaptive acquisition loop: per schedule step, simulate the revealed
/// k-space (one fixed noise realization per case, masked progressively),
/// draw M posterior samples, propagate to the clinical metric, build the
/// (calibrated) interval and stop once it is tight enough.
inline AcquisitionTrace run_adaptive(const GroundTruthCase& gt, const CoilSensitivities& sens,
                                     const AccelerationSchedule& schedule,
                                     const PosteriorSamplerConfig& sampler_cfg,
                                     const AcquireParams& acq, PhantomKind seg_kind,
                                     const CalibratorTable& calibrator,
                                     const StoppingPolicy& policy, uint64_t seed) {
    policy.validate();
    sampler_cfg.validate();
    if (policy.use_calibration && !calibrator.covers(schedule.factors))
        throw std::out_of_range("run_adaptive: calibrator table does not cover the schedule");

    const bool two_phase = gt.kind == PhantomKind::CardiacTwoPhase;
    std::vector<const ComplexImage*> truth;
    std::vector<const LabelMap*> truth_labels;
    if (two_phase) {
        if (gt.phases.size() != 2)
            throw std::invalid_argument("run_adaptive: cardiac case needs two phases");
        for (const auto& p : gt.phases) {
            truth.push_back(&p.image);
            truth_labels.push_back(&p.labels);
        }
    } else {
        truth.push_back(&gt.image);
        truth_labels.push_back(&gt.labels);
    }
    const size_t n_phases = truth.size();

    AcquisitionTrace trace;
    trace.case_id = acq.case_id;
    trace.true_metric = gt.true_metric;

    for (size_t t = 0; t < schedule.factors.size(); ++t) {
        const double R = schedule.factors[t];
        const SamplingMask& mask = schedule.masks[t];
        if (mask.phases.size() != n_phases)
            throw std::invalid_argument("run_adaptive: mask phase count mismatch");

        const auto t0 = std::chrono::steady_clock::now();
        StepRecord rec;
        rec.R = R;

        std::vector<ReconSampleSet> sets;
        for (size_t p = 0; p < n_phases; ++p) {
            // noise seed is per phase but NOT per step: earlier measurements
            // are reused as the mask densifies
            const MultiCoilKSpace y = forward(*truth[p], sens, mask.phases[p], acq.noise_std,
                                              derive_seed(seed, 0xa0u, p));
            sets.push_back(sample_posterior(y, sens, sampler_cfg, acq.M,
                                            derive_seed(seed, 0xb0u, t * n_phases + p)));
        }

        bool degenerate = false;
        MetricDistribution dist;
        try {
            dist = two_phase ? propagate_lvef(sets[0], sets[1], seg_kind, acq.class_id,
                                              gt.voxel_spacing)
                             : propagate_volume(sets[0], seg_kind, acq.class_id, gt.voxel_spacing);
        } catch (const std::domain_error& e) {
            rec.warning = e.what();
            degenerate = true;
        }

        if (!degenerate) {
            const double q = policy.use_calibration ? calibrator.q_for(R) : 1.0;
            rec.interval = interval(dist.mean, dist.std, q, calibrator.sigma_floor);
            rec.w_hat = dist.mean;
            rec.sigma = dist.std;
            rec.error_vs_truth = std::abs(dist.mean - gt.true_metric);

            double ssim_acc = 0.0, psnr_acc = 0.0, dice_acc = 0.0;
            for (size_t p = 0; p < n_phases; ++p) {
                RealImage rm = magnitude(sets[p].posterior_mean);
                RealImage tm = magnitude(*truth[p]);
                const double scale = detail::quality_scale(tm);
                for (auto& v : rm.data) v /= scale;
                for (auto& v : tm.data) v /= scale;
                ssim_acc += ssim(rm, tm, 1.0);
                psnr_acc += psnr(rm, tm, 1.0);
                dice_acc += dice(segment(sets[p].posterior_mean, seg_kind), *truth_labels[p],
                                 acq.class_id);
            }
            rec.ssim = ssim_acc / static_cast<double>(n_phases);
            rec.psnr = psnr_acc / static_cast<double>(n_phases);
            rec.dice = dice_acc / static_cast<double>(n_phases);
        }

        rec.wall_time_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        trace.steps.push_back(rec);

        if (!degenerate) {
            trace.final_interval = rec.interval;
            trace.final_error = rec.error_vs_truth;
            if (stop_check(rec.interval, policy)) {
                trace.stopped = true;
                trace.stopped_at_R = R;
                return trace;
            }
        }
    }
    trace.stopped = false;
    trace.stopped_at_R = schedule.factors.back();
    return trace;
}

/// Replay a recorded per-step (w_hat, sigma) sequence through a stopping
/// policy without re-running the pipeline. Returns the 0-based index of the
/// stopping step, or steps.size() if the scan runs to the end.
struct ReplayStep {
    double R = 1.0;
    double w_hat = 0.0;
    double sigma = 0.0;
};

inline size_t replay_stop_index(std::span<const ReplayStep> steps,
                                const CalibratorTable& calibrator, bool use_calibration,
                                const StoppingPolicy& policy) {
    for (size_t t = 0; t < steps.size(); ++t) {
        const double q = use_calibration ? calibrator.q_for(steps[t].R) : 1.0;
        const PredictionInterval iv =
            interval(steps[t].w_hat, steps[t].sigma, q, calibrator.sigma_floor);
        if (stop_check(iv, policy)) return t;
    }
    return steps.size();
}

}  // namespace uqmr
