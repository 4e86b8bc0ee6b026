#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "uqmr/config.hpp"
#include "uqmr/controller.hpp"
#include "uqmr/io.hpp"

namespace uqmr {

inline constexpr double kDefaultSigmaFloor = 1e-6;  // metric units

/// Bounded worker pool over [0, n). Each index is computed purely from the
/// config and its own derived seed and written to its own slot, so the job
/// count never changes any output bytes.
template <typename F>
void parallel_for(int n, int jobs, F&& fn) {
    jobs = std::min(jobs, n);
    if (jobs <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex err_mx;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(jobs));
    for (int j = 0; j < jobs; ++j)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(err_mx);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// seed stream tags for the disjoint cohorts
inline constexpr uint64_t kCalibStream = 0xca11b;
inline constexpr uint64_t kTestStream = 0x7e57;

/// Everything needed to run one case through the pipeline.
struct CaseContext {
    GroundTruthCase gt;
    CoilSensitivities sens;
    AccelerationSchedule schedule;
    PosteriorSamplerConfig sampler;
    double noise_std = 0.0;
    std::string case_id;
    uint64_t run_seed = 0;
};

/// Default forward noise: 1% of the maximum coil-image k-space magnitude.
inline double auto_noise_std(const GroundTruthCase& gt, const CoilSensitivities& sens) {
    double kmax = 0.0;
    std::vector<const ComplexImage*> images;
    if (gt.kind == PhantomKind::CardiacTwoPhase)
        for (const auto& p : gt.phases) images.push_back(&p.image);
    else
        images.push_back(&gt.image);
    for (const auto* x : images)
        for (const auto& s : sens.maps) {
            ComplexImage k(x->rows, x->cols);
            for (size_t i = 0; i < k.size(); ++i) k.data[i] = s.data[i] * x->data[i];
            fft2_inplace(k, false);
            for (const auto& z : k.data) kmax = std::max(kmax, std::abs(z));
        }
    return 0.01 * kmax;
}

inline CaseContext build_case(const ExperimentConfig& cfg, uint64_t stream_tag, int index) {
    PhantomSpec spec = cfg.phantom;
    spec.seed = derive_seed(cfg.seed, stream_tag, static_cast<uint64_t>(index));

    CaseContext ctx;
    ctx.gt = make_case(spec);
    ctx.sens = make_coils(spec.grid_size, spec.n_coils, derive_seed(spec.seed, 0xc0115u));
    ctx.noise_std = cfg.noise_auto ? auto_noise_std(ctx.gt, ctx.sens) : cfg.noise_std;
    ctx.sampler = cfg.sampler;
    if (cfg.sampler_noise_auto && ctx.noise_std > 0)
        ctx.sampler.noise_precision = 1.0 / (ctx.noise_std * ctx.noise_std);
    ctx.run_seed = derive_seed(spec.seed, 0x5eedu);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "case_%04d", index);
    ctx.case_id = buf;

    const int g = spec.grid_size;
    const int n_phases = ctx.gt.kind == PhantomKind::CardiacTwoPhase ? 2 : 1;
    const uint64_t mask_seed = derive_seed(spec.seed, 0x3a5cu);
    if (cfg.schedule.mask_kind == MaskKind::VistaLike) {
        ctx.schedule = nested_schedule(MaskKind::VistaLike, {g, n_phases}, cfg.schedule.factors,
                                       cfg.schedule.center_radius, mask_seed);
    } else if (cfg.schedule.mask_kind == MaskKind::PoissonDisc) {
        ctx.schedule = nested_schedule(MaskKind::PoissonDisc, {g, g}, cfg.schedule.factors,
                                       cfg.schedule.center_radius, mask_seed);
        if (n_phases == 2)
            for (auto& m : ctx.schedule.masks) m.phases.push_back(m.phases[0]);
    } else {
        ctx.schedule.factors = cfg.schedule.factors;
        for (double R : cfg.schedule.factors) {
            (void)R;
            ctx.schedule.masks.push_back(full_mask({g, g}, n_phases));
        }
    }
    return ctx;
}

inline AcquireParams acquire_params(const ExperimentConfig& cfg, const CaseContext& ctx) {
    AcquireParams a;
    a.noise_std = ctx.noise_std;
    a.M = cfg.M;
    a.class_id = kClassStructure;
    a.case_id = ctx.case_id;
    return a;
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateOutput {
    CalibratorTable table;
    std::vector<CalibrationRecord> records;   // case-major, schedule order
    std::vector<std::string> record_case_ids;  // parallel to records
};

/// Training-free split-conformal calibration: run every calibration case
/// through all schedule steps (never stopping) and take the per-R quantile of
/// the normalized errors. The per-step pipeline is the same run_adaptive path
/// used at test time, so calibration and test (w_hat, sigma) are exchangeable.
inline CalibrateOutput cmd_calibrate(const ExperimentConfig& cfg) {
    cfg.validate();
    const int n = cfg.n_calib;
    std::vector<std::vector<CalibrationRecord>> per_case(static_cast<size_t>(n));
    std::vector<std::string> ids(static_cast<size_t>(n));
    parallel_for(n, cfg.jobs, [&](int i) {
        const CaseContext ctx = build_case(cfg, kCalibStream, i);
        StoppingPolicy never;
        never.epsilon = 0.0;  // run to the densest mask
        never.use_calibration = false;
        const AcquisitionTrace trace =
            run_adaptive(ctx.gt, ctx.sens, ctx.schedule, ctx.sampler, acquire_params(cfg, ctx),
                         ctx.gt.kind, CalibratorTable{}, never, ctx.run_seed);
        for (const auto& step : trace.steps) {
            if (!step.warning.empty()) continue;
            per_case[i].push_back({ctx.gt.true_metric, step.w_hat, step.sigma, step.R});
        }
        ids[i] = ctx.case_id;
    });

    CalibrateOutput out;
    for (size_t i = 0; i < per_case.size(); ++i)
        for (const auto& r : per_case[i]) {
            out.records.push_back(r);
            out.record_case_ids.push_back(ids[i]);
        }
    out.table =
        calibrate_per_factor(out.records, cfg.schedule.factors, cfg.alpha, kDefaultSigmaFloor);
    return out;
}

inline void write_calibrate_output(const ExperimentConfig& cfg, const CalibrateOutput& out) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    save_calibrator(fs::path(cfg.out_dir) / "calibration_table.json", out.table);
    CsvWriter csv(fs::path(cfg.out_dir) / "calibration_scores.csv",
                  {"case_id", "R", "w_true", "w_hat", "sigma", "score"});
    for (size_t i = 0; i < out.records.size(); ++i) {
        const auto& r = out.records[i];
        csv.row({out.record_case_ids[i], format_double(r.R), format_double(r.w_true),
                 format_double(r.w_hat), format_double(r.sigma),
                 format_double(nonconformity_score(r, out.table.sigma_floor))});
    }
}

// ---------------------------------------------------------------------------
// run-adaptive

struct RunAdaptiveOutput {
    std::vector<AcquisitionTrace> calibrated;
    std::vector<AcquisitionTrace> uncalibrated;

    struct Aggregate {
        double mean_stopped_at_R = 0.0;
        double mean_error = 0.0;
        double covered_fraction = 0.0;
        double mean_width = 0.0;
        double stopped_fraction = 0.0;
    };
    Aggregate aggregate(const std::vector<AcquisitionTrace>& arm) const {
        Aggregate a;
        for (const auto& t : arm) {
            a.mean_stopped_at_R += t.stopped_at_R;
            a.mean_error += t.final_error;
            a.covered_fraction += t.final_interval.contains(t.true_metric);
            a.mean_width += t.final_interval.width;
            a.stopped_fraction += t.stopped;
        }
        const double n = static_cast<double>(arm.size());
        a.mean_stopped_at_R /= n;
        a.mean_error /= n;
        a.covered_fraction /= n;
        a.mean_width /= n;
        a.stopped_fraction /= n;
        return a;
    }
};

/// Run every test case through both arms (calibrated, uncalibrated q=1) with
/// identical seeds, so the two arms see the same per-step estimates.
inline RunAdaptiveOutput cmd_run_adaptive(const ExperimentConfig& cfg,
                                          const CalibratorTable& table) {
    cfg.validate();
    if (!table.covers(cfg.schedule.factors))
        throw std::invalid_argument("cmd_run_adaptive: table does not cover the schedule");
    const int n = cfg.n_test;
    RunAdaptiveOutput out;
    out.calibrated.resize(static_cast<size_t>(n));
    out.uncalibrated.resize(static_cast<size_t>(n));
    parallel_for(n, cfg.jobs, [&](int i) {
        const CaseContext ctx = build_case(cfg, kTestStream, i);
        StoppingPolicy pol;
        pol.epsilon = cfg.epsilon;
        pol.width_mode = cfg.width_mode;
        pol.use_calibration = true;
        out.calibrated[i] = run_adaptive(ctx.gt, ctx.sens, ctx.schedule, ctx.sampler,
                                         acquire_params(cfg, ctx), ctx.gt.kind, table, pol,
                                         ctx.run_seed);
        pol.use_calibration = false;
        out.uncalibrated[i] = run_adaptive(ctx.gt, ctx.sens, ctx.schedule, ctx.sampler,
                                           acquire_params(cfg, ctx), ctx.gt.kind, table, pol,
                                           ctx.run_seed);
    });
    return out;
}

inline void write_run_output(const ExperimentConfig& cfg, const RunAdaptiveOutput& out) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const fs::path dir(cfg.out_dir);

    CsvWriter summary(dir / "run_summary.csv",
                      {"case_id", "arm", "stopped", "stopped_at_R", "steps", "w_hat",
                       "true_metric", "error_at_stop", "width_at_stop", "covered_at_stop"});
    std::ofstream traces(dir / "traces.jsonl");
    CsvWriter timings(dir / "timings.csv", {"case_id", "arm", "step", "R", "wall_ms"});

    const auto arm_rows = [&](const std::vector<AcquisitionTrace>& arm, const std::string& name) {
        for (const auto& t : arm) {
            const auto& last = t.steps.back();
            summary.row({t.case_id, name, t.stopped ? "1" : "0", format_double(t.stopped_at_R),
                         std::to_string(t.steps.size()), format_double(last.w_hat),
                         format_double(t.true_metric), format_double(t.final_error),
                         format_double(t.final_interval.width),
                         t.final_interval.contains(t.true_metric) ? "1" : "0"});
        }
    };
    for (size_t i = 0; i < out.calibrated.size(); ++i) {
        append_trace_jsonl(traces, out.calibrated[i], "calibrated");
        append_trace_jsonl(traces, out.uncalibrated[i], "uncalibrated");
        for (const auto* arm : {&out.calibrated[i], &out.uncalibrated[i]}) {
            const std::string name = arm == &out.calibrated[i] ? "calibrated" : "uncalibrated";
            for (size_t s = 0; s < arm->steps.size(); ++s)
                timings.row({arm->case_id, name, std::to_string(s),
                             format_double(arm->steps[s].R),
                             format_double(arm->steps[s].wall_time_ms)});
        }
    }
    arm_rows(out.calibrated, "calibrated");
    arm_rows(out.uncalibrated, "uncalibrated");

    for (const auto* arm : {&out.calibrated, &out.uncalibrated}) {
        const std::string name = arm == &out.calibrated ? "calibrated" : "uncalibrated";
        CsvWriter scatter(dir / ("scatter_" + name + ".csv"), {"stopped_at_R", "error_at_stop"});
        for (const auto& t : *arm)
            scatter.row({format_double(t.stopped_at_R), format_double(t.final_error)});
    }

    CsvWriter agg(dir / "run_aggregate.csv",
                  {"arm", "n_cases", "mean_stopped_at_R", "mean_error_at_stop",
                   "covered_fraction", "mean_width", "stopped_fraction"});
    for (const auto* arm : {&out.calibrated, &out.uncalibrated}) {
        const std::string name = arm == &out.calibrated ? "calibrated" : "uncalibrated";
        const auto a = out.aggregate(*arm);
        agg.row({name, std::to_string(arm->size()), format_double(a.mean_stopped_at_R),
                 format_double(a.mean_error), format_double(a.covered_fraction),
                 format_double(a.mean_width), format_double(a.stopped_fraction)});
    }
}

// ---------------------------------------------------------------------------
// sweep-quality

struct SweepRow {
    double R = 1.0;
    double mean_ssim = 0.0;
    double mean_psnr = 0.0;
    double mean_dice = 0.0;
};

struct SweepOutput {
    std::vector<SweepRow> rows;  // schedule order (decreasing R)

    /// Adjacent-pair violations of the expected improve-with-density trend.
    struct Trend {
        int violations = 0;
        double max_rel_violation = 0.0;
    };
    static Trend trend(std::span<const double> vals) {
        Trend t;
        for (size_t i = 1; i < vals.size(); ++i) {
            if (vals[i] < vals[i - 1]) {
                ++t.violations;
                const double denom = std::abs(vals[i - 1]) > 0 ? std::abs(vals[i - 1]) : 1.0;
                t.max_rel_violation =
                    std::max(t.max_rel_violation, (vals[i - 1] - vals[i]) / denom);
            }
        }
        return t;
    }
};

/// Posterior-mean reconstruction quality per acceleration factor, averaged
/// over the test cohort.
inline SweepOutput cmd_sweep_quality(const ExperimentConfig& cfg) {
    cfg.validate();
    const int n = cfg.n_test;
    const size_t n_steps = cfg.schedule.factors.size();
    std::vector<std::vector<std::array<double, 3>>> acc(static_cast<size_t>(n));
    parallel_for(n, cfg.jobs, [&](int i) {
        const CaseContext ctx = build_case(cfg, kTestStream, i);
        const bool two_phase = ctx.gt.kind == PhantomKind::CardiacTwoPhase;
        std::vector<const ComplexImage*> truth;
        std::vector<const LabelMap*> truth_labels;
        if (two_phase)
            for (const auto& p : ctx.gt.phases) {
                truth.push_back(&p.image);
                truth_labels.push_back(&p.labels);
            }
        else {
            truth.push_back(&ctx.gt.image);
            truth_labels.push_back(&ctx.gt.labels);
        }
        acc[i].resize(n_steps);
        for (size_t t = 0; t < n_steps; ++t) {
            double s_acc = 0, p_acc = 0, d_acc = 0;
            for (size_t p = 0; p < truth.size(); ++p) {
                const MultiCoilKSpace y =
                    forward(*truth[p], ctx.sens, ctx.schedule.masks[t].phases[p], ctx.noise_std,
                            derive_seed(ctx.run_seed, 0xa0u, p));
                const ComplexImage xm = posterior_mean(y, ctx.sens, ctx.sampler);
                RealImage rm = magnitude(xm), tm = magnitude(*truth[p]);
                const double scale = detail::quality_scale(tm);
                for (auto& v : rm.data) v /= scale;
                for (auto& v : tm.data) v /= scale;
                s_acc += ssim(rm, tm, 1.0);
                p_acc += psnr(rm, tm, 1.0);
                d_acc += dice(segment(xm, ctx.gt.kind), *truth_labels[p], kClassStructure);
            }
            const double np = static_cast<double>(truth.size());
            acc[i][t] = {s_acc / np, p_acc / np, d_acc / np};
        }
    });
    SweepOutput out;
    for (size_t t = 0; t < n_steps; ++t) {
        SweepRow row;
        row.R = cfg.schedule.factors[t];
        for (int i = 0; i < n; ++i) {
            row.mean_ssim += acc[i][t][0];
            row.mean_psnr += acc[i][t][1];
            row.mean_dice += acc[i][t][2];
        }
        row.mean_ssim /= n;
        row.mean_psnr /= n;
        row.mean_dice /= n;
        out.rows.push_back(row);
    }
    return out;
}

inline void write_sweep_output(const ExperimentConfig& cfg, const SweepOutput& out) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    CsvWriter csv(fs::path(cfg.out_dir) / "sweep_quality.csv",
                  {"R", "mean_ssim", "mean_psnr", "mean_dice"});
    std::vector<double> s, p, d;
    for (const auto& r : out.rows) {
        csv.row({format_double(r.R), format_double(r.mean_ssim), format_double(r.mean_psnr),
                 format_double(r.mean_dice)});
        s.push_back(r.mean_ssim);
        p.push_back(r.mean_psnr);
        d.push_back(r.mean_dice);
    }
    CsvWriter trend(fs::path(cfg.out_dir) / "sweep_trend.csv",
                    {"metric", "violations", "max_rel_violation"});
    const auto ts = SweepOutput::trend(s), tp = SweepOutput::trend(p), td = SweepOutput::trend(d);
    trend.row({"ssim", std::to_string(ts.violations), format_double(ts.max_rel_violation)});
    trend.row({"psnr", std::to_string(tp.violations), format_double(tp.max_rel_violation)});
    trend.row({"dice", std::to_string(td.violations), format_double(td.max_rel_violation)});
}

// ---------------------------------------------------------------------------
// coverage-sim

struct CoverageCell {
    int n_calib = 0;
    double alpha = 0.1;
    int n_trials = 0;
    double sentinel_rate = 0.0;
    double mean_coverage = 0.0;  // over non-sentinel trials; NaN if none
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

/// Monte-Carlo check of the split-conformal guarantee on a synthetic
/// exchangeable population of (w_true, w_hat, sigma) records.
inline std::vector<CoverageCell> cmd_coverage_sim(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto& cov = cfg.coverage;
    std::vector<CoverageCell> cells;
    uint64_t cell_idx = 0;
    for (int n_calib : cov.n_calibs)
        for (double alpha : cov.alphas) {
            CoverageCell cell;
            cell.n_calib = n_calib;
            cell.alpha = alpha;
            cell.n_trials = cov.n_trials;
            std::vector<double> coverages;
            int sentinels = 0;
            for (int trial = 0; trial < cov.n_trials; ++trial) {
                Rng rng(derive_seed(cfg.seed, 0xc0f0u + cell_idx, static_cast<uint64_t>(trial)));
                const auto draw_record = [&] {
                    CalibrationRecord r;
                    r.w_true = rng.normal(10.0, 2.0);
                    r.sigma = std::exp(rng.normal(std::log(0.5), 0.4));
                    r.w_hat = r.w_true + cov.miscalibration * r.sigma * rng.normal();
                    r.R = 1.0;
                    return r;
                };
                std::vector<CalibrationRecord> calib(static_cast<size_t>(n_calib));
                for (auto& r : calib) r = draw_record();
                const double q = calibrate(calib, alpha, kDefaultSigmaFloor);
                if (std::isinf(q)) {
                    ++sentinels;
                    continue;
                }
                std::vector<PredictionInterval> ivs;
                std::vector<double> truths;
                for (int t = 0; t < cov.n_test; ++t) {
                    const CalibrationRecord r = draw_record();
                    ivs.push_back(interval(r.w_hat, r.sigma, q, kDefaultSigmaFloor));
                    truths.push_back(r.w_true);
                }
                coverages.push_back(empirical_coverage(ivs, truths));
            }
            cell.sentinel_rate = static_cast<double>(sentinels) / cov.n_trials;
            if (coverages.empty()) {
                cell.mean_coverage = std::numeric_limits<double>::quiet_NaN();
                cell.ci_lo = cell.ci_hi = cell.mean_coverage;
            } else {
                double m = 0;
                for (double c : coverages) m += c;
                m /= static_cast<double>(coverages.size());
                double var = 0;
                for (double c : coverages) var += (c - m) * (c - m);
                var = coverages.size() > 1 ? var / static_cast<double>(coverages.size() - 1) : 0.0;
                const double se = std::sqrt(var / static_cast<double>(coverages.size()));
                cell.mean_coverage = m;
                cell.ci_lo = m - 1.96 * se;
                cell.ci_hi = m + 1.96 * se;
            }
            cells.push_back(cell);
            ++cell_idx;
        }
    return cells;
}

inline void write_coverage_output(const ExperimentConfig& cfg,
                                  const std::vector<CoverageCell>& cells) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    CsvWriter csv(fs::path(cfg.out_dir) / "coverage_sim.csv",
                  {"n_calib", "alpha", "n_trials", "sentinel_rate", "mean_coverage", "ci_lo",
                   "ci_hi"});
    for (const auto& c : cells)
        csv.row({std::to_string(c.n_calib), format_double(c.alpha), std::to_string(c.n_trials),
                 format_double(c.sentinel_rate), format_double(c.mean_coverage),
                 format_double(c.ci_lo), format_double(c.ci_hi)});
}

// ---------------------------------------------------------------------------
// make-cohort

inline void cmd_make_cohort(const ExperimentConfig& cfg) {
    cfg.validate();
    namespace fs = std::filesystem;
    const fs::path dir(cfg.out_dir);
    const auto emit = [&](const std::string& name, uint64_t stream, int count) {
        for (int i = 0; i < count; ++i) {
            const CaseContext ctx = build_case(cfg, stream, i);
            save_case(dir / name, i, ctx.gt, ctx.sens);
        }
    };
    emit("calib", kCalibStream, cfg.n_calib);
    emit("test", kTestStream, cfg.n_test);
    nlohmann::json manifest;
    manifest["n_calib"] = cfg.n_calib;
    manifest["n_test"] = cfg.n_test;
    manifest["seed"] = cfg.seed;
    manifest["phantom"] = config_to_json(cfg)["phantom"];
    std::ofstream f(dir / "cohort.json");
    f << manifest.dump(2) << "\n";
}

}  // namespace uqmr
