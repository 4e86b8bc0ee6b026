// Command-line front end: cohort generation, per-R conformal calibration,
// adaptive-run experiments, quality sweeps and coverage simulation.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "uqmr/config.hpp"
#include "uqmr/harness.hpp"
#include "uqmr/io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitRuntimeError = 3;

struct CommonArgs {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> jobs;
};

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "experiment config JSON")->required();
    sub->add_option("--seed", args.seed, "override the config seed");
    sub->add_option("--out", args.out, "override the output directory");
    sub->add_option("--jobs", args.jobs, "worker count (default from config)");
}

uqmr::ExperimentConfig load(const CommonArgs& args, uqmr::ExperimentKind kind) {
    uqmr::ExperimentConfig cfg = uqmr::load_config(args.config_path);
    cfg.kind = kind;
    if (args.seed) cfg.seed = *args.seed;
    if (args.out) cfg.out_dir = *args.out;
    if (args.jobs) cfg.jobs = *args.jobs;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"uncertainty-guided adaptive MR acquisition simulator"};
    app.require_subcommand(1);

    CommonArgs cal_args, run_args, sweep_args, cov_args, cohort_args;
    std::string table_path;

    CLI::App* cal = app.add_subcommand("calibrate", "per-R conformal calibration");
    add_common(cal, cal_args);

    CLI::App* run = app.add_subcommand("run-adaptive", "adaptive stopping experiment");
    add_common(run, run_args);
    run->add_option("--table", table_path,
                    "calibration table JSON (default: <out>/calibration_table.json)");

    CLI::App* sweep = app.add_subcommand("sweep-quality", "quality metrics per acceleration");
    add_common(sweep, sweep_args);

    CLI::App* cov = app.add_subcommand("coverage-sim", "Monte-Carlo conformal coverage check");
    add_common(cov, cov_args);

    CLI::App* cohort = app.add_subcommand("make-cohort", "generate and persist phantom cohorts");
    add_common(cohort, cohort_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (cal->parsed()) {
            const auto cfg = load(cal_args, uqmr::ExperimentKind::Calibrate);
            const auto out = uqmr::cmd_calibrate(cfg);
            uqmr::write_calibrate_output(cfg, out);
            for (const auto& e : out.table.entries)
                std::printf("R=%g  q_hat=%s  n_calib=%d%s\n", e.R,
                            uqmr::format_double(e.q_hat).c_str(), e.n_calib,
                            std::isinf(e.q_hat) ? "  [sentinel: guarantee unattainable]" : "");
        } else if (run->parsed()) {
            const auto cfg = load(run_args, uqmr::ExperimentKind::RunAdaptive);
            const std::filesystem::path table_file =
                table_path.empty() ? std::filesystem::path(cfg.out_dir) / "calibration_table.json"
                                   : std::filesystem::path(table_path);
            const auto table = uqmr::load_calibrator(table_file);
            const auto out = uqmr::cmd_run_adaptive(cfg, table);
            uqmr::write_run_output(cfg, out);
            for (const auto* arm : {&out.calibrated, &out.uncalibrated}) {
                const auto a = out.aggregate(*arm);
                std::printf("%-13s mean_stop_R=%.3f mean_error=%.4f covered=%.3f\n",
                            arm == &out.calibrated ? "calibrated" : "uncalibrated",
                            a.mean_stopped_at_R, a.mean_error, a.covered_fraction);
            }
        } else if (sweep->parsed()) {
            const auto cfg = load(sweep_args, uqmr::ExperimentKind::SweepQuality);
            const auto out = uqmr::cmd_sweep_quality(cfg);
            uqmr::write_sweep_output(cfg, out);
            for (const auto& r : out.rows)
                std::printf("R=%-5g ssim=%.4f psnr=%.2f dice=%.4f\n", r.R, r.mean_ssim,
                            r.mean_psnr, r.mean_dice);
        } else if (cov->parsed()) {
            const auto cfg = load(cov_args, uqmr::ExperimentKind::CoverageSim);
            const auto cells = uqmr::cmd_coverage_sim(cfg);
            uqmr::write_coverage_output(cfg, cells);
            for (const auto& c : cells)
                std::printf("n_calib=%-4d alpha=%.3f coverage=%s sentinel_rate=%.3f\n", c.n_calib,
                            c.alpha, uqmr::format_double(c.mean_coverage).c_str(),
                            c.sentinel_rate);
        } else if (cohort->parsed()) {
            const auto cfg = load(cohort_args, uqmr::ExperimentKind::RunAdaptive);
            uqmr::cmd_make_cohort(cfg);
            std::printf("wrote %d calibration and %d test cases to %s\n", cfg.n_calib, cfg.n_test,
                        cfg.out_dir.c_str());
        }
    } catch (const uqmr::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntimeError;
    }
    return kExitOk;
}
