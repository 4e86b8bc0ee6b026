#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "uqmr/controller.hpp"
#include "uqmr/phantom.hpp"
#include "uqmr/recon.hpp"
#include "uqmr/sampling.hpp"

namespace uqmr {

/// Configuration errors carry the JSON path of the offending key.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& path, const std::string& what)
        : std::runtime_error("config error at " + path + ": " + what) {}
};

enum class ExperimentKind { Calibrate, RunAdaptive, SweepQuality, CoverageSim };

inline std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::Calibrate: return "Calibrate";
        case ExperimentKind::RunAdaptive: return "RunAdaptive";
        case ExperimentKind::SweepQuality: return "SweepQuality";
        default: return "CoverageSim";
    }
}

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
    if (s == "Calibrate") return ExperimentKind::Calibrate;
    if (s == "RunAdaptive") return ExperimentKind::RunAdaptive;
    if (s == "SweepQuality") return ExperimentKind::SweepQuality;
    if (s == "CoverageSim") return ExperimentKind::CoverageSim;
    throw std::invalid_argument("unknown experiment kind: " + s);
}

struct ScheduleConfig {
    MaskKind mask_kind = MaskKind::PoissonDisc;
    std::vector<double> factors = AccelerationSchedule::default_factors();
    int center_radius = 2;

    bool operator==(const ScheduleConfig&) const = default;
};

/// Synthetic exchangeable record population for the coverage simulation.
struct CoverageSimConfig {
    std::vector<int> n_calibs = {50};
    std::vector<double> alphas = {0.1};
    int n_trials = 1000;
    int n_test = 100;
    double miscalibration = 2.0;  // true error spread / heuristic sigma

    bool operator==(const CoverageSimConfig&) const = default;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::RunAdaptive;
    PhantomSpec phantom;
    ScheduleConfig schedule;
    PosteriorSamplerConfig sampler;
    bool noise_auto = true;    // forward noise = 1% of max k-space magnitude
    double noise_std = 0.0;    // used when noise_auto is false
    bool sampler_noise_auto = true;  // noise_precision matched to forward noise
    double alpha = 0.1;
    double epsilon = 0.5;
    WidthMode width_mode = WidthMode::FullWidth;
    int n_calib = 10;
    int n_test = 10;
    int M = 20;
    uint64_t seed = 0;
    std::string out_dir = "out";
    int jobs = 1;
    CoverageSimConfig coverage;

    bool operator==(const ExperimentConfig&) const = default;

    void validate() const {
        if (n_calib < 1) throw ConfigError("/n_calib", "must be >= 1");
        if (n_test < 1) throw ConfigError("/n_test", "must be >= 1");
        if (M < 2) throw ConfigError("/M", "must be >= 2 for spread estimation");
        if (alpha <= 0 || alpha >= 1) throw ConfigError("/alpha", "must lie in (0, 1)");
        if (epsilon < 0) throw ConfigError("/epsilon", "must be >= 0");
        if (jobs < 1) throw ConfigError("/jobs", "must be >= 1");
        if (!noise_auto && noise_std < 0) throw ConfigError("/noise_std", "must be >= 0");
        if (schedule.factors.empty()) throw ConfigError("/schedule/factors", "must be non-empty");
        for (size_t i = 1; i < schedule.factors.size(); ++i)
            if (schedule.factors[i] >= schedule.factors[i - 1])
                throw ConfigError("/schedule/factors", "must be strictly decreasing");
        if (kind == ExperimentKind::CoverageSim) {
            if (coverage.n_trials < 1) throw ConfigError("/coverage/n_trials", "must be >= 1");
            if (coverage.n_test < 1) throw ConfigError("/coverage/n_test", "must be >= 1");
            if (coverage.n_calibs.empty()) throw ConfigError("/coverage/n_calibs", "non-empty");
            if (coverage.alphas.empty()) throw ConfigError("/coverage/alphas", "non-empty");
        }
        try {
            phantom.validate();
        } catch (const std::exception& e) {
            throw ConfigError("/phantom", e.what());
        }
        try {
            sampler.validate();
        } catch (const std::exception& e) {
            throw ConfigError("/sampler", e.what());
        }
    }
};

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const std::string& key,
                                     const std::string& path) {
    if (!j.contains(key)) throw ConfigError(path + "/" + key, "missing required key");
    return j.at(key);
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T dflt, const std::string& path) {
    if (!j.contains(key)) return dflt;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + "/" + key, e.what());
    }
}

}  // namespace detail

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["kind"] = to_string(c.kind);
    j["phantom"] = {{"kind", to_string(c.phantom.kind)},
                    {"grid_size", c.phantom.grid_size},
                    {"voxel_spacing",
                     {c.phantom.voxel_spacing.dx, c.phantom.voxel_spacing.dy,
                      c.phantom.voxel_spacing.dz}},
                    {"n_coils", c.phantom.n_coils}};
    if (!c.phantom.shape_params.empty()) j["phantom"]["shape_params"] = c.phantom.shape_params;
    j["schedule"] = {{"mask_kind", to_string(c.schedule.mask_kind)},
                     {"factors", c.schedule.factors},
                     {"center_radius", c.schedule.center_radius}};
    j["sampler"] = {{"prior_precision", c.sampler.prior_precision},
                    {"noise_precision", c.sampler.noise_precision},
                    {"solver", c.sampler.solver == SolverKind::Dense ? "Dense" : "ConjugateGradient"},
                    {"cg_tol", c.sampler.cg_tol},
                    {"cg_max_iter", c.sampler.cg_max_iter},
                    {"overconfidence_shrink", c.sampler.overconfidence_shrink}};
    if (c.noise_auto)
        j["noise_std"] = "auto";
    else
        j["noise_std"] = c.noise_std;
    j["sampler_noise"] = c.sampler_noise_auto ? "auto" : "explicit";
    j["alpha"] = c.alpha;
    j["epsilon"] = c.epsilon;
    j["width_mode"] = c.width_mode == WidthMode::FullWidth ? "FullWidth" : "HalfWidth";
    j["n_calib"] = c.n_calib;
    j["n_test"] = c.n_test;
    j["M"] = c.M;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    j["jobs"] = c.jobs;
    j["coverage"] = {{"n_calibs", c.coverage.n_calibs},
                     {"alphas", c.coverage.alphas},
                     {"n_trials", c.coverage.n_trials},
                     {"n_test", c.coverage.n_test},
                     {"miscalibration", c.coverage.miscalibration}};
    return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    try {
        c.kind = experiment_kind_from_string(detail::require(j, "kind", "").get<std::string>());
    } catch (const std::invalid_argument& e) {
        throw ConfigError("/kind", e.what());
    }
    if (j.contains("phantom")) {
        const auto& p = j.at("phantom");
        if (p.contains("kind")) {
            try {
                c.phantom.kind = phantom_kind_from_string(p.at("kind").get<std::string>());
            } catch (const std::invalid_argument& e) {
                throw ConfigError("/phantom/kind", e.what());
            }
        }
        c.phantom.grid_size = detail::get_or(p, "grid_size", c.phantom.grid_size, "/phantom");
        if (p.contains("voxel_spacing")) {
            const auto& v = p.at("voxel_spacing");
            if (!v.is_array() || v.size() != 3)
                throw ConfigError("/phantom/voxel_spacing", "expected [dx, dy, dz]");
            c.phantom.voxel_spacing = {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
        }
        c.phantom.n_coils = detail::get_or(p, "n_coils", c.phantom.n_coils, "/phantom");
        if (p.contains("shape_params"))
            c.phantom.shape_params =
                p.at("shape_params").get<std::map<std::string, double>>();
    }
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        if (s.contains("mask_kind")) {
            try {
                c.schedule.mask_kind = mask_kind_from_string(s.at("mask_kind").get<std::string>());
            } catch (const std::invalid_argument& e) {
                throw ConfigError("/schedule/mask_kind", e.what());
            }
        }
        c.schedule.factors =
            detail::get_or(s, "factors", c.schedule.factors, "/schedule");
        c.schedule.center_radius =
            detail::get_or(s, "center_radius", c.schedule.center_radius, "/schedule");
    }
    if (j.contains("sampler")) {
        const auto& s = j.at("sampler");
        c.sampler.prior_precision =
            detail::get_or(s, "prior_precision", c.sampler.prior_precision, "/sampler");
        c.sampler.noise_precision =
            detail::get_or(s, "noise_precision", c.sampler.noise_precision, "/sampler");
        if (s.contains("solver")) {
            const std::string sv = s.at("solver").get<std::string>();
            if (sv == "Dense")
                c.sampler.solver = SolverKind::Dense;
            else if (sv == "ConjugateGradient")
                c.sampler.solver = SolverKind::ConjugateGradient;
            else
                throw ConfigError("/sampler/solver", "expected Dense or ConjugateGradient");
        }
        c.sampler.cg_tol = detail::get_or(s, "cg_tol", c.sampler.cg_tol, "/sampler");
        c.sampler.cg_max_iter = detail::get_or(s, "cg_max_iter", c.sampler.cg_max_iter, "/sampler");
        c.sampler.overconfidence_shrink =
            detail::get_or(s, "overconfidence_shrink", c.sampler.overconfidence_shrink, "/sampler");
    }
    if (j.contains("noise_std")) {
        if (j.at("noise_std").is_string()) {
            if (j.at("noise_std").get<std::string>() != "auto")
                throw ConfigError("/noise_std", "expected a number or \"auto\"");
            c.noise_auto = true;
        } else {
            c.noise_auto = false;
            c.noise_std = j.at("noise_std").get<double>();
        }
    }
    if (j.contains("sampler_noise")) {
        const std::string s = j.at("sampler_noise").get<std::string>();
        if (s == "auto")
            c.sampler_noise_auto = true;
        else if (s == "explicit")
            c.sampler_noise_auto = false;
        else
            throw ConfigError("/sampler_noise", "expected \"auto\" or \"explicit\"");
    }
    c.alpha = detail::get_or(j, "alpha", c.alpha, "");
    c.epsilon = detail::get_or(j, "epsilon", c.epsilon, "");
    if (j.contains("width_mode")) {
        const std::string w = j.at("width_mode").get<std::string>();
        if (w == "FullWidth")
            c.width_mode = WidthMode::FullWidth;
        else if (w == "HalfWidth")
            c.width_mode = WidthMode::HalfWidth;
        else
            throw ConfigError("/width_mode", "expected FullWidth or HalfWidth");
    }
    c.n_calib = detail::get_or(j, "n_calib", c.n_calib, "");
    c.n_test = detail::get_or(j, "n_test", c.n_test, "");
    c.M = detail::get_or(j, "M", c.M, "");
    c.seed = detail::get_or(j, "seed", c.seed, "");
    c.out_dir = detail::get_or(j, "out_dir", c.out_dir, "");
    c.jobs = detail::get_or(j, "jobs", c.jobs, "");
    if (j.contains("coverage")) {
        const auto& v = j.at("coverage");
        c.coverage.n_calibs = detail::get_or(v, "n_calibs", c.coverage.n_calibs, "/coverage");
        c.coverage.alphas = detail::get_or(v, "alphas", c.coverage.alphas, "/coverage");
        c.coverage.n_trials = detail::get_or(v, "n_trials", c.coverage.n_trials, "/coverage");
        c.coverage.n_test = detail::get_or(v, "n_test", c.coverage.n_test, "/coverage");
        c.coverage.miscalibration =
            detail::get_or(v, "miscalibration", c.coverage.miscalibration, "/coverage");
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("/", "cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("/", std::string("invalid JSON: ") + e.what());
    }
    return config_from_json(j);
}

}  // namespace uqmr
