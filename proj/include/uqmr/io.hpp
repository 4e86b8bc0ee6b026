#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "uqmr/conformal.hpp"
#include "uqmr/controller.hpp"
#include "uqmr/phantom.hpp"
#include "uqmr/sampling.hpp"

namespace uqmr {

/// Shortest round-trip decimal formatting; infinities serialize as "inf".
/// Used for every CSV cell so outputs are reproducible byte-for-byte.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// JSON value for a double; non-finite values become strings ("inf", "-inf",
/// "nan") since JSON has no literal for them.
inline nlohmann::json json_number(double v) {
    if (std::isfinite(v)) return v;
    return format_double(v);
}

inline double json_to_double(const nlohmann::json& j) {
    if (j.is_number()) return j.get<double>();
    const std::string s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw std::invalid_argument("expected a number, got '" + s + "'");
}

// ---------------------------------------------------------------------------
// flat little-endian float32 arrays + JSON sidecars

inline void write_f32(const std::filesystem::path& path, std::span<const float> data) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
    f.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
}

inline std::vector<float> read_f32(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw std::runtime_error("cannot open for reading: " + path.string());
    const auto bytes = static_cast<size_t>(f.tellg());
    if (bytes % sizeof(float) != 0)
        throw std::runtime_error("file size not a multiple of 4: " + path.string());
    std::vector<float> data(bytes / sizeof(float));
    f.seekg(0);
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
    return data;
}

/// Complex arrays are stored as two planes: all real values then all
/// imaginary values, row-major within each plane.
inline std::vector<float> complex_to_planar(const ComplexImage& x) {
    std::vector<float> out(2 * x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        out[i] = static_cast<float>(x.data[i].real());
        out[x.size() + i] = static_cast<float>(x.data[i].imag());
    }
    return out;
}

inline ComplexImage planar_to_complex(std::span<const float> v, int rows, int cols) {
    const size_t n = static_cast<size_t>(rows) * cols;
    if (v.size() != 2 * n) throw std::invalid_argument("planar complex size mismatch");
    ComplexImage x(rows, cols);
    for (size_t i = 0; i < n; ++i) x.data[i] = cplx(v[i], v[n + i]);
    return x;
}

inline std::vector<float> labels_to_f32(const LabelMap& l) {
    std::vector<float> out(l.size());
    for (size_t i = 0; i < l.size(); ++i) out[i] = static_cast<float>(l.data[i]);
    return out;
}

inline std::vector<float> mask_to_f32(const Mask2D& m) {
    std::vector<float> out(m.total());
    for (size_t i = 0; i < m.total(); ++i) out[i] = static_cast<float>(m.on[i]);
    return out;
}

/// Persist one case as case_<index>_<field>.bin files plus a JSON sidecar.
inline void save_case(const std::filesystem::path& dir, int index, const GroundTruthCase& gt,
                      const CoilSensitivities& sens) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    char name[32];
    std::snprintf(name, sizeof(name), "case_%04d", index);
    const std::string base = name;

    nlohmann::json side;
    side["case_id"] = base;
    side["kind"] = to_string(gt.kind);
    side["grid"] = {gt.image.rows, gt.image.cols};
    side["voxel_spacing"] = {gt.voxel_spacing.dx, gt.voxel_spacing.dy, gt.voxel_spacing.dz};
    side["seed"] = gt.seed;
    side["true_metric"] = json_number(gt.true_metric);
    side["metric_units"] = gt.kind == PhantomKind::KneeStatic ? "cm3" : "percent";
    side["dtype"] = "float32_le";
    side["complex_encoding"] = "planar_re_im";
    side["labels_encoding"] = "float32 integer values; 0=background 1=structure 2=distractor";

    nlohmann::json fields = nlohmann::json::array();
    const auto write_complex = [&](const std::string& field, const ComplexImage& x) {
        write_f32(dir / (base + "_" + field + ".bin"), complex_to_planar(x));
        fields.push_back({{"name", field}, {"shape", {2, x.rows, x.cols}}, {"complex", true}});
    };
    const auto write_labels = [&](const std::string& field, const LabelMap& l) {
        write_f32(dir / (base + "_" + field + ".bin"), labels_to_f32(l));
        fields.push_back({{"name", field}, {"shape", {l.rows, l.cols}}, {"complex", false}});
    };

    if (gt.kind == PhantomKind::KneeStatic) {
        write_complex("image", gt.image);
        write_labels("labels", gt.labels);
    } else {
        write_complex("image_ed", gt.phases[0].image);
        write_labels("labels_ed", gt.phases[0].labels);
        write_complex("image_es", gt.phases[1].image);
        write_labels("labels_es", gt.phases[1].labels);
    }
    {
        std::vector<float> packed;
        for (const auto& m : sens.maps) {
            const auto p = complex_to_planar(m);
            packed.insert(packed.end(), p.begin(), p.end());
        }
        write_f32(dir / (base + "_coils.bin"), packed);
        fields.push_back({{"name", "coils"},
                          {"shape", {sens.n_coils(), 2, sens.rows(), sens.cols()}},
                          {"complex", true}});
    }
    side["fields"] = fields;

    std::ofstream f(dir / (base + ".json"));
    f << side.dump(2) << "\n";
}

/// Persist a mask with its provenance sidecar.
inline void save_mask(const std::filesystem::path& dir, const std::string& stem,
                      const SamplingMask& m) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<float> packed;
    for (const auto& ph : m.phases) {
        const auto v = mask_to_f32(ph);
        packed.insert(packed.end(), v.begin(), v.end());
    }
    write_f32(dir / (stem + ".bin"), packed);
    nlohmann::json side;
    side["kind"] = to_string(m.kind);
    side["target_R"] = m.target_R;
    side["realized_R"] = json_number(acceleration_of(m));
    side["seed"] = m.seed;
    side["center_radius"] = m.center_radius;
    side["phases"] = m.phases.size();
    side["shape"] = {m.phases[0].rows, m.phases[0].cols};
    std::ofstream f(dir / (stem + ".json"));
    f << side.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// calibrator table JSON

inline nlohmann::json calibrator_to_json(const CalibratorTable& t) {
    nlohmann::json j;
    j["alpha"] = t.alpha;
    j["sigma_floor"] = t.sigma_floor;
    j["entries"] = nlohmann::json::array();
    for (const auto& e : t.entries)
        j["entries"].push_back(
            {{"R", e.R}, {"q_hat", json_number(e.q_hat)}, {"n_calib", e.n_calib}});
    return j;
}

inline CalibratorTable calibrator_from_json(const nlohmann::json& j) {
    CalibratorTable t;
    t.alpha = j.at("alpha").get<double>();
    t.sigma_floor = j.at("sigma_floor").get<double>();
    for (const auto& e : j.at("entries"))
        t.entries.push_back({e.at("R").get<double>(), json_to_double(e.at("q_hat")),
                             e.at("n_calib").get<int>()});
    return t;
}

inline void save_calibrator(const std::filesystem::path& path, const CalibratorTable& t) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
    f << calibrator_to_json(t).dump(2) << "\n";
}

inline CalibratorTable load_calibrator(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open for reading: " + path.string());
    nlohmann::json j;
    f >> j;
    return calibrator_from_json(j);
}

// ---------------------------------------------------------------------------
// CSV with deterministic formatting

class CsvWriter {
  public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
        : f_(path) {
        if (!f_) throw std::runtime_error("cannot open for writing: " + path.string());
        for (size_t i = 0; i < header.size(); ++i) f_ << (i ? "," : "") << header[i];
        f_ << "\n";
    }

    void row(const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) f_ << (i ? "," : "") << cells[i];
        f_ << "\n";
    }

  private:
    std::ofstream f_;
};

// ---------------------------------------------------------------------------
// acquisition traces as JSON lines: one step per line, then a summary
// trailer per trace. Wall-clock timings are reported separately so these
// files are byte-reproducible from (config, seed).

inline void append_trace_jsonl(std::ostream& os, const AcquisitionTrace& trace,
                               const std::string& arm) {
    for (size_t t = 0; t < trace.steps.size(); ++t) {
        const StepRecord& s = trace.steps[t];
        nlohmann::json j;
        j["type"] = "step";
        j["case"] = trace.case_id;
        j["arm"] = arm;
        j["step"] = t;
        j["R"] = s.R;
        if (s.warning.empty()) {
            j["w_hat"] = json_number(s.w_hat);
            j["sigma"] = json_number(s.sigma);
            j["lo"] = json_number(s.interval.lo);
            j["hi"] = json_number(s.interval.hi);
            j["width"] = json_number(s.interval.width);
            j["error"] = json_number(s.error_vs_truth);
            j["ssim"] = json_number(s.ssim);
            j["psnr"] = json_number(s.psnr);
            j["dice"] = json_number(s.dice);
        } else {
            j["warning"] = s.warning;
        }
        os << j.dump() << "\n";
    }
    nlohmann::json j;
    j["type"] = "summary";
    j["case"] = trace.case_id;
    j["arm"] = arm;
    j["stopped"] = trace.stopped;
    j["stopped_at_R"] = trace.stopped_at_R;
    j["steps"] = trace.steps.size();
    j["final_width"] = json_number(trace.final_interval.width);
    j["final_error"] = json_number(trace.final_error);
    j["true_metric"] = json_number(trace.true_metric);
    j["covered"] = trace.final_interval.contains(trace.true_metric);
    os << j.dump() << "\n";
}

}  // namespace uqmr
