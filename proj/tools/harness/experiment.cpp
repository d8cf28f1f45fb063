#include "harness/experiment.hpp"

#include <algorithm>
#include <cmath>

#include <nearfar/errors.hpp>
#include <nearfar/filters.hpp>

namespace nearfar::harness {

namespace {

std::vector<double> number_list(const Json& j, const std::string& ctx) {
    if (!j.is_array()) throw FormatError("field " + ctx + " must be an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number() || !std::isfinite(j[i].get<double>()))
            throw FormatError("field " + ctx + "[" + std::to_string(i) + "] must be a finite number");
        out.push_back(j[i].get<double>());
    }
    return out;
}

void check_depths(const std::vector<double>& d, const std::string& ctx) {
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (!(d[i] > 0.0)) throw FormatError("field " + ctx + "[" + std::to_string(i) + "] must be positive");
        if (i > 0 && !(d[i] > d[i - 1])) throw FormatError("field " + ctx + " must be strictly increasing");
    }
}

SidePowerMode parse_mode(const std::string& s, const std::string& ctx) {
    if (s == "fixed") return SidePowerMode::fixed;
    if (s == "derived") return SidePowerMode::derived;
    throw FormatError("field " + ctx + " must be \"fixed\" or \"derived\"");
}

std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

ExperimentConfig default_experiment() {
    ExperimentConfig cfg;
    cfg.design.mode = SidePowerMode::derived;
    return cfg;
}

ExperimentConfig experiment_from_json(const Json& j) {
    ExperimentConfig cfg = default_experiment();
    JsonReader r(j, "config");
    r.reject_unknown({"optical", "sensor", "depths", "noise", "seed", "output_dir", "design", "phase", "dfdd",
                      "calibration"});
    if (r.has("optical")) cfg.optical = optical_config_from_json(r.child("optical"), "config.optical");
    if (r.has("sensor")) cfg.sensor = sensor_from_json(r.child("sensor"), "config.sensor");
    if (r.has("depths")) cfg.depths = number_list(r.child("depths"), "config.depths");
    check_depths(cfg.depths, "config.depths");
    if (r.has("noise")) {
        const Json& n = r.child("noise");
        if (n.is_string() && n.get<std::string>() == "off") {
            cfg.noise.enabled = false;
        } else if (n.is_object()) {
            JsonReader nr(n, "config.noise");
            nr.reject_unknown({"gain", "read_sigma"});
            cfg.noise.enabled = true;
            cfg.noise.gain_scale = nr.number("gain", 1.0);
            cfg.noise.read_sigma = nr.number("read_sigma", -1.0);
            if (!(cfg.noise.gain_scale > 0.0)) throw FormatError("field config.noise.gain must be positive");
        } else {
            throw FormatError("field config.noise must be \"off\" or an object");
        }
    }
    cfg.seed = r.unsigned_integer("seed", cfg.seed);
    cfg.output_dir = r.string("output_dir", cfg.output_dir.string());
    if (r.has("design")) {
        JsonReader d(r.child("design"), "config.design");
        d.reject_unknown({"targets", "rho_1", "rho_3", "track_budget", "side_powers", "s1_preferred"});
        if (d.has("targets")) {
            const auto t = number_list(d.child("targets"), "config.design.targets");
            if (t.size() != 3) throw FormatError("field config.design.targets must hold three depths");
            std::copy(t.begin(), t.end(), cfg.design.targets.begin());
        }
        cfg.design.rho_1 = d.number("rho_1", cfg.design.rho_1);
        cfg.design.rho_3 = d.number("rho_3", cfg.design.rho_3);
        cfg.design.track_budget = d.number("track_budget", cfg.design.track_budget);
        cfg.design.s1_preferred = d.number("s1_preferred", cfg.design.s1_preferred);
        if (d.has("side_powers")) cfg.design.mode = parse_mode(d.string("side_powers"), d.path("side_powers"));
    }
    if (r.has("phase")) {
        JsonReader p(r.child("phase"), "config.phase");
        p.reject_unknown({"levels", "pitch", "width", "height"});
        cfg.phase.levels = static_cast<int>(p.integer("levels", cfg.phase.levels));
        cfg.phase.pitch = p.number("pitch", cfg.phase.pitch);
        cfg.phase.width = p.number("width", cfg.phase.width);
        cfg.phase.height = p.number("height", cfg.phase.height);
    }
    if (r.has("dfdd")) {
        JsonReader d(r.child("dfdd"), "config.dfdd");
        d.reject_unknown({"presmooth_sigma", "aspect", "max_shift", "min_peak_ratio", "lap_fraction", "den_fraction",
                          "percentile", "z_max", "bin_width"});
        auto& s = cfg.dfdd;
        s.laplacian.presmooth_sigma = d.number("presmooth_sigma", s.laplacian.presmooth_sigma);
        s.laplacian.aspect = d.number("aspect", s.laplacian.aspect);
        s.align.max_shift = static_cast<int>(d.integer("max_shift", s.align.max_shift));
        s.align.min_peak_ratio = d.number("min_peak_ratio", s.align.min_peak_ratio);
        s.gate.lap_fraction = d.number("lap_fraction", s.gate.lap_fraction);
        s.gate.den_fraction = d.number("den_fraction", s.gate.den_fraction);
        s.gate.percentile = d.number("percentile", s.gate.percentile);
        s.gate.z_max = d.number("z_max", s.gate.z_max);
        s.bin_width = d.number("bin_width", s.bin_width);
        if (s.laplacian.presmooth_sigma < 0.0) throw FormatError("field config.dfdd.presmooth_sigma must be >= 0");
        if (s.align.max_shift < 0) throw FormatError("field config.dfdd.max_shift must be >= 0");
        if (!(s.bin_width > 0.0)) throw FormatError("field config.dfdd.bin_width must be positive");
    }
    if (r.has("calibration")) {
        JsonReader c(r.child("calibration"), "config.calibration");
        c.reject_unknown({"huber_delta", "max_iter", "depths"});
        cfg.calibration.robust.huber_delta = c.number("huber_delta", cfg.calibration.robust.huber_delta);
        cfg.calibration.robust.max_iter = static_cast<int>(c.integer("max_iter", cfg.calibration.robust.max_iter));
        if (c.has("depths")) {
            cfg.calibration.depths = number_list(c.child("depths"), "config.calibration.depths");
            check_depths(cfg.calibration.depths, "config.calibration.depths");
        }
    }
    return cfg;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) { return experiment_from_json(read_json_file(path)); }

Json to_json(const ExperimentConfig& cfg) {
    Json j;
    if (cfg.optical) j["optical"] = nearfar::to_json(*cfg.optical);
    j["sensor"] = nearfar::to_json(cfg.sensor);
    j["depths"] = cfg.depths;
    if (cfg.noise.enabled)
        j["noise"] = Json{{"gain", cfg.noise.gain_scale}, {"read_sigma", cfg.noise.read_sigma}};
    else
        j["noise"] = "off";
    j["seed"] = cfg.seed;
    j["output_dir"] = cfg.output_dir.string();
    j["design"] = Json{{"targets", cfg.design.targets},
                       {"rho_1", cfg.design.rho_1},
                       {"rho_3", cfg.design.rho_3},
                       {"track_budget", cfg.design.track_budget},
                       {"side_powers", cfg.design.mode == SidePowerMode::fixed ? "fixed" : "derived"},
                       {"s1_preferred", cfg.design.s1_preferred}};
    j["phase"] = Json{{"levels", cfg.phase.levels},
                      {"pitch", cfg.phase.pitch},
                      {"width", cfg.phase.width},
                      {"height", cfg.phase.height}};
    const auto& d = cfg.dfdd;
    j["dfdd"] = Json{{"presmooth_sigma", d.laplacian.presmooth_sigma},
                     {"aspect", d.laplacian.aspect},
                     {"max_shift", d.align.max_shift},
                     {"min_peak_ratio", d.align.min_peak_ratio},
                     {"lap_fraction", d.gate.lap_fraction},
                     {"den_fraction", d.gate.den_fraction},
                     {"percentile", d.gate.percentile},
                     {"z_max", d.gate.z_max},
                     {"bin_width", d.bin_width}};
    j["calibration"] = Json{{"huber_delta", cfg.calibration.robust.huber_delta},
                            {"max_iter", cfg.calibration.robust.max_iter},
                            {"depths", cfg.calibration.depths}};
    return j;
}

OpticalSystemConfig resolve_optical(const ExperimentConfig& cfg) {
    if (cfg.optical) return *cfg.optical;
    return solve_layout(cfg.design).best().config;
}

LaplacianOptions effective_laplacian(const DfddSettings& s, const OpticalSystemConfig& optical) {
    LaplacianOptions o = s.laplacian;
    if (!(o.aspect > 0.0)) o.aspect = aperture_y(optical) / aperture_x(optical);
    return o;
}

std::vector<double> offset_depths(const std::vector<double>& d) {
    if (d.empty()) return {};
    if (d.size() == 1) return {d[0] * 0.975, d[0] * 1.025};
    std::vector<double> out;
    out.push_back(d[0] - 0.5 * (d[1] - d[0]));
    for (std::size_t i = 0; i + 1 < d.size(); ++i) out.push_back(0.5 * (d[i] + d[i + 1]));
    out.push_back(d.back() + 0.5 * (d.back() - d[d.size() - 2]));
    return out;
}

std::uint64_t frame_seed(std::uint64_t seed, std::uint64_t stream, std::size_t index) {
    return mix(mix(seed ^ mix(stream)) + index);
}

PointFrame render_point_frame(const OpticalSystemConfig& optical, const SensorSpec& sensor,
                              const NoiseSettings& noise, double depth, std::uint64_t seed) {
    PlanarTarget point;
    point.texture = procedural_texture("point", 1);
    point.depth = depth;
    point.physical_pitch = 1e-9;
    auto cap = render_capture({point}, optical, sensor, noise, seed);
    auto subs = extract_subimages(cap);
    return {depth, std::move(cap), std::move(subs[0]), std::move(subs[2])};
}

FrontEnd differential_front_end(const Image& i1, const Image& i3, const DfddSettings& s,
                                const OpticalSystemConfig& optical) {
    FrontEnd fe;
    const auto lap = effective_laplacian(s, optical);
    AlignOptions align = s.align;
    if (align.smooth_sigma_x < 0.0) align.smooth_sigma_x = lap.presmooth_sigma;
    if (align.smooth_sigma_y < 0.0) align.smooth_sigma_y = lap.presmooth_sigma * lap.aspect;
    fe.aligned = align_pair(i1, i3, align);
    fe.diff = differential_pair(fe.aligned, lap);
    return fe;
}

std::vector<CalibrationSample> frame_samples(const FrontEnd& fe, double depth, const DfddSettings& s) {
    const auto gate = resolve_gate(fe.diff, s.gate);
    const auto& d = fe.diff;
    std::vector<CalibrationSample> out;
    CompensatedSum total;
    for (int y = 0; y < d.lap.height(); ++y) {
        for (int x = 0; x < d.lap.width(); ++x) {
            const double lap = d.lap(x, y);
            if (!d.valid(x, y) || !(std::abs(lap) > gate.eps_lap)) continue;
            const double w = 1.0 / ((depth * lap) * (depth * lap));
            out.push_back({lap, d.drho(x, y), depth, w});
            total.add(w);
        }
    }
    for (auto& smp : out) smp.weight /= total.value();
    return out;
}

DepthEstimate estimate_depth(const Image& i1, const Image& i3, const DfddParams& params, const DfddSettings& s,
                             const OpticalSystemConfig& optical) {
    const auto fe = differential_front_end(i1, i3, s, optical);
    DepthEstimate est;
    est.shift_x = fe.aligned.shift_x;
    est.shift_y = fe.aligned.shift_y;
    est.gate = resolve_gate(fe.diff, s.gate);
    est.map = depth_from_defocus(fe.diff, params, est.gate);
    return est;
}

}  // namespace nearfar::harness
