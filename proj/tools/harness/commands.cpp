#include "harness/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include <nearfar/errors.hpp>
#include <nearfar/image_io.hpp>
#include <nearfar/metasurface.hpp>

#include "harness/experiment.hpp"
#include "harness/scene.hpp"
#include "harness/svg.hpp"

namespace nearfar::harness {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kEvalStream = 1;
constexpr std::uint64_t kCalibrationStream = 2;
constexpr char kStackIndex[] = "stack_index.csv";
constexpr char kStackMeta[] = "stack.json";

int guarded(Streams io, const std::function<int()>& body) {
    try {
        return body();
    } catch (const AlignmentUnreliable& e) {
        io.err << "error: " << e.what() << "\n";
        return kExitAlignment;
    } catch (const NoValidDepth& e) {
        io.err << "error: " << e.what() << "\n";
        return kExitNoDepth;
    } catch (const Error& e) {
        io.err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        io.err << "unexpected error: " << e.what() << "\n";
        return kExitUnexpected;
    }
}

// Rethrows library errors with a prefix, keeping the error category.
template <typename F>
auto with_context(const std::string& ctx, F&& f) {
    try {
        return f();
    } catch (const AlignmentUnreliable& e) {
        throw AlignmentUnreliable(ctx + ": " + e.what());
    } catch (const NoValidDepth& e) {
        throw NoValidDepth(ctx + ": " + e.what());
    } catch (const Unidentifiable& e) {
        throw Unidentifiable(ctx + ": " + e.what());
    } catch (const Error& e) {
        throw InvalidArgument(ctx + ": " + e.what());
    }
}

struct Context {
    ExperimentConfig cfg;
    fs::path out;
};

Context load_context(const CommonOptions& c) {
    Context ctx{c.config ? load_experiment(*c.config) : default_experiment(), {}};
    if (c.seed) ctx.cfg.seed = *c.seed;
    if (c.noise) ctx.cfg.noise.enabled = *c.noise;
    ctx.out = c.out ? *c.out : ctx.cfg.output_dir;
    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    if (ec) throw IoError("cannot create output directory " + ctx.out.string() + ": " + ec.message());
    return ctx;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + p.string());
    os << s;
    if (!os) throw IoError("failed writing: " + p.string());
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string format_mm(double metres) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", metres * 1e3);
    return buf;
}

std::string frame_name(std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%02zu", k);
    return buf;
}

struct StackEntry {
    double depth = 0.0;
    fs::path capture;
    fs::path i1;
    fs::path i3;
};

std::vector<StackEntry> read_stack_index(const fs::path& dir) {
    const fs::path path = dir / kStackIndex;
    std::ifstream is(path);
    if (!is) throw IoError("cannot open stack index: " + path.string());
    std::string line;
    std::getline(is, line);
    if (line != "depth_mm,capture,i1,i3") throw FormatError(path.string() + ":1: unexpected header");
    std::vector<StackEntry> out;
    std::size_t n = 1;
    while (std::getline(is, line)) {
        ++n;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cells[4];
        for (auto& c : cells) std::getline(ss, c, ',');
        StackEntry e;
        try {
            e.depth = std::stod(cells[0]) * 1e-3;
        } catch (const std::exception&) {
            throw FormatError(path.string() + ":" + std::to_string(n) + ": bad depth_mm");
        }
        if (!(e.depth > 0.0) || cells[3].empty())
            throw FormatError(path.string() + ":" + std::to_string(n) + ": malformed row");
        e.capture = dir / cells[1];
        e.i1 = dir / cells[2];
        e.i3 = dir / cells[3];
        out.push_back(e);
    }
    return out;
}

OpticalSystemConfig stack_optical(const fs::path& dir, const ExperimentConfig& cfg) {
    const fs::path meta = dir / kStackMeta;
    if (!fs::exists(meta)) return resolve_optical(cfg);
    const Json j = read_json_file(meta);
    JsonReader r(j, "stack");
    return optical_config_from_json(r.child("optical"), "stack.optical");
}

struct CalibrationRun {
    CalibrationResult result;
    std::vector<CalibrationSample> samples;
    std::vector<std::pair<double, std::vector<CalibrationSample>>> frames;
};

CalibrationRun calibrate_pairs(const std::vector<std::pair<double, std::pair<Image, Image>>>& pairs,
                               const ExperimentConfig& cfg, const OpticalSystemConfig& optical) {
    CalibrationRun run;
    for (const auto& [z, p] : pairs) {
        auto s = with_context("calibration frame at " + fixed(z * 1e3, 3) + " mm", [&] {
            return frame_samples(differential_front_end(p.first, p.second, cfg.dfdd, optical), z, cfg.dfdd);
        });
        run.samples.insert(run.samples.end(), s.begin(), s.end());
        run.frames.emplace_back(z, std::move(s));
    }
    if (run.samples.empty()) throw Unidentifiable("B unidentifiable: no calibration samples passed the gate");
    run.result = fit_robust(run.samples, cfg.calibration.robust);
    return run;
}

std::string metrics_csv(const std::vector<DepthMetrics>& rows) {
    std::string s = "true_depth_mm,mean_pred_mm,mae_mm,frac_within_5pct,n_valid\n";
    for (const auto& r : rows) {
        s += format_mm(r.true_depth) + "," + format_double(r.mean_pred * 1e3) + "," +
             format_double(r.mae * 1e3) + "," + format_double(r.frac_within_5pct) + "," + std::to_string(r.n_valid) +
             "\n";
    }
    return s;
}

Json histogram_json(const DepthAggregate& agg) {
    Json bins = Json::array();
    for (const auto& b : agg.histogram) bins.push_back(Json{{"lower_m", b.lower}, {"weight", b.weight}, {"count", b.count}});
    return bins;
}

}  // namespace

int cmd_design(const CommonOptions& common, const DesignOptions& opts, Streams io) {
    return guarded(io, [&] {
        auto ctx = load_context(common);
        LayoutRequest req = ctx.cfg.design;
        if (opts.targets) req.targets = *opts.targets;
        if (opts.rho_1) req.rho_1 = *opts.rho_1;
        if (opts.rho_3) req.rho_3 = *opts.rho_3;
        if (opts.budget) req.track_budget = *opts.budget;
        req.mode = opts.mode;
        if (!(req.track_budget > 0.0)) {
            io.err << "error: track budget must be positive\n";
            return static_cast<int>(kExitConfig);
        }
        const auto result = solve_layout_candidates(req);

        Json doc;
        doc["request"] = Json{{"targets", req.targets},
                              {"rho_1", req.rho_1},
                              {"rho_3", req.rho_3},
                              {"track_budget", req.track_budget},
                              {"side_powers", req.mode == SidePowerMode::fixed ? "fixed" : "derived"},
                              {"residual_tolerance", req.residual_tolerance}};
        const Json r = to_json(result);
        doc["selected"] = r["selected"];
        doc["candidates"] = r["candidates"];
        write_json_file(ctx.out / "layout.json", doc);

        for (std::size_t i = 0; i < result.candidates.size(); ++i) {
            const auto& c = result.candidates[i];
            char buf[256];
            std::snprintf(buf, sizeof buf,
                          "candidate %zu assignment [%d %d %d]: %s, max residual %.3e m, rho_L %.6g, s1 %.6g m, "
                          "s2 %.6g m%s\n",
                          i, c.assignment[0], c.assignment[1], c.assignment[2],
                          c.feasible ? "feasible" : "infeasible", c.max_residual, c.config.rho_L, c.config.s1,
                          c.config.s2, i == result.selected ? "  [selected]" : "");
            io.out << buf;
        }
        const auto& best = result.best();
        if (!best.feasible) {
            io.err << "error: layout infeasible: no assignment brings every imaging residual below "
                   << req.residual_tolerance << " m (best " << best.max_residual << " m)\n";
            return static_cast<int>(kExitConfig);
        }
        write_json_file(ctx.out / "optical.json", to_json(best.config));
        return static_cast<int>(kExitOk);
    });
}

int cmd_phase(const CommonOptions& common, const std::string& panel, const fs::path& output, Streams io) {
    return guarded(io, [&] {
        auto ctx = load_context(common);
        if (panel != "left" && panel != "right") throw InvalidArgument("panel must be left or right");
        const auto optical = resolve_optical(ctx.cfg);
        const auto ch = channel(optical, panel == "left" ? 1 : 3);
        const auto& ps = ctx.cfg.phase;
        if (ps.levels < 2) throw InvalidArgument("phase levels must be at least 2");
        const double w = ps.width > 0.0 ? ps.width : optical.panel_width;
        const double h = ps.height > 0.0 ? ps.height : optical.panel_height;
        const auto grid = centered_grid(w, h, ps.pitch);
        const auto profile = quantize_phase(focusing_deflection_phase(ch.power, ch.deflection, optical.lambda, grid),
                                            ps.levels);
        for (const auto& wmsg : profile.warnings) io.err << "warning: " << wmsg << "\n";
        const fs::path path = output.empty() ? ctx.out / ("phase_" + panel + ".csv") : output;
        export_phase_csv(profile, path);
        io.out << "wrote " << path.string() << " (" << grid.width << "x" << grid.height << ", " << ps.levels
               << " levels)\n";
        return static_cast<int>(kExitOk);
    });
}

int cmd_render(const CommonOptions& common, const fs::path& scene_path, Streams io) {
    return guarded(io, [&] {
        auto ctx = load_context(common);
        const auto scene = load_scene(scene_path);
        const auto optical = resolve_optical(ctx.cfg);
        const auto cap = render_capture(scene, optical, ctx.cfg.sensor, ctx.cfg.noise, ctx.cfg.seed);
        write_capture(cap, ctx.out / "capture.pgm");
        const auto chs = channels(optical);
        for (std::size_t i = 0; i < scene.size(); ++i) {
            double sigma[3];
            for (std::size_t c = 0; c < 3; ++c) {
                const auto r = blur_radius(optical, chs[c], scene[i].depth);
                sigma[c] = optical.kappa * std::max(r.x, r.y) / ctx.cfg.sensor.pixel_pitch;
            }
            char buf[200];
            std::snprintf(buf, sizeof buf, "target %zu at %.4f m: blur sigma px I1 %.3f I2 %.3f I3 %.3f\n", i,
                          scene[i].depth, sigma[0], sigma[1], sigma[2]);
            io.out << buf;
        }
        io.out << "wrote " << (ctx.out / "capture.pgm").string() << "\n";
        return static_cast<int>(kExitOk);
    });
}

int cmd_psf_stack(const CommonOptions& common, Streams io) {
    return guarded(io, [&] {
        auto ctx = load_context(common);
        if (ctx.cfg.depths.empty()) {
            io.err << "error: config.depths is empty\n";
            return static_cast<int>(kExitConfig);
        }
        const auto optical = resolve_optical(ctx.cfg);
        std::string index = "depth_mm,capture,i1,i3\n";
        for (std::size_t k = 0; k < ctx.cfg.depths.size(); ++k) {
            const double z = ctx.cfg.depths[k];
            const auto frame = with_context("depth " + fixed(z * 1e3, 3) + " mm", [&] {
                return render_point_frame(optical, ctx.cfg.sensor, ctx.cfg.noise, z,
                                          frame_seed(ctx.cfg.seed, kEvalStream, k));
            });
            const std::string base = frame_name(k);
            write_capture(frame.capture, ctx.out / (base + ".pgm"));
            write_pfm(frame.i1, ctx.out / (base + "_i1.pfm"));
            write_pfm(frame.i3, ctx.out / (base + "_i3.pfm"));
            index += format_mm(z) + "," + base + ".pgm," + base + "_i1.pfm," + base + "_i3.pfm\n";
        }
        write_text(ctx.out / kStackIndex, index);
        write_json_file(ctx.out / kStackMeta,
                        Json{{"optical", to_json(optical)}, {"sensor", to_json(ctx.cfg.sensor)}, {"seed", ctx.cfg.seed},
                             {"noise", ctx.cfg.noise.enabled}});
        io.out << "wrote " << ctx.cfg.depths.size() << " frames to " << ctx.out.string() << "\n";
        return static_cast<int>(kExitOk);
    });
}

int cmd_calibrate(const CommonOptions& common, const fs::path& stack_dir, Streams io) {
    return guarded(io, [&] {
        auto ctx = load_context(common);
        const fs::path dir = stack_dir.empty() ? ctx.out : stack_dir;
        const auto entries = read_stack_index(dir);
        if (entries.empty()) throw Unidentifiable("B unidentifiable: stack is empty");
        const auto optical = stack_optical(dir, ctx.cfg);
        std::vector<std::pair<double, std::pair<Image, Image>>> pairs;
        for (const auto& e : entries) pairs.push_back({e.depth, {read_pfm(e.i1), read_pfm(e.i3)}});
        const auto run = calibrate_pairs(pairs, ctx.cfg, optical);

        write_json_file(ctx.out / "params.json", to_json(run.result));
        write_calibration_csv(run.samples, ctx.out / "calibration_samples.csv");
        std::string report = "depth_mm,median_pred_mm,n_samples\n";
        for (const auto& [z, s] : run.frames) {
            std::vector<DepthSample> preds;
            for (const auto& smp : s) {
                const double den = run.result.params.a_param * smp.lap + run.result.params.b_param * smp.drho;
                if (den != 0.0) preds.push_back({smp.lap / den, std::abs(den)});
            }
            const double med = preds.empty() ? std::nan("") : weighted_median(preds);
            report += format_mm(z) + "," + (preds.empty() ? "nan" : format_double(med * 1e3)) + "," +
                      std::to_string(s.size()) + "\n";
        }
        write_text(ctx.out / "calibration_report.csv", report);
        char buf[200];
        std::snprintf(buf, sizeof buf, "A %.9g  B %.9g  rms %.3e m  n %zu  condition %.3g\n",
                      run.result.params.a_param, run.result.params.b_param, run.result.rms_residual, run.result.n_used,
                      run.result.condition);
        io.out << buf;
        return static_cast<int>(kExitOk);
    });
}

int cmd_depth(const CommonOptions& common, const fs::path& capture, const fs::path& params_path, Streams io) {
    return guarded(io, [&] {
        auto ctx = load_context(common);
        const auto params = calibration_result_from_json(read_json_file(params_path)).params;
        const auto cap = read_capture(capture);
        const auto optical = resolve_optical(ctx.cfg);
        const auto subs = extract_subimages(cap);
        const auto est = estimate_depth(subs[0], subs[2], params, ctx.cfg.dfdd, optical);
        write_pfm(est.map.depth, ctx.out / "depth.pfm");
        write_pfm(est.map.confidence, ctx.out / "confidence.pfm");
        Json side{{"params", to_json(params)},
                  {"thresholds", Json{{"eps_lap", est.gate.eps_lap}, {"eps_den", est.gate.eps_den}, {"z_max", est.gate.z_max}}},
                  {"shift", Json{{"x", est.shift_x}, {"y", est.shift_y}}}};
        write_json_file(ctx.out / "depth.json", side);
        const auto agg = aggregate_depth(est.map, ctx.cfg.dfdd.bin_width);
        write_json_file(ctx.out / "summary.json", Json{{"point_estimate_m", agg.point_estimate},
                                                       {"n_valid", agg.samples.size()},
                                                       {"bin_width_m", agg.bin_width},
                                                       {"histogram", histogram_json(agg)}});
        char buf[160];
        std::snprintf(buf, sizeof buf, "depth %.4f mm from %zu valid pixels\n", agg.point_estimate * 1e3,
                      agg.samples.size());
        io.out << buf;
        return static_cast<int>(kExitOk);
    });
}

int cmd_eval(const CommonOptions& common, const fs::path& params_path, Streams io) {
    return guarded(io, [&] {
        auto ctx = load_context(common);
        const auto& cfg = ctx.cfg;
        if (cfg.depths.empty()) {
            io.err << "error: config.depths is empty\n";
            return static_cast<int>(kExitConfig);
        }
        const auto optical = resolve_optical(cfg);

        DfddParams params;
        if (!params_path.empty()) {
            params = calibration_result_from_json(read_json_file(params_path)).params;
        } else {
            const auto depths = cfg.calibration.depths.empty() ? offset_depths(cfg.depths) : cfg.calibration.depths;
            std::vector<std::pair<double, std::pair<Image, Image>>> pairs;
            for (std::size_t k = 0; k < depths.size(); ++k) {
                auto f = with_context("calibration depth " + fixed(depths[k] * 1e3, 3) + " mm", [&] {
                    return render_point_frame(optical, cfg.sensor, cfg.noise, depths[k],
                                              frame_seed(cfg.seed, kCalibrationStream, k));
                });
                pairs.push_back({depths[k], {std::move(f.i1), std::move(f.i3)}});
            }
            const auto run = calibrate_pairs(pairs, cfg, optical);
            params = run.result.params;
            write_json_file(ctx.out / "eval_params.json", to_json(run.result));
        }

        std::vector<DepthMetrics> rows;
        for (std::size_t k = 0; k < cfg.depths.size(); ++k) {
            const double z = cfg.depths[k];
            with_context("depth " + fixed(z * 1e3, 3) + " mm", [&] {
                const auto f =
                    render_point_frame(optical, cfg.sensor, cfg.noise, z, frame_seed(cfg.seed, kEvalStream, k));
                const auto est = estimate_depth(f.i1, f.i3, params, cfg.dfdd, optical);
                rows.push_back(depth_metrics(est.map, z));
                const auto agg = aggregate_depth(est.map, cfg.dfdd.bin_width);
                write_text(ctx.out / ("hist_" + frame_name(k).substr(6) + ".svg"), histogram_svg(agg, z));
                return 0;
            });
        }
        write_text(ctx.out / "metrics.csv", metrics_csv(rows));
        write_text(ctx.out / "band.svg", band_plot_svg(rows));

        bool ok = true;
        for (const auto& r : rows) {
            char buf[200];
            std::snprintf(buf, sizeof buf, "%7.3f mm  mean %7.3f mm  MAE %.4f mm  within 5%% %.4f  n %zu\n",
                          r.true_depth * 1e3, r.mean_pred * 1e3, r.mae * 1e3, r.frac_within_5pct, r.n_valid);
            io.out << buf;
            const bool in_range = r.true_depth >= 0.012 - 1e-12 && r.true_depth <= 0.020 + 1e-12;
            if (in_range && !(r.mae < 1e-3)) ok = false;
        }
        if (!ok) {
            io.err << "accuracy target missed: MAE >= 1 mm at some depth in [12, 20] mm\n";
            return static_cast<int>(kExitAccuracy);
        }
        return static_cast<int>(kExitOk);
    });
}

}  // namespace nearfar::harness
