#include <CLI11.hpp>

#include <iostream>

#include "harness/commands.hpp"

using namespace nearfar::harness;

namespace {

struct CommonFlags {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    std::string noise;
    CLI::Option* seed_opt = nullptr;

    void attach(CLI::App* app) {
        app->add_option("--config", config, "experiment config JSON")->check(CLI::ExistingFile);
        app->add_option("--out", out, "output directory");
        seed_opt = app->add_option("--seed", seed, "noise seed");
        app->add_option("--noise", noise, "sensor noise")->check(CLI::IsMember({"on", "off"}));
    }

    CommonOptions get() const {
        CommonOptions c;
        if (!config.empty()) c.config = config;
        if (!out.empty()) c.out = out;
        if (seed_opt && seed_opt->count() > 0) c.seed = seed;
        if (!noise.empty()) c.noise = noise == "on";
        return c;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nearfar: three-channel near-far imaging simulator and depth-from-differential-defocus tools"};
    app.require_subcommand(1);
    Streams io{std::cout, std::cerr};

    CommonFlags design_f, phase_f, render_f, stack_f, calib_f, depth_f, eval_f;
    int code = 0;

    auto* design = app.add_subcommand("design", "solve the optical layout for three focal targets");
    design_f.attach(design);
    std::vector<double> targets;
    double rho1 = 0, rho3 = 0, budget = 0;
    std::string side = "fixed";
    auto* t_opt = design->add_option("--targets", targets, "focal targets for channels 1..3 (m)")->expected(3)->delimiter(',');
    auto* r1_opt = design->add_option("--rho1", rho1, "left panel power (1/m)");
    auto* r3_opt = design->add_option("--rho3", rho3, "right panel power (1/m)");
    auto* b_opt = design->add_option("--budget", budget, "track length budget (m)");
    design->add_option("--side-powers", side, "keep the side powers fixed or derive them from the targets")
        ->check(CLI::IsMember({"fixed", "derived"}));
    design->callback([&] {
        DesignOptions o;
        if (t_opt->count()) o.targets = std::array<double, 3>{targets[0], targets[1], targets[2]};
        if (r1_opt->count()) o.rho_1 = rho1;
        if (r3_opt->count()) o.rho_3 = rho3;
        if (b_opt->count()) o.budget = budget;
        o.mode = side == "derived" ? nearfar::SidePowerMode::derived : nearfar::SidePowerMode::fixed;
        code = cmd_design(design_f.get(), o, io);
    });

    auto* phase = app.add_subcommand("phase", "export a side panel's quantised phase map as CSV");
    phase_f.attach(phase);
    std::string panel = "right", phase_out;
    phase->add_option("--panel", panel, "left or right")->check(CLI::IsMember({"left", "right"}));
    phase->add_option("--output", phase_out, "CSV path (default <out>/phase_<panel>.csv)");
    phase->callback([&] { code = cmd_phase(phase_f.get(), panel, phase_out, io); });

    auto* render = app.add_subcommand("render", "render the multiplexed capture of a scene");
    render_f.attach(render);
    std::string scene;
    render->add_option("--scene", scene, "scene JSON")->required();
    render->callback([&] { code = cmd_render(render_f.get(), scene, io); });

    auto* stack = app.add_subcommand("psf-stack", "render point-source captures at the configured depths");
    stack_f.attach(stack);
    stack->callback([&] { code = cmd_psf_stack(stack_f.get(), io); });

    auto* calib = app.add_subcommand("calibrate", "fit the depth parameters from a PSF stack");
    calib_f.attach(calib);
    std::string stack_dir;
    calib->add_option("--stack", stack_dir, "stack directory (default: --out)");
    calib->callback([&] { code = cmd_calibrate(calib_f.get(), stack_dir, io); });

    auto* depth = app.add_subcommand("depth", "estimate depth from a capture");
    depth_f.attach(depth);
    std::string capture, params;
    depth->add_option("--capture", capture, "capture PGM with layout sidecar")->required();
    depth->add_option("--params", params, "calibration params JSON")->required();
    depth->callback([&] { code = cmd_depth(depth_f.get(), capture, params, io); });

    auto* eval = app.add_subcommand("eval", "sweep the configured depths and report accuracy");
    eval_f.attach(eval);
    std::string eval_params;
    eval->add_option("--params", eval_params, "calibration params JSON (default: calibrate on offset depths)");
    eval->callback([&] { code = cmd_eval(eval_f.get(), eval_params, io); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }
    return code;
}
