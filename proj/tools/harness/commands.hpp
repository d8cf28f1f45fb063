#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include <nearfar/optics.hpp>

namespace nearfar::harness {

enum ExitCode : int {
    kExitOk = 0,
    kExitUnexpected = 1,
    kExitConfig = 2,
    kExitAlignment = 3,
    kExitNoDepth = 4,
    kExitAccuracy = 5,  ///< eval ran but missed the 1 mm MAE target
};

struct CommonOptions {
    std::optional<std::filesystem::path> config;
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
    std::optional<bool> noise;
};

struct Streams {
    std::ostream& out;
    std::ostream& err;
};

struct DesignOptions {
    std::optional<std::array<double, 3>> targets;
    std::optional<double> rho_1;
    std::optional<double> rho_3;
    std::optional<double> budget;
    SidePowerMode mode = SidePowerMode::fixed;
};

int cmd_design(const CommonOptions& common, const DesignOptions& opts, Streams io);

/// `panel` is "left" or "right"; empty `output` writes <out>/phase_<panel>.csv.
int cmd_phase(const CommonOptions& common, const std::string& panel, const std::filesystem::path& output,
              Streams io);

int cmd_render(const CommonOptions& common, const std::filesystem::path& scene, Streams io);
int cmd_psf_stack(const CommonOptions& common, Streams io);

/// Empty `stack_dir` reads the stack from the output directory.
int cmd_calibrate(const CommonOptions& common, const std::filesystem::path& stack_dir, Streams io);

int cmd_depth(const CommonOptions& common, const std::filesystem::path& capture,
              const std::filesystem::path& params, Streams io);

/// Empty `params` auto-calibrates on depths disjoint from the evaluation sweep.
int cmd_eval(const CommonOptions& common, const std::filesystem::path& params, Streams io);

}  // namespace nearfar::harness
