#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <nearfar/calibration.hpp>
#include <nearfar/dfdd.hpp>
#include <nearfar/optics.hpp>
#include <nearfar/render.hpp>
#include <nearfar/serialization.hpp>

namespace nearfar::harness {

struct DfddSettings {
    LaplacianOptions laplacian{12.0, 0.0};  ///< aspect <= 0: aperture_y / aperture_x
    AlignOptions align{200, 3.0, 0.1, 1.0, true, -1.0, -1.0};  ///< smoothing < 0: follow the Laplacian's
    GateRule gate{0.5, 1e-3, 100.0, 0.1};
    double bin_width = 0.25e-3;
};

struct PhaseSettings {
    int levels = 8;
    double pitch = 350e-9;
    double width = 0.0;   ///< patch size in m; <= 0 covers the whole panel
    double height = 0.0;
};

struct CalibrationSettings {
    RobustOptions robust{};
    std::vector<double> depths;  ///< empty: half-step offsets of the evaluation depths
};

struct ExperimentConfig {
    std::optional<OpticalSystemConfig> optical;  ///< absent: solved from `design`
    SensorSpec sensor{};
    std::vector<double> depths{0.012, 0.013, 0.014, 0.015, 0.016, 0.017, 0.018, 0.019, 0.020};
    NoiseSettings noise{true, 1.0, -1.0};
    std::uint64_t seed = 1;
    std::filesystem::path output_dir = "out";
    LayoutRequest design{};
    PhaseSettings phase{};
    DfddSettings dfdd{};
    CalibrationSettings calibration{};
};

/// The built-in defaults: derived side powers for the nominal targets.
ExperimentConfig default_experiment();

ExperimentConfig experiment_from_json(const Json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);
Json to_json(const ExperimentConfig& cfg);

/// Config's optical block, or the selected layout of its design request.
/// Throws LayoutInfeasible if the design has no feasible candidate.
OpticalSystemConfig resolve_optical(const ExperimentConfig& cfg);

/// Laplacian options with the automatic aspect filled in.
LaplacianOptions effective_laplacian(const DfddSettings& s, const OpticalSystemConfig& optical);

/// Calibration depths midway between evaluation depths, extended half a
/// step beyond each end.
std::vector<double> offset_depths(const std::vector<double>& depths);

/// Independent per-frame seed.
std::uint64_t frame_seed(std::uint64_t seed, std::uint64_t stream, std::size_t index);

struct PointFrame {
    double depth = 0.0;
    RawCapture capture;
    Image i1;
    Image i3;
};

/// On-axis point source at `depth`, rendered and split into sub-images.
PointFrame render_point_frame(const OpticalSystemConfig& optical, const SensorSpec& sensor,
                              const NoiseSettings& noise, double depth, std::uint64_t seed);

struct FrontEnd {
    AlignedPair aligned;
    DifferentialPair diff;
};

FrontEnd differential_front_end(const Image& i1, const Image& i3, const DfddSettings& s,
                                const OpticalSystemConfig& optical);

/// Samples from gated pixels of one frame. Weights are 1 / (z lap)^2
/// normalised to unit sum per frame, i.e. the fit is weighted in diopters.
std::vector<CalibrationSample> frame_samples(const FrontEnd& fe, double depth, const DfddSettings& s);

struct DepthEstimate {
    double shift_x = 0.0;
    double shift_y = 0.0;
    DepthGate gate;
    DepthMap map;
};

DepthEstimate estimate_depth(const Image& i1, const Image& i3, const DfddParams& params, const DfddSettings& s,
                             const OpticalSystemConfig& optical);

}  // namespace nearfar::harness
