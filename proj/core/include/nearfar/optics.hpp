#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "nearfar/raster.hpp"

namespace nearfar {

/// Geometric and optical parameters of the three-channel system. SI units
/// throughout: powers in m^-1, lengths in m, angles in radians.
struct OpticalSystemConfig {
    double rho_1 = 20.0;              ///< left metasurface panel power
    double rho_3 = 100.0;             ///< right metasurface panel power
    double rho_L = 80.0;              ///< shared refractive lens power
    double s1 = 2.0e-3;               ///< first layer to lens
    double s2 = 12.0e-3;              ///< lens to sensor
    double lambda = 625e-9;           ///< design wavelength
    double theta = 0.3490658503988659;  ///< side-panel deflection toward the axis (20 deg)
    double panel_width = 0.5e-3;
    double panel_height = 2.0e-3;
    double panel_pitch = 1.0e-3;      ///< centre-to-centre panel separation
    double pinhole_diameter = 1.0e-3;
    double kappa = 0.5;               ///< Gaussian sigma per geometric blur radius

    friend bool operator==(const OpticalSystemConfig&, const OpticalSystemConfig&) = default;
};

inline constexpr double kDefaultTrackBudget = 0.015;

/// Throws InvalidArgument naming the first violated constraint.
void validate(const OpticalSystemConfig& cfg, double track_budget = kDefaultTrackBudget);

struct ChannelSpec {
    int index = 2;                 ///< 1, 2 or 3
    double power = 0.0;
    double deflection = 0.0;       ///< signed ray-angle kick
    double panel_center_x = 0.0;
};

/// Channel 1 is the left panel (x < 0) deflecting toward +x, channel 3 the
/// right panel deflecting toward -x, channel 2 the unmodulated centre window.
std::array<ChannelSpec, 3> channels(const OpticalSystemConfig& cfg);
ChannelSpec channel(const OpticalSystemConfig& cfg, int index);

struct RayState {
    double height = 0.0;
    double angle = 0.0;
};

/// Paraxial ABCD matrix extended with a constant offset, i.e. the affine map
/// (y, u) -> (a y + b u + height_offset, c y + d u + angle_offset).
struct RayTransferMatrix {
    double a = 1.0;
    double b = 0.0;
    double c = 0.0;
    double d = 1.0;
    double angle_offset = 0.0;
    double height_offset = 0.0;

    double det() const { return a * d - b * c; }

    RayState apply(RayState in) const {
        return {a * in.height + b * in.angle + height_offset, c * in.height + d * in.angle + angle_offset};
    }

    /// Composition: (lhs * rhs) applies rhs first.
    friend RayTransferMatrix operator*(const RayTransferMatrix& lhs, const RayTransferMatrix& rhs) {
        RayTransferMatrix m;
        m.a = lhs.a * rhs.a + lhs.b * rhs.c;
        m.b = lhs.a * rhs.b + lhs.b * rhs.d;
        m.c = lhs.c * rhs.a + lhs.d * rhs.c;
        m.d = lhs.c * rhs.b + lhs.d * rhs.d;
        m.height_offset = lhs.a * rhs.height_offset + lhs.b * rhs.angle_offset + lhs.height_offset;
        m.angle_offset = lhs.c * rhs.height_offset + lhs.d * rhs.angle_offset + lhs.angle_offset;
        return m;
    }
};

RayTransferMatrix propagation_matrix(double distance);
RayTransferMatrix thin_element_matrix(double power, double deflection);

/// P(s2) * L(rho_L) * P(s1) * E(channel). The panel power acts about the
/// panel centre, which shows up as an extra angle offset.
RayTransferMatrix channel_system_matrix(const OpticalSystemConfig& cfg, const ChannelSpec& ch);

/// Object distance Z > 0 with (S * P(Z)).b == 0, i.e. Z = -b / a.
double focal_object_distance(const RayTransferMatrix& s, double eps_afocal = 1e-9);

struct BlurRadius {
    double x = 0.0;
    double y = 0.0;
};

/// Limiting full aperture per axis: min(panel, pinhole).
double aperture_x(const OpticalSystemConfig& cfg);
double aperture_y(const OpticalSystemConfig& cfg);

/// Marginal-ray blur-circle half widths on the sensor for an on-axis point at depth z.
BlurRadius blur_radius(const OpticalSystemConfig& cfg, const ChannelSpec& ch, double z);

/// Odd support that holds +-4 sigma of the PSF for the given blur.
int psf_support(BlurRadius r, double pixel_pitch, double kappa);

/// Anisotropic Gaussian PSF with sigma = kappa * r per axis, unit sum,
/// sampled at pixel centres on a support x support grid.
Image gaussian_psf(BlurRadius r, double pixel_pitch, int support, double kappa);

struct FocalSolution {
    std::array<double, 3> z_f{};
    std::array<double, 3> residuals{};
    double track_length = 0.0;
};

/// Per-channel in-focus distances and imaging residuals S.a * Z + S.b at `targets`.
FocalSolution focal_solution(const OpticalSystemConfig& cfg, const std::array<double, 3>& targets);

enum class SidePowerMode {
    fixed,    ///< side powers are given; solve rho_L, s1, s2 against all three targets
    derived,  ///< side powers follow from the targets; s1 and the track length are pinned
};

struct LayoutRequest {
    std::array<double, 3> targets{0.014, 0.40, 0.020};  ///< nominal focal planes for channels 1..3
    double rho_1 = 20.0;
    double rho_3 = 100.0;
    double track_budget = kDefaultTrackBudget;
    SidePowerMode mode = SidePowerMode::fixed;
    /// derived mode only; <= 0 selects panel_pitch / tan(theta)
    double s1_preferred = 0.0;
    /// non-layout fields (wavelength, apertures, kappa) are copied from here
    OpticalSystemConfig base{};
    double residual_tolerance = 1e-9;
    int max_iterations = 200;
};

struct LayoutCandidate {
    /// targets[assignment[i]] is the focal plane of channel i + 1
    std::array<int, 3> assignment{0, 1, 2};
    OpticalSystemConfig config{};
    FocalSolution solution{};
    double max_residual = 0.0;
    bool feasible = false;
    int seed_index = -1;
    int iterations = 0;
};

struct LayoutResult {
    std::vector<LayoutCandidate> candidates;  ///< one per side-channel assignment
    std::size_t selected = 0;

    const LayoutCandidate& best() const { return candidates.at(selected); }
};

/// Runs the damped least-squares search for both side-channel assignments
/// without throwing on infeasibility.
LayoutResult solve_layout_candidates(const LayoutRequest& req);

/// As above, but throws LayoutInfeasible when no assignment converges.
LayoutResult solve_layout(const LayoutRequest& req);

}  // namespace nearfar
