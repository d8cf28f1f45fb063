#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "nearfar/raster.hpp"

namespace nearfar {

/// Sample lattice of a phase map. Sample (i, j) sits at
/// (origin_x + i * pitch, origin_y + j * pitch).
struct PhaseGrid {
    int width = 0;
    int height = 0;
    double pitch = 350e-9;
    double origin_x = 0.0;
    double origin_y = 0.0;
};

/// Odd-sized grid covering a panel of the given physical size with a sample
/// on the panel centre.
PhaseGrid centered_grid(double panel_width, double panel_height, double pitch);

/// Wrapped phase map. Row 0 holds the minimum y.
struct PhaseProfile {
    PhaseGrid grid;
    Image values;                       ///< radians in [0, 2 pi)
    std::vector<std::string> warnings;  ///< sampling diagnostics from the generator

    double x(int i) const { return grid.origin_x + i * grid.pitch; }
    double y(int j) const { return grid.origin_y + j * grid.pitch; }
};

/// Hyperbolic focusing term (focal length 1 / power) plus a linear
/// deflection ramp, before wrapping. power == 0 drops the focusing term.
double unwrapped_phase(double power, double theta, double lambda, double x, double y);

/// Analytic d(phase)/dx and d(phase)/dy of unwrapped_phase.
std::pair<double, double> phase_gradient(double power, double theta, double lambda, double x, double y);

PhaseProfile focusing_deflection_phase(double power, double theta, double lambda, const PhaseGrid& grid);

/// phi mod 2 pi in [0, 2 pi). Non-finite input is rejected.
double wrap_phase(double phi);

/// Snap every sample to the nearest of `levels` equally spaced phases on the
/// circle; ties go to the lower level.
PhaseProfile quantize_phase(const PhaseProfile& profile, int levels);

void export_phase_csv(const PhaseProfile& profile, const std::filesystem::path& path);
PhaseProfile parse_phase_csv(const std::filesystem::path& path);

/// (phase_rad, diameter_m) rows of a unit-cell lookup table.
using UnitCellTable = std::vector<std::pair<double, double>>;

UnitCellTable load_unit_cell_table(const std::filesystem::path& path);

/// Pillar diameter per sample by nearest phase on the circle.
Image map_to_diameters(const PhaseProfile& profile, const UnitCellTable& table);

}  // namespace nearfar
