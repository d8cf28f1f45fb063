#pragma once

#include <span>
#include <vector>

#include "nearfar/raster.hpp"

namespace nearfar {

struct AlignOptions {
    int max_shift = 64;
    double min_peak_ratio = 3.0;   ///< peak over mean |correlation|
    double taper = 0.1;            ///< Tukey taper fraction per side
    double regularization = 1e-2;  ///< relative floor in the cross-power normalisation
    bool subtract_mean = true;
    double smooth_sigma_x = 0.0;   ///< Gaussian smoothing before correlation, pixels
    double smooth_sigma_y = 0.0;
};

struct AlignedPair {
    Image i1;
    Image i3;         ///< resampled onto i1's grid
    Mask valid;       ///< pixels where the resampled i3 is defined
    double shift_x = 0.0;
    double shift_y = 0.0;  ///< i3(x, y) ~ i1(x - shift_x, y - shift_y)
};

/// Phase correlation with parabolic subpixel refinement. Throws
/// AlignmentUnreliable when the correlation peak is not distinct.
AlignedPair align_pair(const Image& i1, const Image& i3, const AlignOptions& opts = {});

struct LaplacianOptions {
    double presmooth_sigma = 1.0;  ///< x-axis pixels; 0 disables
    /// Blur aspect ratio (y over x). The y second difference is weighted by
    /// aspect^2 and the y smoothing sigma scaled by aspect, which turns an
    /// anisotropic Gaussian blur back into an isotropic diffusion.
    double aspect = 1.0;
};

/// 5-point Laplacian in pixel^-2 after optional Gaussian smoothing. The
/// one-pixel border is set to zero.
Image laplacian(const Image& img, const LaplacianOptions& opts = {});

struct DifferentialPair {
    Image lap;   ///< Laplacian of the mean of the pair
    Image drho;  ///< half difference (i3 - i1) / 2
    Mask valid;
};

/// Both images are smoothed identically before forming the Laplacian and the
/// half difference.
DifferentialPair differential_pair(const AlignedPair& p, const LaplacianOptions& opts = {});

struct DfddParams {
    double a_param = 0.0;
    double b_param = 0.0;
};

void validate(const DfddParams& params);

struct DepthGate {
    double eps_lap = 0.0;
    double eps_den = 0.0;
    double z_max = 0.1;
};

/// Gate thresholds as fractions of a percentile of |lap| over valid pixels.
struct GateRule {
    double lap_fraction = 1e-3;
    double den_fraction = 1e-3;
    double percentile = 99.0;
    double z_max = 0.1;
};

DepthGate resolve_gate(const DifferentialPair& d, const GateRule& rule = {});

struct DepthMap {
    Image depth;       ///< zero where invalid
    Image confidence;  ///< |A lap + B drho|
    Mask valid;
};

/// Z = lap / (A lap + B drho) per pixel.
DepthMap depth_from_defocus(const DifferentialPair& d, const DfddParams& params, const DepthGate& gate);

struct DepthSample {
    double depth = 0.0;
    double weight = 0.0;
};

struct HistogramBin {
    double lower = 0.0;  ///< bin covers [lower, lower + width)
    double weight = 0.0;
    std::size_t count = 0;
};

struct DepthAggregate {
    double bin_width = 0.0;
    std::vector<HistogramBin> histogram;  ///< occupied bins, ascending
    double point_estimate = 0.0;          ///< confidence-weighted median
    std::vector<DepthSample> samples;     ///< valid pixels in raster order
};

/// Throws NoValidDepth when the map has no valid pixel.
DepthAggregate aggregate_depth(const DepthMap& dm, double bin_width = 0.25e-3);

/// Lower weighted median: smallest value whose cumulative weight reaches half.
double weighted_median(std::vector<DepthSample> samples);

struct DepthMetrics {
    double true_depth = 0.0;
    double mean_pred = 0.0;
    double mae = 0.0;
    double frac_within_5pct = 0.0;
    std::size_t n_valid = 0;
};

DepthMetrics depth_metrics(const DepthMap& dm, double truth);
std::vector<DepthMetrics> eval_metrics(std::span<const DepthMap> estimates, std::span<const double> truths);

}  // namespace nearfar
