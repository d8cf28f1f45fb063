#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "nearfar/dfdd.hpp"

namespace nearfar {

struct CalibrationSample {
    double lap = 0.0;
    double drho = 0.0;
    double z_true = 0.0;
    double weight = 1.0;
};

struct CalibrationResult {
    DfddParams params;
    double rms_residual = 0.0;  ///< weighted RMS of predicted minus true depth (m)
    std::size_t n_used = 0;     ///< samples with non-zero weight
    double condition = 0.0;     ///< of the column-equilibrated normal matrix
    int iterations = 0;
};

/// Weighted least squares on r = z_true (A lap + B drho) - lap.
/// Throws Unidentifiable on a rank-deficient design.
CalibrationResult fit_linear(std::span<const CalibrationSample> samples);

struct RobustOptions {
    /// Huber threshold in units of the robust residual scale (1.4826 MAD);
    /// <= 0 selects 1.345. Infinity reproduces fit_linear.
    double huber_delta = 0.0;
    int max_iter = 50;
    double tolerance = 1e-10;
};

/// IRLS with Huber weights on the weighted residuals sqrt(w) r.
CalibrationResult fit_robust(std::span<const CalibrationSample> samples, const RobustOptions& opts = {});

/// Linearised residual of one sample.
double linear_residual(const CalibrationSample& s, const DfddParams& p);

struct ResidualRow {
    double z_pred = 0.0;     ///< NaN where the denominator vanishes
    double depth_error = 0.0;
    double linear = 0.0;
};

struct ResidualReport {
    std::vector<ResidualRow> rows;
    static constexpr std::array<double, 7> levels{0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0};
    std::array<double, 7> depth_error_quantiles{};  ///< over rows with finite z_pred
};

ResidualReport residual_report(std::span<const CalibrationSample> samples, const DfddParams& params);

}  // namespace nearfar
