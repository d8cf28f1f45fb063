#pragma once

#include <span>
#include <string>

#include <nearfar/dfdd.hpp>

namespace nearfar::harness {

/// Bar chart of a depth histogram (weights normalised to the tallest bar)
/// with a marker at the true depth.
std::string histogram_svg(const DepthAggregate& agg, double true_depth);

/// Mean prediction against true depth with a +-MAE band, the identity line
/// and the +-5 % relative-error boundaries.
std::string band_plot_svg(std::span<const DepthMetrics> rows);

}  // namespace nearfar::harness
