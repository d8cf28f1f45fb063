#pragma once

#include <span>
#include <vector>

#include "nearfar/raster.hpp"

namespace nearfar {

enum class Boundary { zero, replicate };

/// Kernel half-width covering +-4 sigma.
int gaussian_radius(double sigma);

/// Sampled, unit-sum 1D Gaussian of the given half-width. A sigma below a
/// quarter pixel yields a discrete delta.
std::vector<double> gaussian_kernel_1d(double sigma, int radius);

/// Separable convolution with odd-length kernels centred on their middle tap.
Image convolve_separable(const Image& src, std::span<const double> kx, std::span<const double> ky,
                         Boundary boundary);

Image gaussian_blur(const Image& src, double sigma_x, double sigma_y, Boundary boundary);

/// Bilinear sample at continuous pixel coordinates; samples outside the
/// raster read as `outside`.
double sample_bilinear(const Image& img, double x, double y, double outside = 0.0);

/// Neumaier-compensated accumulator.
class CompensatedSum {
public:
    void add(double v);
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// Linear-interpolated quantile of an unsorted sample, q in [0, 1].
double quantile(std::vector<double> values, double q);

}  // namespace nearfar
