#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nearfar/optics.hpp"
#include "nearfar/raster.hpp"

namespace nearfar {

struct SensorSpec {
    int width = 2816;
    int height = 512;
    double pixel_pitch = 3.45e-6;
    double full_well = 12500.0;       ///< photons
    double read_noise_sigma = 2.0;    ///< photons
    int bit_depth = 16;
    double black_level = 256.0;       ///< DN pedestal so read noise is not clipped at zero
    int window_width = 512;           ///< sub-image window size in pixels
    int window_height = 512;

    friend bool operator==(const SensorSpec&, const SensorSpec&) = default;
};

void validate(const SensorSpec& sensor);

/// Fronto-parallel textured plane. Texture row 0 is the top (+y) edge.
struct PlanarTarget {
    Image texture;
    double depth = 0.0;
    double physical_pitch = 0.0;  ///< object-space spacing of texture samples
    double center_x = 0.0;
    double center_y = 0.0;
    double alpha = 1.0;
};

void validate(const PlanarTarget& target);

/// Built-in textures: "checker", "point", "bars". `size` is the edge length
/// in samples (ignored for "point").
Image procedural_texture(const std::string& name, int size);

struct SensorPoint {
    double col = 0.0;
    double row = 0.0;
};

/// Sensor-plane metres to pixel coordinates. Both axes are flipped: the
/// image is inverted, so the flip keeps sub-images upright and ordered
/// channel 1, 2, 3 from left to right.
SensorPoint to_pixel(const SensorSpec& sensor, double x, double y);

/// Chief ray from object point (x, y, z) through the channel's panel centre.
SensorPoint project_point(const OpticalSystemConfig& cfg, const ChannelSpec& ch, const SensorSpec& sensor,
                          double x, double y, double z);

struct SubimageGeometry {
    SensorPoint center;        ///< chief-ray image of an on-axis point at the channel's focal distance
    double magnification = 0.0;
    PixelRect window;
};

/// Throws SensorTooSmall if the window does not fit on the sensor.
SubimageGeometry subimage_geometry(const OpticalSystemConfig& cfg, const ChannelSpec& ch, const SensorSpec& sensor);

/// Windows for channels 1..3; throws SensorTooSmall if any two overlap.
std::array<PixelRect, 3> capture_windows(const OpticalSystemConfig& cfg, const SensorSpec& sensor);

/// Window-sized raster of one channel's view of the scene.
Image render_subimage(const std::vector<PlanarTarget>& scene, const OpticalSystemConfig& cfg, const ChannelSpec& ch,
                      const SensorSpec& sensor);

/// Poisson shot noise on gain * v plus Gaussian read noise, divided by gain.
/// Each pixel draws from its own counter-keyed stream.
Image apply_noise(const Image& raster, double gain, double read_sigma, std::uint64_t seed);

struct NoiseSettings {
    bool enabled = false;
    double gain_scale = 1.0;   ///< multiplies the exposure-normalised photon count
    double read_sigma = -1.0;  ///< < 0 selects the sensor's read noise
};

struct CaptureLayout {
    std::array<PixelRect, 3> windows{};
    std::uint64_t seed = 0;
    double exposure_gain = 1.0;  ///< photons per unit scene radiance
    double full_well = 12500.0;
    int bit_depth = 16;
    double black_level = 0.0;    ///< DN subtracted on extraction

    friend bool operator==(const CaptureLayout&, const CaptureLayout&) = default;
};

class RawCapture {
public:
    /// Throws InvalidArgument if a window leaves the frame or two windows overlap.
    RawCapture(Raster<std::uint16_t> pixels, CaptureLayout layout);

    const Raster<std::uint16_t>& pixels() const { return pixels_; }
    const CaptureLayout& layout() const { return layout_; }

private:
    Raster<std::uint16_t> pixels_;
    CaptureLayout layout_;
};

RawCapture render_capture(const std::vector<PlanarTarget>& scene, const OpticalSystemConfig& cfg,
                          const SensorSpec& sensor, const NoiseSettings& noise, std::uint64_t seed);

/// Sums window rasters into a sensor frame (linear units, no quantisation).
Image place_subimages(const std::array<Image, 3>& subimages, const std::array<PixelRect, 3>& windows, int width,
                      int height);

/// Crops the windows ordered left to right as linear floats (DN above black level).
std::array<Image, 3> extract_subimages(const RawCapture& cap);

}  // namespace nearfar
