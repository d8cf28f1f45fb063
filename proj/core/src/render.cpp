#include "nearfar/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "nearfar/errors.hpp"
#include "nearfar/filters.hpp"

namespace nearfar {

namespace {

constexpr double kExposureFraction = 0.8;

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// splitmix64 stream keyed by (seed, pixel index).
class PixelRng {
public:
    using result_type = std::uint64_t;

    PixelRng(std::uint64_t seed, std::uint64_t index)
        : state_(mix64(seed ^ mix64(index + 0x632BE59BD9B4E019ULL))) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix64(state_);
    }

private:
    std::uint64_t state_;
};

// Bilinear weight of a unit indicator over [0, n-1] at coordinate t.
double edge_weight(double t, int n) {
    if (t < -1.0 || t > n) return 0.0;
    if (t < 0.0) return 1.0 + t;
    if (t > n - 1) return static_cast<double>(n) - t;
    return 1.0;
}

double image_max(const Image& img) {
    double m = 0.0;
    for (double v : img.values()) m = std::max(m, v);
    return m;
}

}  // namespace

void validate(const SensorSpec& s) {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw InvalidArgument(std::string("invalid sensor: ") + what);
    };
    require(s.width > 0 && s.height > 0, "width and height must be positive");
    require(std::isfinite(s.pixel_pitch) && s.pixel_pitch > 0.0, "pixel_pitch must be positive");
    require(std::isfinite(s.full_well) && s.full_well > 0.0, "full_well must be positive");
    require(std::isfinite(s.read_noise_sigma) && s.read_noise_sigma >= 0.0, "read_noise_sigma must be non-negative");
    require(s.bit_depth == 8 || s.bit_depth == 16, "bit_depth must be 8 or 16");
    require(std::isfinite(s.black_level) && s.black_level >= 0.0 &&
                s.black_level < static_cast<double>((1u << s.bit_depth) - 1u),
            "black_level must lie within the DN range");
    require(s.window_width > 0 && s.window_height > 0, "window size must be positive");
}

void validate(const PlanarTarget& t) {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw InvalidArgument(std::string("invalid target: ") + what);
    };
    require(std::isfinite(t.depth) && t.depth > 0.0, "depth must be positive");
    require(std::isfinite(t.physical_pitch) && t.physical_pitch > 0.0, "physical_pitch must be positive");
    require(std::isfinite(t.alpha) && t.alpha > 0.0 && t.alpha <= 1.0, "alpha must lie in (0, 1]");
    require(std::isfinite(t.center_x) && std::isfinite(t.center_y), "center must be finite");
    require(!t.texture.empty(), "texture is empty");
}

Image procedural_texture(const std::string& name, int size) {
    if (name == "point") return Image(1, 1, 1.0);
    if (size <= 0) throw InvalidArgument("texture size must be positive");
    Image t(size, size);
    if (name == "checker") {
        const int cell = std::max(1, size / 8);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) t(x, y) = ((x / cell + y / cell) % 2 == 0) ? 1.0 : 0.2;
        return t;
    }
    if (name == "bars") {
        // Three bands of three-bar groups, bar width halving per band:
        // vertical bars on the left half, horizontal on the right.
        t.fill(0.1);
        const int margin = size / 16;
        for (int g = 0; g < 3; ++g) {
            const int bw = std::max(1, size / (24 << g));
            const int y0 = g * size / 3 + margin;
            for (int y = y0; y < std::min(size, y0 + 5 * bw); ++y) {
                for (int x = margin; x < std::min(size / 2, margin + 5 * bw); ++x)
                    if (((x - margin) / bw) % 2 == 0) t(x, y) = 1.0;
                if (((y - y0) / bw) % 2 == 0)
                    for (int x = size / 2 + margin; x < size - margin; ++x) t(x, y) = 1.0;
            }
        }
        return t;
    }
    throw InvalidArgument("unknown procedural texture '" + name + "'");
}

SensorPoint to_pixel(const SensorSpec& sensor, double x, double y) {
    return {(sensor.width - 1) / 2.0 - x / sensor.pixel_pitch, (sensor.height - 1) / 2.0 + y / sensor.pixel_pitch};
}

SensorPoint project_point(const OpticalSystemConfig& cfg, const ChannelSpec& ch, const SensorSpec& sensor, double x,
                          double y, double z) {
    if (!(z > 0.0)) throw InvalidArgument("object distance must be positive");
    const auto s = channel_system_matrix(cfg, ch);
    const double xs = s.apply({ch.panel_center_x, (ch.panel_center_x - x) / z}).height;
    const double ys = s.b * (-y / z);
    return to_pixel(sensor, xs, ys);
}

SubimageGeometry subimage_geometry(const OpticalSystemConfig& cfg, const ChannelSpec& ch, const SensorSpec& sensor) {
    validate(sensor);
    const auto s = channel_system_matrix(cfg, ch);
    SubimageGeometry g;
    double angle = 0.0;  // object at infinity when the channel has no finite conjugate
    try {
        angle = ch.panel_center_x / focal_object_distance(s);
    } catch (const NoFiniteConjugate&) {
    }
    g.center = to_pixel(sensor, s.apply({ch.panel_center_x, angle}).height, 0.0);
    g.magnification = s.a;
    const double left = std::round(g.center.col - (sensor.window_width - 1) / 2.0);
    const double top = std::round(g.center.row - (sensor.window_height - 1) / 2.0);
    if (!std::isfinite(left) || left < 0.0 || top < 0.0 || left + sensor.window_width > sensor.width ||
        top + sensor.window_height > sensor.height) {
        throw SensorTooSmall("sensor too small: channel " + std::to_string(ch.index) + " window leaves the sensor");
    }
    g.window = {static_cast<int>(left), static_cast<int>(top), sensor.window_width, sensor.window_height};
    return g;
}

std::array<PixelRect, 3> capture_windows(const OpticalSystemConfig& cfg, const SensorSpec& sensor) {
    std::array<PixelRect, 3> w;
    const auto chs = channels(cfg);
    for (std::size_t i = 0; i < 3; ++i) w[i] = subimage_geometry(cfg, chs[i], sensor).window;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = i + 1; j < 3; ++j)
            if (w[i].intersects(w[j]))
                throw SensorTooSmall("sensor too small: windows of channels " + std::to_string(i + 1) + " and " +
                                     std::to_string(j + 1) + " overlap");
    return w;
}

Image render_subimage(const std::vector<PlanarTarget>& scene, const OpticalSystemConfig& cfg, const ChannelSpec& ch,
                      const SensorSpec& sensor) {
    const auto geom = subimage_geometry(cfg, ch, sensor);
    const PixelRect& win = geom.window;
    Image out(win.width, win.height);
    if (scene.empty()) return out;

    std::vector<std::size_t> order(scene.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scene[a].depth > scene[b].depth; });

    const auto s = channel_system_matrix(cfg, ch);
    const int max_radius = std::max(win.width, win.height);

    for (std::size_t idx : order) {
        const PlanarTarget& t = scene[idx];
        validate(t);
        const double z = t.depth;
        const double m = -s.b / z;  // sensor metres per object metre
        const auto c = project_point(cfg, ch, sensor, t.center_x, t.center_y, z);
        const double lc = c.col - win.x;
        const double lr = c.row - win.y;
        const int tw = t.texture.width();
        const int th = t.texture.height();
        const double px_per_sample = std::abs(m) * t.physical_pitch / sensor.pixel_pitch;

        Image layer(win.width, win.height);
        Image cover(win.width, win.height);
        bool any = false;
        if (px_per_sample * tw < 1.0 && px_per_sample * th < 1.0) {
            // Sub-pixel target: deposit its summed radiance in one pixel.
            const int px = static_cast<int>(std::lround(lc));
            const int py = static_cast<int>(std::lround(lr));
            if (layer.contains(px, py)) {
                CompensatedSum sum;
                for (double v : t.texture.values()) sum.add(v);
                layer(px, py) = t.alpha * sum.value();
                any = true;
            }
        } else {
            const double ext_x = px_per_sample * (tw / 2.0 + 1.0);
            const double ext_y = px_per_sample * (th / 2.0 + 1.0);
            const int x0 = std::max(0, static_cast<int>(std::floor(lc - ext_x)));
            const int x1 = std::min(win.width - 1, static_cast<int>(std::ceil(lc + ext_x)));
            const int y0 = std::max(0, static_cast<int>(std::floor(lr - ext_y)));
            const int y1 = std::min(win.height - 1, static_cast<int>(std::ceil(lr + ext_y)));
            const double step = sensor.pixel_pitch / (m * t.physical_pitch);  // texture samples per pixel, signed
            for (int j = y0; j <= y1; ++j) {
                const double ty = -(j - lr) * step + (th - 1) / 2.0;
                const double wy = edge_weight(ty, th);
                if (wy == 0.0) continue;
                for (int i = x0; i <= x1; ++i) {
                    const double tx = -(i - lc) * step + (tw - 1) / 2.0;
                    const double wx = edge_weight(tx, tw);
                    if (wx == 0.0) continue;
                    layer(i, j) = t.alpha * sample_bilinear(t.texture, tx, ty, 0.0);
                    cover(i, j) = t.alpha * wx * wy;
                    any = true;
                }
            }
        }
        if (!any) continue;

        const auto r = blur_radius(cfg, ch, z);
        const double sx = cfg.kappa * r.x / sensor.pixel_pitch;
        const double sy = cfg.kappa * r.y / sensor.pixel_pitch;
        const auto kx = gaussian_kernel_1d(sx, std::min(gaussian_radius(sx), max_radius));
        const auto ky = gaussian_kernel_1d(sy, std::min(gaussian_radius(sy), max_radius));
        if (kx.size() > 1 || ky.size() > 1) {
            layer = convolve_separable(layer, kx, ky, Boundary::zero);
            cover = convolve_separable(cover, kx, ky, Boundary::zero);
        }
        auto o = out.values();
        auto l = layer.values();
        auto cv = cover.values();
        for (std::size_t k = 0; k < o.size(); ++k) o[k] = l[k] + (1.0 - cv[k]) * o[k];
    }
    return out;
}

Image apply_noise(const Image& raster, double gain, double read_sigma, std::uint64_t seed) {
    if (!(gain > 0.0) || !std::isfinite(gain)) throw InvalidArgument("noise gain must be positive");
    if (!(read_sigma >= 0.0)) throw InvalidArgument("read noise sigma must be non-negative");
    Image out(raster.width(), raster.height());
    auto in = raster.values();
    auto o = out.values();
    for (std::size_t k = 0; k < in.size(); ++k) {
        PixelRng rng(seed, k);
        const double mean = std::max(0.0, gain * in[k]);
        double n = 0.0;
        if (mean > 0.0) n = static_cast<double>(std::poisson_distribution<long long>(mean)(rng));
        if (read_sigma > 0.0) n += std::normal_distribution<double>(0.0, read_sigma)(rng);
        o[k] = n / gain;
    }
    return out;
}

RawCapture::RawCapture(Raster<std::uint16_t> pixels, CaptureLayout layout)
    : pixels_(std::move(pixels)), layout_(layout) {
    const auto& w = layout_.windows;
    for (std::size_t i = 0; i < 3; ++i) {
        if (w[i].width <= 0 || w[i].height <= 0 || !w[i].inside(pixels_.width(), pixels_.height()))
            throw InvalidArgument("capture layout: window " + std::to_string(i + 1) + " lies outside the frame");
        for (std::size_t j = 0; j < i; ++j)
            if (w[i].intersects(w[j]))
                throw InvalidArgument("capture layout: windows " + std::to_string(j + 1) + " and " +
                                      std::to_string(i + 1) + " overlap");
    }
    if (layout_.bit_depth != 8 && layout_.bit_depth != 16) throw InvalidArgument("capture layout: bad bit depth");
    if (!(layout_.black_level >= 0.0)) throw InvalidArgument("capture layout: black level must be non-negative");
}

Image place_subimages(const std::array<Image, 3>& subimages, const std::array<PixelRect, 3>& windows, int width,
                      int height) {
    Image frame(width, height);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& w = windows[i];
        const auto& sub = subimages[i];
        if (sub.width() != w.width || sub.height() != w.height) throw InvalidArgument("sub-image does not match window");
        if (!w.inside(width, height)) throw InvalidArgument("window lies outside the frame");
        for (int y = 0; y < w.height; ++y)
            for (int x = 0; x < w.width; ++x) frame(w.x + x, w.y + y) += sub(x, y);
    }
    return frame;
}

RawCapture render_capture(const std::vector<PlanarTarget>& scene, const OpticalSystemConfig& cfg,
                          const SensorSpec& sensor, const NoiseSettings& noise, std::uint64_t seed) {
    validate(cfg, std::numeric_limits<double>::infinity());
    validate(sensor);
    const auto windows = capture_windows(cfg, sensor);
    const auto chs = channels(cfg);
    std::array<Image, 3> subs;
    for (std::size_t i = 0; i < 3; ++i) subs[i] = render_subimage(scene, cfg, chs[i], sensor);
    Image frame = place_subimages(subs, windows, sensor.width, sensor.height);

    const double peak = image_max(frame);
    double gain = peak > 0.0 ? kExposureFraction * sensor.full_well / peak : 1.0;
    if (noise.enabled) {
        if (!(noise.gain_scale > 0.0)) throw InvalidArgument("noise gain must be positive");
        gain *= noise.gain_scale;
        const double read = noise.read_sigma < 0.0 ? sensor.read_noise_sigma : noise.read_sigma;
        frame = apply_noise(frame, gain, read, seed);
    }

    const double max_dn = static_cast<double>((1u << sensor.bit_depth) - 1u);
    const double scale = gain * max_dn / sensor.full_well;
    Raster<std::uint16_t> px(sensor.width, sensor.height);
    auto f = frame.values();
    auto p = px.values();
    for (std::size_t k = 0; k < f.size(); ++k) {
        const double dn = std::clamp(std::round(f[k] * scale + sensor.black_level), 0.0, max_dn);
        p[k] = static_cast<std::uint16_t>(dn);
    }
    CaptureLayout layout{windows, seed, gain, sensor.full_well, sensor.bit_depth, sensor.black_level};
    return RawCapture(std::move(px), layout);
}

std::array<Image, 3> extract_subimages(const RawCapture& cap) {
    std::array<std::size_t, 3> order{0, 1, 2};
    const auto& w = cap.layout().windows;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return w[a].x < w[b].x; });
    std::array<Image, 3> out;
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& r = w[order[k]];
        Image img(r.width, r.height);
        for (int y = 0; y < r.height; ++y)
            for (int x = 0; x < r.width; ++x) img(x, y) = cap.pixels()(r.x + x, r.y + y) - cap.layout().black_level;
        out[k] = std::move(img);
    }
    return out;
}

}  // namespace nearfar
