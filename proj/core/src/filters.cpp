#include "nearfar/filters.hpp"

#include <algorithm>
#include <cmath>

namespace nearfar {

int gaussian_radius(double sigma) {
    if (!(sigma >= 0.25)) return 0;
    return static_cast<int>(std::ceil(4.0 * sigma));
}

std::vector<double> gaussian_kernel_1d(double sigma, int radius) {
    if (radius < 0) throw InvalidArgument("kernel radius must be non-negative");
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1), 0.0);
    if (!(sigma >= 0.25)) {
        k[static_cast<std::size_t>(radius)] = 1.0;
        return k;
    }
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (int i = -radius; i <= radius; ++i) k[static_cast<std::size_t>(i + radius)] = std::exp(-i * i * inv);
    // Sum symmetric pairs outward-in so that k(i) and k(-i) are normalized identically.
    double total = k[static_cast<std::size_t>(radius)];
    for (int i = radius; i >= 1; --i) total += 2.0 * k[static_cast<std::size_t>(radius + i)];
    for (double& v : k) v /= total;
    return k;
}

namespace {

int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

void convolve_row(std::span<const double> src, std::span<double> dst, std::span<const double> k,
                  Boundary boundary) {
    const int n = static_cast<int>(src.size());
    const int r = static_cast<int>(k.size() / 2);
    int lo = 0;
    int hi = n - 1;
    if (boundary == Boundary::zero) {
        int first = -1;
        int last = -1;
        for (int i = 0; i < n; ++i) {
            if (src[static_cast<std::size_t>(i)] != 0.0) {
                if (first < 0) first = i;
                last = i;
            }
        }
        std::fill(dst.begin(), dst.end(), 0.0);
        if (first < 0) return;
        lo = std::max(0, first - r);
        hi = std::min(n - 1, last + r);
    }
    for (int x = lo; x <= hi; ++x) {
        double acc = 0.0;
        for (int j = -r; j <= r; ++j) {
            const int s = x - j;
            double v;
            if (s >= 0 && s < n) {
                v = src[static_cast<std::size_t>(s)];
            } else if (boundary == Boundary::replicate) {
                v = src[static_cast<std::size_t>(clamp_index(s, n))];
            } else {
                continue;
            }
            acc += k[static_cast<std::size_t>(j + r)] * v;
        }
        dst[static_cast<std::size_t>(x)] = acc;
    }
}

}  // namespace

Image convolve_separable(const Image& src, std::span<const double> kx, std::span<const double> ky,
                         Boundary boundary) {
    if (kx.size() % 2 == 0 || ky.size() % 2 == 0) throw InvalidArgument("kernel length must be odd");
    const int w = src.width();
    const int h = src.height();
    Image tmp(w, h);
    std::vector<char> row_nonzero(static_cast<std::size_t>(h), 0);
    for (int y = 0; y < h; ++y) {
        convolve_row(src.row(y), tmp.row(y), kx, boundary);
        const auto r = tmp.row(y);
        row_nonzero[static_cast<std::size_t>(y)] =
            std::any_of(r.begin(), r.end(), [](double v) { return v != 0.0; });
    }

    Image out(w, h);
    const int r = static_cast<int>(ky.size() / 2);
    for (int y = 0; y < h; ++y) {
        auto dst = out.row(y);
        for (int j = -r; j <= r; ++j) {
            int s = y - j;
            if (s < 0 || s >= h) {
                if (boundary == Boundary::zero) continue;
                s = clamp_index(s, h);
            }
            if (!row_nonzero[static_cast<std::size_t>(s)]) continue;
            const double kv = ky[static_cast<std::size_t>(j + r)];
            const auto srow = tmp.row(s);
            for (int x = 0; x < w; ++x) dst[static_cast<std::size_t>(x)] += kv * srow[static_cast<std::size_t>(x)];
        }
    }
    return out;
}

Image gaussian_blur(const Image& src, double sigma_x, double sigma_y, Boundary boundary) {
    const auto kx = gaussian_kernel_1d(sigma_x, gaussian_radius(sigma_x));
    const auto ky = gaussian_kernel_1d(sigma_y, gaussian_radius(sigma_y));
    return convolve_separable(src, kx, ky, boundary);
}

double sample_bilinear(const Image& img, double x, double y, double outside) {
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const int x0 = static_cast<int>(fx);
    const int y0 = static_cast<int>(fy);
    const double tx = x - fx;
    const double ty = y - fy;
    auto at = [&](int xi, int yi) { return img.contains(xi, yi) ? img(xi, yi) : outside; };
    // Exact taps skip the neighbour so integer coordinates read back the stored value.
    const double top = tx == 0.0 ? at(x0, y0) : (1.0 - tx) * at(x0, y0) + tx * at(x0 + 1, y0);
    if (ty == 0.0) return top;
    const double bottom = tx == 0.0 ? at(x0, y0 + 1) : (1.0 - tx) * at(x0, y0 + 1) + tx * at(x0 + 1, y0 + 1);
    return (1.0 - ty) * top + ty * bottom;
}

void CompensatedSum::add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
        comp_ += (sum_ - t) + v;
    } else {
        comp_ += (v - t) + sum_;
    }
    sum_ = t;
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw InvalidArgument("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double t = pos - static_cast<double>(lo);
    return values[lo] + t * (values[hi] - values[lo]);
}

}  // namespace nearfar
