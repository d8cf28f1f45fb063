#include "nearfar/dfdd.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <numbers>

#include "nearfar/errors.hpp"
#include "nearfar/filters.hpp"

namespace nearfar {

namespace {

struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};
struct PlanDestroy {
    void operator()(fftw_plan p) const { fftw_destroy_plan(p); }
};
using PlanPtr = std::unique_ptr<std::remove_pointer_t<fftw_plan>, PlanDestroy>;

template <typename T>
std::unique_ptr<T[], FftwFree> fftw_buffer(std::size_t n) {
    auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * n));
    if (!p) throw std::bad_alloc();
    return std::unique_ptr<T[], FftwFree>(p);
}

std::vector<double> tukey(int n, double taper) {
    std::vector<double> w(static_cast<std::size_t>(n), 1.0);
    const double edge = taper * (n - 1);
    if (edge <= 0.0) return w;
    for (int i = 0; i < n; ++i) {
        const double d = std::min<double>(i, n - 1 - i);
        if (d < edge) w[static_cast<std::size_t>(i)] = 0.5 * (1.0 - std::cos(std::numbers::pi * d / edge));
    }
    return w;
}

bool is_constant(const Image& img) {
    auto v = img.values();
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *lo == *hi;
}

// Vertex offset of the parabola through (-1, l), (0, c), (1, r).
double parabolic_offset(double l, double c, double r) {
    const double den = l - 2.0 * c + r;
    if (!(den < 0.0)) return 0.0;
    const double off = 0.5 * (l - r) / den;
    if (std::abs(off) < 1e-9) return 0.0;
    return std::clamp(off, -0.5, 0.5);
}

int wrap(int i, int n) { return ((i % n) + n) % n; }

// True when i3(x, y) == i1(x - dx, y - dy) over the overlap, up to rounding.
bool exact_integer_match(const Image& i1, const Image& i3, int dx, int dy) {
    double scale = 0.0;
    for (double v : i1.values()) scale = std::max(scale, std::abs(v));
    const double tol = 1e-12 * scale;
    const int w = i1.width();
    const int h = i1.height();
    for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
        for (int x = std::max(0, -dx); x < std::min(w, w - dx); ++x) {
            if (!(std::abs(i3(x + dx, y + dy) - i1(x, y)) <= tol)) return false;
        }
    }
    return true;
}

Image stencil(const Image& img, double wy) {
    const int w = img.width();
    const int h = img.height();
    Image out(w, h);
    const double wc = 2.0 + 2.0 * wy;
    for (int y = 1; y < h - 1; ++y) {
        for (int x = 1; x < w - 1; ++x) {
            out(x, y) = (img(x - 1, y) + img(x + 1, y)) + wy * (img(x, y - 1) + img(x, y + 1)) - wc * img(x, y);
        }
    }
    return out;
}

Image presmooth(const Image& img, const LaplacianOptions& opts) {
    if (!(opts.presmooth_sigma >= 0.0) || !(opts.aspect > 0.0))
        throw InvalidArgument("laplacian: smoothing sigma must be >= 0 and aspect > 0");
    if (opts.presmooth_sigma == 0.0) return img;
    return gaussian_blur(img, opts.presmooth_sigma, opts.presmooth_sigma * opts.aspect, Boundary::replicate);
}

}  // namespace

AlignedPair align_pair(const Image& i1, const Image& i3, const AlignOptions& opts) {
    if (!i1.same_shape(i3)) throw InvalidArgument("align_pair: images differ in size");
    if (i1.width() < 2 || i1.height() < 2) throw InvalidArgument("align_pair: images too small");
    if (opts.max_shift < 0) throw InvalidArgument("align_pair: max_shift must be non-negative");
    if (is_constant(i1) || is_constant(i3)) throw AlignmentUnreliable("alignment unreliable: constant image");

    const int w = i1.width();
    const int h = i1.height();
    const int wc = w / 2 + 1;
    const std::size_t n_real = static_cast<std::size_t>(w) * h;
    const std::size_t n_cplx = static_cast<std::size_t>(wc) * h;

    auto r1 = fftw_buffer<double>(n_real);
    auto r3 = fftw_buffer<double>(n_real);
    auto f1 = fftw_buffer<fftw_complex>(n_cplx);
    auto f3 = fftw_buffer<fftw_complex>(n_cplx);

    PlanPtr p1(fftw_plan_dft_r2c_2d(h, w, r1.get(), f1.get(), FFTW_ESTIMATE));
    PlanPtr p3(fftw_plan_dft_r2c_2d(h, w, r3.get(), f3.get(), FFTW_ESTIMATE));
    PlanPtr inv(fftw_plan_dft_c2r_2d(h, w, f1.get(), r1.get(), FFTW_ESTIMATE));
    if (!p1 || !p3 || !inv) throw Error("align_pair: FFT planning failed");

    auto prepare = [&](const Image& img) {
        Image out = (opts.smooth_sigma_x > 0.0 || opts.smooth_sigma_y > 0.0)
                        ? gaussian_blur(img, opts.smooth_sigma_x, opts.smooth_sigma_y, Boundary::replicate)
                        : img;
        if (opts.subtract_mean) {
            CompensatedSum sum;
            for (double v : out.values()) sum.add(v);
            const double mean = sum.value() / static_cast<double>(out.size());
            for (double& v : out.values()) v -= mean;
        }
        return out;
    };
    const Image a1 = prepare(i1);
    const Image a3 = prepare(i3);
    const auto wx = tukey(w, opts.taper);
    const auto wy = tukey(h, opts.taper);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double win = wx[static_cast<std::size_t>(x)] * wy[static_cast<std::size_t>(y)];
            const std::size_t k = static_cast<std::size_t>(y) * w + x;
            r1[k] = win * a1(x, y);
            r3[k] = win * a3(x, y);
        }
    }
    fftw_execute(p1.get());
    fftw_execute(p3.get());

    // Cross power F3 * conj(F1) peaks at the displacement of i3 relative to i1.
    double max_mag = 0.0;
    for (std::size_t k = 0; k < n_cplx; ++k) {
        const std::complex<double> a(f1[k][0], f1[k][1]);
        const std::complex<double> b(f3[k][0], f3[k][1]);
        const auto x = b * std::conj(a);
        f1[k][0] = x.real();
        f1[k][1] = x.imag();
        max_mag = std::max(max_mag, std::abs(x));
    }
    const double floor_mag = opts.regularization * max_mag;
    for (std::size_t k = 0; k < n_cplx; ++k) {
        const double m = std::hypot(f1[k][0], f1[k][1]) + floor_mag;
        if (m > 0.0) {
            f1[k][0] /= m;
            f1[k][1] /= m;
        }
    }
    fftw_execute(inv.get());

    auto corr = [&](int dx, int dy) { return r1[static_cast<std::size_t>(wrap(dy, h)) * w + wrap(dx, w)]; };

    const int mx = std::min(opts.max_shift, (w - 1) / 2);
    const int my = std::min(opts.max_shift, (h - 1) / 2);
    int best_x = 0;
    int best_y = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (int dy = -my; dy <= my; ++dy) {
        for (int dx = -mx; dx <= mx; ++dx) {
            const double c = corr(dx, dy);
            if (c > best) {
                best = c;
                best_x = dx;
                best_y = dy;
            }
        }
    }
    CompensatedSum floor_sum;
    for (std::size_t k = 0; k < n_real; ++k) floor_sum.add(std::abs(r1[k]));
    const double floor_level = floor_sum.value() / static_cast<double>(n_real);
    if (!(best > 0.0) || !(best >= opts.min_peak_ratio * floor_level)) {
        throw AlignmentUnreliable("alignment unreliable: correlation peak " + std::to_string(best / floor_level) +
                                  "x the mean floor");
    }

    AlignedPair out;
    out.shift_x = best_x;
    out.shift_y = best_y;
    if (!exact_integer_match(i1, i3, best_x, best_y)) {
        out.shift_x += parabolic_offset(corr(best_x - 1, best_y), best, corr(best_x + 1, best_y));
        out.shift_y += parabolic_offset(corr(best_x, best_y - 1), best, corr(best_x, best_y + 1));
    }
    out.i1 = i1;
    out.i3 = Image(w, h);
    out.valid = Mask(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double sx = x + out.shift_x;
            const double sy = y + out.shift_y;
            const bool inside = sx >= 0.0 && sx <= w - 1 && sy >= 0.0 && sy <= h - 1;
            out.i3(x, y) = sample_bilinear(i3, std::clamp(sx, 0.0, w - 1.0), std::clamp(sy, 0.0, h - 1.0));
            out.valid(x, y) = inside ? 1 : 0;
        }
    }
    return out;
}

Image laplacian(const Image& img, const LaplacianOptions& opts) {
    if (img.width() < 3 || img.height() < 3) throw InvalidArgument("laplacian: input smaller than 3x3");
    return stencil(presmooth(img, opts), opts.aspect * opts.aspect);
}

DifferentialPair differential_pair(const AlignedPair& p, const LaplacianOptions& opts) {
    if (!p.i1.same_shape(p.i3) || !p.i1.same_shape(p.valid))
        throw InvalidArgument("differential_pair: rasters differ in size");
    const int w = p.i1.width();
    const int h = p.i1.height();
    if (w < 3 || h < 3) throw InvalidArgument("differential_pair: input smaller than 3x3");
    const Image s1 = presmooth(p.i1, opts);
    const Image s3 = presmooth(p.i3, opts);

    DifferentialPair d;
    Image mean(w, h);
    d.drho = Image(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            mean(x, y) = 0.5 * (s1(x, y) + s3(x, y));
            d.drho(x, y) = 0.5 * (s3(x, y) - s1(x, y));
        }
    }
    d.lap = stencil(mean, opts.aspect * opts.aspect);
    d.valid = Mask(w, h);
    for (int y = 1; y < h - 1; ++y) {
        for (int x = 1; x < w - 1; ++x) {
            const bool ok = p.valid(x, y) && p.valid(x - 1, y) && p.valid(x + 1, y) && p.valid(x, y - 1) &&
                            p.valid(x, y + 1);
            d.valid(x, y) = ok ? 1 : 0;
        }
    }
    return d;
}

void validate(const DfddParams& params) {
    if (!std::isfinite(params.a_param) || !(params.a_param > 0.0))
        throw InvalidArgument("dfdd params: a_param must be positive");
    if (!std::isfinite(params.b_param)) throw InvalidArgument("dfdd params: b_param must be finite");
}

DepthGate resolve_gate(const DifferentialPair& d, const GateRule& rule) {
    if (!(rule.percentile >= 0.0 && rule.percentile <= 100.0)) throw InvalidArgument("gate percentile out of range");
    std::vector<double> mags;
    mags.reserve(d.lap.size());
    for (int y = 0; y < d.lap.height(); ++y)
        for (int x = 0; x < d.lap.width(); ++x)
            if (d.valid(x, y)) mags.push_back(std::abs(d.lap(x, y)));
    const double ref = mags.empty() ? 0.0 : quantile(std::move(mags), rule.percentile / 100.0);
    return {rule.lap_fraction * ref, rule.den_fraction * ref, rule.z_max};
}

DepthMap depth_from_defocus(const DifferentialPair& d, const DfddParams& params, const DepthGate& gate) {
    validate(params);
    if (!d.lap.same_shape(d.drho) || !d.lap.same_shape(d.valid))
        throw InvalidArgument("depth_from_defocus: rasters differ in size");
    const int w = d.lap.width();
    const int h = d.lap.height();
    DepthMap m{Image(w, h), Image(w, h), Mask(w, h)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double lap = d.lap(x, y);
            const double den = params.a_param * lap + params.b_param * d.drho(x, y);
            m.confidence(x, y) = std::abs(den);
            if (!d.valid(x, y) || !(std::abs(lap) > gate.eps_lap) || !(std::abs(den) > gate.eps_den)) continue;
            const double z = lap / den;
            if (!(z > 0.0 && z < gate.z_max)) continue;
            m.depth(x, y) = z;
            m.valid(x, y) = 1;
        }
    }
    return m;
}

double weighted_median(std::vector<DepthSample> samples) {
    if (samples.empty()) throw NoValidDepth("no valid depth");
    std::stable_sort(samples.begin(), samples.end(),
                     [](const DepthSample& a, const DepthSample& b) { return a.depth < b.depth; });
    CompensatedSum total;
    for (const auto& s : samples) total.add(s.weight);
    const double half = 0.5 * total.value();
    CompensatedSum acc;
    for (const auto& s : samples) {
        acc.add(s.weight);
        if (acc.value() >= half) return s.depth;
    }
    return samples.back().depth;
}

DepthAggregate aggregate_depth(const DepthMap& dm, double bin_width) {
    if (!(bin_width > 0.0)) throw InvalidArgument("aggregate_depth: bin width must be positive");
    DepthAggregate agg;
    agg.bin_width = bin_width;
    std::map<long long, HistogramBin> bins;
    for (int y = 0; y < dm.depth.height(); ++y) {
        for (int x = 0; x < dm.depth.width(); ++x) {
            if (!dm.valid(x, y)) continue;
            const double z = dm.depth(x, y);
            const double c = dm.confidence(x, y);
            agg.samples.push_back({z, c});
            const auto idx = static_cast<long long>(std::floor(z / bin_width));
            auto& b = bins[idx];
            b.lower = static_cast<double>(idx) * bin_width;
            b.weight += c;
            ++b.count;
        }
    }
    if (agg.samples.empty()) throw NoValidDepth("no valid depth");
    for (const auto& [idx, b] : bins) agg.histogram.push_back(b);
    agg.point_estimate = weighted_median(agg.samples);
    return agg;
}

DepthMetrics depth_metrics(const DepthMap& dm, double truth) {
    if (!(truth > 0.0)) throw InvalidArgument("eval: true depth must be positive");
    CompensatedSum wsum;
    CompensatedSum pred;
    CompensatedSum err;
    CompensatedSum inside;
    DepthMetrics m;
    m.true_depth = truth;
    for (int y = 0; y < dm.depth.height(); ++y) {
        for (int x = 0; x < dm.depth.width(); ++x) {
            if (!dm.valid(x, y)) continue;
            const double z = dm.depth(x, y);
            const double c = dm.confidence(x, y);
            const double e = std::abs(z - truth);
            wsum.add(c);
            pred.add(c * z);
            err.add(c * e);
            if (e <= 0.05 * truth) inside.add(c);
            ++m.n_valid;
        }
    }
    if (m.n_valid == 0 || !(wsum.value() > 0.0)) throw NoValidDepth("no valid depth");
    m.mean_pred = pred.value() / wsum.value();
    m.mae = err.value() / wsum.value();
    m.frac_within_5pct = inside.value() / wsum.value();
    return m;
}

std::vector<DepthMetrics> eval_metrics(std::span<const DepthMap> estimates, std::span<const double> truths) {
    if (estimates.size() != truths.size()) throw InvalidArgument("eval: estimate and truth lists differ in length");
    std::vector<DepthMetrics> out;
    out.reserve(truths.size());
    for (std::size_t i = 0; i < truths.size(); ++i) out.push_back(depth_metrics(estimates[i], truths[i]));
    return out;
}

}  // namespace nearfar
