#include "harness/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace nearfar::harness {

namespace {

constexpr double kWidth = 480.0;
constexpr double kHeight = 320.0;
constexpr double kLeft = 60.0;
constexpr double kRight = 20.0;
constexpr double kTop = 30.0;
constexpr double kBottom = 50.0;

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string num(double v) { return fmt("%.2f", v); }

struct Axes {
    double x0, x1, y0, y1;

    double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
    double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

std::string header(const std::string& title) {
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
                    num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + num(kWidth / 2) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" + title + "</text>\n";
    return s;
}

std::string line(double x1, double y1, double x2, double y2, const char* style) {
    return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) + "\" " +
           style + "/>\n";
}

std::string text(double x, double y, const std::string& s, const char* anchor) {
    return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor + "\" font-size=\"11\">" + s +
           "</text>\n";
}

std::string frame(const Axes& a, const std::string& xlabel, const std::string& ylabel, int ticks) {
    std::string s;
    const char* axis = "stroke=\"black\" stroke-width=\"1\"";
    s += line(kLeft, kHeight - kBottom, kWidth - kRight, kHeight - kBottom, axis);
    s += line(kLeft, kTop, kLeft, kHeight - kBottom, axis);
    for (int i = 0; i <= ticks; ++i) {
        const double xv = a.x0 + (a.x1 - a.x0) * i / ticks;
        const double yv = a.y0 + (a.y1 - a.y0) * i / ticks;
        s += line(a.px(xv), kHeight - kBottom, a.px(xv), kHeight - kBottom + 4, axis);
        s += text(a.px(xv), kHeight - kBottom + 16, fmt("%.2f", xv), "middle");
        s += line(kLeft - 4, a.py(yv), kLeft, a.py(yv), axis);
        s += text(kLeft - 6, a.py(yv) + 4, fmt("%.2f", yv), "end");
    }
    s += text((kLeft + kWidth - kRight) / 2, kHeight - 12, xlabel, "middle");
    s += "<text x=\"14\" y=\"" + num((kTop + kHeight - kBottom) / 2) +
         "\" text-anchor=\"middle\" font-size=\"11\" transform=\"rotate(-90 14 " +
         num((kTop + kHeight - kBottom) / 2) + ")\">" + ylabel + "</text>\n";
    return s;
}

}  // namespace

std::string histogram_svg(const DepthAggregate& agg, double true_depth) {
    const double t_mm = true_depth * 1e3;
    double lo = t_mm * 0.9;
    double hi = t_mm * 1.1;
    double peak = 0.0;
    for (const auto& b : agg.histogram) {
        lo = std::min(lo, b.lower * 1e3);
        hi = std::max(hi, (b.lower + agg.bin_width) * 1e3);
        peak = std::max(peak, b.weight);
    }
    const Axes a{lo, hi, 0.0, 1.0};
    std::string s = header("Depth histogram, true depth " + fmt("%.2f", t_mm) + " mm");
    s += frame(a, "estimated depth (mm)", "relative frequency", 4);
    for (const auto& b : agg.histogram) {
        const double x0 = a.px(b.lower * 1e3);
        const double x1 = a.px((b.lower + agg.bin_width) * 1e3);
        const double h = peak > 0.0 ? b.weight / peak : 0.0;
        s += "<rect x=\"" + num(x0) + "\" y=\"" + num(a.py(h)) + "\" width=\"" + num(std::max(0.5, x1 - x0)) +
             "\" height=\"" + num(a.py(0.0) - a.py(h)) + "\" fill=\"steelblue\"/>\n";
    }
    s += line(a.px(t_mm), kTop, a.px(t_mm), kHeight - kBottom, "stroke=\"crimson\" stroke-dasharray=\"4 3\"");
    s += "</svg>\n";
    return s;
}

std::string band_plot_svg(std::span<const DepthMetrics> rows) {
    double lo = 1e300;
    double hi = -1e300;
    for (const auto& r : rows) {
        lo = std::min({lo, r.true_depth * 0.95e3, (r.mean_pred - r.mae) * 1e3});
        hi = std::max({hi, r.true_depth * 1.05e3, (r.mean_pred + r.mae) * 1e3});
    }
    if (rows.empty()) {
        lo = 0.0;
        hi = 1.0;
    }
    const Axes a{lo, hi, lo, hi};
    std::string s = header("Estimated depth, mean and MAE band");
    s += frame(a, "true depth (mm)", "estimated depth (mm)", 4);
    s += line(a.px(lo), a.py(lo), a.px(hi), a.py(hi), "stroke=\"gray\" stroke-width=\"1\"");
    s += line(a.px(lo), a.py(lo * 1.05), a.px(hi), a.py(hi * 1.05), "stroke=\"gray\" stroke-dasharray=\"4 3\"");
    s += line(a.px(lo), a.py(lo * 0.95), a.px(hi), a.py(hi * 0.95), "stroke=\"gray\" stroke-dasharray=\"4 3\"");
    if (!rows.empty()) {
        std::string band;
        for (const auto& r : rows) band += num(a.px(r.true_depth * 1e3)) + "," + num(a.py((r.mean_pred + r.mae) * 1e3)) + " ";
        for (auto it = rows.rbegin(); it != rows.rend(); ++it)
            band += num(a.px(it->true_depth * 1e3)) + "," + num(a.py((it->mean_pred - it->mae) * 1e3)) + " ";
        band.pop_back();
        s += "<polygon points=\"" + band + "\" fill=\"steelblue\" fill-opacity=\"0.3\" stroke=\"none\"/>\n";
        std::string mean;
        for (const auto& r : rows) mean += num(a.px(r.true_depth * 1e3)) + "," + num(a.py(r.mean_pred * 1e3)) + " ";
        mean.pop_back();
        s += "<polyline points=\"" + mean + "\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>\n";
    }
    s += "</svg>\n";
    return s;
}

}  // namespace nearfar::harness
