#include "nearfar/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nearfar/errors.hpp"
#include "nearfar/filters.hpp"

namespace nearfar {

namespace {

constexpr double kMaxCondition = 1e13;

struct Normal {
    double aa = 0.0;
    double ab = 0.0;
    double bb = 0.0;
    double ya = 0.0;
    double yb = 0.0;
};

void check_samples(std::span<const CalibrationSample> samples) {
    if (samples.size() < 2) throw InvalidArgument("calibration needs at least two samples");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (!std::isfinite(s.lap) || !std::isfinite(s.drho) || !std::isfinite(s.weight) ||
            !(std::isfinite(s.z_true) && s.z_true > 0.0) || s.weight < 0.0) {
            throw InvalidArgument("calibration sample " + std::to_string(i) + " is invalid");
        }
    }
}

// Normal equations with per-sample multiplier `scale` on the weight;
// `p` non-null accumulates the gradient at p instead of the right-hand side.
Normal accumulate(std::span<const CalibrationSample> samples, std::span<const double> scale, const DfddParams* p) {
    CompensatedSum aa, ab, bb, ya, yb;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        const double w = s.weight * (scale.empty() ? 1.0 : scale[i]);
        if (w == 0.0) continue;
        const double xa = s.z_true * s.lap;
        const double xb = s.z_true * s.drho;
        double y = s.lap;
        if (p) y = -linear_residual(s, *p);
        aa.add(w * xa * xa);
        ab.add(w * xa * xb);
        bb.add(w * xb * xb);
        ya.add(w * xa * y);
        yb.add(w * xb * y);
    }
    return {aa.value(), ab.value(), bb.value(), ya.value(), yb.value()};
}

struct Solve {
    double a = 0.0;
    double b = 0.0;
    double condition = 0.0;
};

// Column-equilibrated 2x2 solve with partial pivoting.
Solve solve_normal(const Normal& n) {
    if (!(n.aa > 0.0)) throw Unidentifiable("A unidentifiable: lap column is zero");
    if (!(n.bb > 0.0)) throw Unidentifiable("B unidentifiable: drho column is zero");
    const double da = 1.0 / std::sqrt(n.aa);
    const double db = 1.0 / std::sqrt(n.bb);
    const double off = n.ab * da * db;  // equilibrated matrix [[1, off], [off, 1]]
    const double lo = 1.0 - std::abs(off);
    const double hi = 1.0 + std::abs(off);
    const double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(cond < kMaxCondition)) throw Unidentifiable("B unidentifiable: design matrix is rank deficient");

    double m[2][3] = {{1.0, off, n.ya * da}, {off, 1.0, n.yb * db}};
    if (std::abs(m[1][0]) > std::abs(m[0][0])) std::swap(m[0], m[1]);
    const double f = m[1][0] / m[0][0];
    for (int j = 0; j < 3; ++j) m[1][j] -= f * m[0][j];
    const double yb = m[1][2] / m[1][1];
    const double ya = (m[0][2] - m[0][1] * yb) / m[0][0];
    return {ya * da, yb * db, cond};
}

CalibrationResult weighted_fit(std::span<const CalibrationSample> samples, std::span<const double> scale) {
    const Normal n = accumulate(samples, scale, nullptr);
    Solve s = solve_normal(n);
    DfddParams p{s.a, s.b};
    // One step of iterative refinement against the exact gradient.
    const Normal g = accumulate(samples, scale, &p);
    const Solve d = solve_normal({n.aa, n.ab, n.bb, g.ya, g.yb});
    p.a_param += d.a;
    p.b_param += d.b;

    CalibrationResult res;
    res.params = p;
    res.condition = s.condition;
    CompensatedSum wsum, err;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& smp = samples[i];
        const double w = smp.weight * (scale.empty() ? 1.0 : scale[i]);
        if (smp.weight > 0.0) ++res.n_used;
        const double den = p.a_param * smp.lap + p.b_param * smp.drho;
        if (w == 0.0 || den == 0.0) continue;
        const double e = smp.lap / den - smp.z_true;
        wsum.add(w);
        err.add(w * e * e);
    }
    res.rms_residual = wsum.value() > 0.0 ? std::sqrt(err.value() / wsum.value()) : 0.0;
    return res;
}

double total_weight(std::span<const CalibrationSample> samples) {
    CompensatedSum s;
    for (const auto& smp : samples) s.add(smp.weight);
    return s.value();
}

}  // namespace

double linear_residual(const CalibrationSample& s, const DfddParams& p) {
    return s.z_true * (p.a_param * s.lap + p.b_param * s.drho) - s.lap;
}

CalibrationResult fit_linear(std::span<const CalibrationSample> samples) {
    check_samples(samples);
    if (!(total_weight(samples) > 0.0)) throw InvalidArgument("calibration: all weights are zero");
    auto res = weighted_fit(samples, {});
    if (res.n_used < 2) throw Unidentifiable("B unidentifiable: fewer than two weighted samples");
    return res;
}

CalibrationResult fit_robust(std::span<const CalibrationSample> samples, const RobustOptions& opts) {
    if (opts.max_iter < 1) throw InvalidArgument("fit_robust: max_iter must be positive");
    CalibrationResult res = fit_linear(samples);
    const double delta = opts.huber_delta > 0.0 ? opts.huber_delta : 1.345;
    std::vector<double> scale(samples.size(), 1.0);
    std::vector<double> e(samples.size(), 0.0);
    std::vector<double> mags;
    for (int it = 1; it <= opts.max_iter; ++it) {
        mags.clear();
        for (std::size_t i = 0; i < samples.size(); ++i) {
            e[i] = std::sqrt(samples[i].weight) * linear_residual(samples[i], res.params);
            if (samples[i].weight > 0.0) mags.push_back(std::abs(e[i]));
        }
        const double sigma = 1.4826 * quantile(mags, 0.5);
        const double t = std::isinf(delta) ? delta : delta * sigma;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const double a = std::abs(e[i]);
            scale[i] = a <= t ? 1.0 : t / a;
        }
        const auto next = weighted_fit(samples, scale);
        const double da = std::abs(next.params.a_param - res.params.a_param) / std::abs(next.params.a_param);
        const double db = std::abs(next.params.b_param - res.params.b_param) /
                          std::max(std::abs(next.params.b_param), std::numeric_limits<double>::min());
        const std::size_t used = res.n_used;
        res = next;
        res.n_used = used;
        res.iterations = it;
        if (std::max(da, db) < opts.tolerance) break;
    }
    return res;
}

ResidualReport residual_report(std::span<const CalibrationSample> samples, const DfddParams& params) {
    ResidualReport rep;
    rep.rows.reserve(samples.size());
    std::vector<double> errs;
    for (const auto& s : samples) {
        ResidualRow row;
        const double den = params.a_param * s.lap + params.b_param * s.drho;
        row.linear = linear_residual(s, params);
        if (den != 0.0) {
            row.z_pred = s.lap / den;
            row.depth_error = row.z_pred - s.z_true;
            errs.push_back(row.depth_error);
        } else {
            row.z_pred = std::numeric_limits<double>::quiet_NaN();
            row.depth_error = std::numeric_limits<double>::quiet_NaN();
        }
        rep.rows.push_back(row);
    }
    if (!errs.empty()) {
        std::sort(errs.begin(), errs.end());
        for (std::size_t k = 0; k < ResidualReport::levels.size(); ++k)
            rep.depth_error_quantiles[k] = quantile(errs, ResidualReport::levels[k]);
    } else {
        rep.depth_error_quantiles.fill(std::numeric_limits<double>::quiet_NaN());
    }
    return rep;
}

}  // namespace nearfar
