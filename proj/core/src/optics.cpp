#include "nearfar/optics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nearfar/errors.hpp"
#include "nearfar/filters.hpp"

namespace nearfar {

void validate(const OpticalSystemConfig& cfg, double track_budget) {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw InvalidArgument(std::string("invalid optical config: ") + what);
    };
    const double fields[] = {cfg.rho_1, cfg.rho_3, cfg.rho_L, cfg.s1, cfg.s2, cfg.lambda,
                             cfg.theta, cfg.panel_width, cfg.panel_height, cfg.panel_pitch,
                             cfg.pinhole_diameter, cfg.kappa};
    for (double f : fields) require(std::isfinite(f), "all fields must be finite");
    require(cfg.s1 > 0.0, "s1 must be positive");
    require(cfg.s2 > 0.0, "s2 must be positive");
    require(cfg.s1 + cfg.s2 <= track_budget * (1.0 + 1e-12), "s1 + s2 exceeds the track budget");
    require(cfg.lambda > 0.0, "lambda must be positive");
    require(cfg.panel_width > 0.0 && cfg.panel_height > 0.0, "panel dimensions must be positive");
    require(cfg.panel_pitch >= 0.0, "panel_pitch must be non-negative");
    require(cfg.pinhole_diameter > 0.0, "pinhole_diameter must be positive");
    require(cfg.kappa > 0.0, "kappa must be positive");
}

std::array<ChannelSpec, 3> channels(const OpticalSystemConfig& cfg) {
    return {ChannelSpec{1, cfg.rho_1, +cfg.theta, -cfg.panel_pitch},
            ChannelSpec{2, 0.0, 0.0, 0.0},
            ChannelSpec{3, cfg.rho_3, -cfg.theta, +cfg.panel_pitch}};
}

ChannelSpec channel(const OpticalSystemConfig& cfg, int index) {
    if (index < 1 || index > 3) throw InvalidArgument("channel index must be 1, 2 or 3");
    return channels(cfg)[static_cast<std::size_t>(index - 1)];
}

RayTransferMatrix propagation_matrix(double distance) {
    if (!(distance >= 0.0)) throw InvalidArgument("propagation distance must be non-negative");
    RayTransferMatrix m;
    m.b = distance;
    return m;
}

RayTransferMatrix thin_element_matrix(double power, double deflection) {
    RayTransferMatrix m;
    m.c = -power;
    m.angle_offset = deflection;
    return m;
}

RayTransferMatrix channel_system_matrix(const OpticalSystemConfig& cfg, const ChannelSpec& ch) {
    const auto element = thin_element_matrix(ch.power, ch.deflection + ch.power * ch.panel_center_x);
    return propagation_matrix(cfg.s2) * thin_element_matrix(cfg.rho_L, 0.0) * propagation_matrix(cfg.s1) *
           element;
}

double focal_object_distance(const RayTransferMatrix& s, double eps_afocal) {
    if (std::abs(s.a) <= eps_afocal) throw NoFiniteConjugate("no finite conjugate: afocal system");
    const double z = -s.b / s.a;
    if (!(z > 0.0) || !std::isfinite(z)) {
        throw NoFiniteConjugate("no finite conjugate: imaging condition has no positive object distance");
    }
    return z;
}

double aperture_x(const OpticalSystemConfig& cfg) { return std::min(cfg.panel_width, cfg.pinhole_diameter); }
double aperture_y(const OpticalSystemConfig& cfg) { return std::min(cfg.panel_height, cfg.pinhole_diameter); }

BlurRadius blur_radius(const OpticalSystemConfig& cfg, const ChannelSpec& ch, double z) {
    if (!(z > 0.0)) throw InvalidArgument("object distance must be positive");
    const auto s = channel_system_matrix(cfg, ch);
    const double defocus = std::abs(s.a * z + s.b) / z;
    return {defocus * aperture_x(cfg) / 2.0, defocus * aperture_y(cfg) / 2.0};
}

int psf_support(BlurRadius r, double pixel_pitch, double kappa) {
    if (!(pixel_pitch > 0.0)) throw InvalidArgument("pixel pitch must be positive");
    const double sigma = kappa * std::max(r.x, r.y) / pixel_pitch;
    return 2 * gaussian_radius(sigma) + 1;
}

Image gaussian_psf(BlurRadius r, double pixel_pitch, int support, double kappa) {
    if (support <= 0 || support % 2 == 0) throw InvalidArgument("PSF support must be odd and positive");
    if (!(pixel_pitch > 0.0)) throw InvalidArgument("pixel pitch must be positive");
    const int half = support / 2;
    const auto kx = gaussian_kernel_1d(kappa * r.x / pixel_pitch, half);
    const auto ky = gaussian_kernel_1d(kappa * r.y / pixel_pitch, half);
    Image k(support, support);
    for (int y = 0; y < support; ++y) {
        for (int x = 0; x < support; ++x) k(x, y) = ky[static_cast<std::size_t>(y)] * kx[static_cast<std::size_t>(x)];
    }
    return k;
}

FocalSolution focal_solution(const OpticalSystemConfig& cfg, const std::array<double, 3>& targets) {
    FocalSolution sol;
    const auto chs = channels(cfg);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto s = channel_system_matrix(cfg, chs[i]);
        sol.residuals[i] = s.a * targets[i] + s.b;
        try {
            sol.z_f[i] = focal_object_distance(s);
        } catch (const NoFiniteConjugate&) {
            sol.z_f[i] = std::numeric_limits<double>::quiet_NaN();
        }
    }
    sol.track_length = cfg.s1 + cfg.s2;
    return sol;
}

namespace {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

// Unknowns are scaled to order one: rho_L / 100, s1 / 10 mm, s2 / 10 mm.
constexpr Vec3 kScale{100.0, 0.01, 0.01};
constexpr double kMinSpacing = 1e-7;

bool solve3(Mat3 a, Vec3 b, Vec3& x) {
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        }
        if (std::abs(a[piv][col]) < 1e-300) return false;
        std::swap(a[piv], a[col]);
        std::swap(b[piv], b[col]);
        for (int r = col + 1; r < 3; ++r) {
            const double f = a[r][col] / a[col][col];
            for (int k = col; k < 3; ++k) a[r][k] -= f * a[col][k];
            b[r] -= f * b[col];
        }
    }
    for (int r = 2; r >= 0; --r) {
        double acc = b[r];
        for (int k = r + 1; k < 3; ++k) acc -= a[r][k] * x[k];
        x[r] = acc / a[r][r];
    }
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

class LayoutProblem {
public:
    LayoutProblem(const LayoutRequest& req, std::array<int, 3> assignment)
        : req_(req), assignment_(assignment) {
        for (std::size_t i = 0; i < 3; ++i) z_[i] = req.targets[static_cast<std::size_t>(assignment[i])];
        s1_pref_ = req.s1_preferred > 0.0 ? req.s1_preferred
                                          : req.base.panel_pitch / std::tan(req.base.theta);
    }

    OpticalSystemConfig config(const Vec3& q) const {
        OpticalSystemConfig cfg = req_.base;
        cfg.rho_L = q[0] * kScale[0];
        cfg.s1 = q[1] * kScale[1];
        cfg.s2 = q[2] * kScale[2];
        if (req_.mode == SidePowerMode::fixed) {
            cfg.rho_1 = req_.rho_1;
            cfg.rho_3 = req_.rho_3;
        } else {
            // Side powers that put channels 1 and 3 in focus at their targets
            // given the shared lens and spacings.
            const auto m = propagation_matrix(cfg.s2) * thin_element_matrix(cfg.rho_L, 0.0) *
                           propagation_matrix(cfg.s1);
            cfg.rho_1 = m.a / m.b + 1.0 / z_[0];
            cfg.rho_3 = m.a / m.b + 1.0 / z_[2];
        }
        return cfg;
    }

    Vec3 imaging_residuals(const OpticalSystemConfig& cfg) const {
        return focal_solution(cfg, z_).residuals;
    }

    Vec3 residuals(const Vec3& q) const {
        const auto cfg = config(q);
        if (req_.mode == SidePowerMode::fixed) return imaging_residuals(cfg);
        const auto central = channel_system_matrix(cfg, channel(cfg, 2));
        return {central.a * z_[1] + central.b, cfg.s1 - s1_pref_, cfg.s1 + cfg.s2 - req_.track_budget};
    }

    Vec3 project(Vec3 q) const {
        q[1] = std::max(q[1], kMinSpacing / kScale[1]);
        q[2] = std::max(q[2], kMinSpacing / kScale[2]);
        const double track = q[1] * kScale[1] + q[2] * kScale[2];
        if (track > req_.track_budget) {
            const double f = req_.track_budget / track;
            q[1] *= f;
            q[2] *= f;
        }
        return q;
    }

    const Vec3& targets() const { return z_; }

private:
    const LayoutRequest& req_;
    std::array<int, 3> assignment_;
    Vec3 z_{};
    double s1_pref_ = 0.0;
};

double sum_sq(const Vec3& r) { return r[0] * r[0] + r[1] * r[1] + r[2] * r[2]; }
double max_abs(const Vec3& r) {
    return std::max({std::abs(r[0]), std::abs(r[1]), std::abs(r[2])});
}

struct SeedRun {
    Vec3 q{};
    int iterations = 0;
};

// Levenberg-Marquardt with multiplicative damping (x2 on rejection, /3 on acceptance).
SeedRun damped_least_squares(const LayoutProblem& problem, Vec3 q, double tol, int max_iter) {
    q = problem.project(q);
    Vec3 r = problem.residuals(q);
    double cost = sum_sq(r);
    double lambda = 1e-3;
    int it = 0;
    for (; it < max_iter; ++it) {
        if (max_abs(r) < tol) break;
        Mat3 jac{};
        for (int k = 0; k < 3; ++k) {
            const double h = 1e-6 * std::max(1.0, std::abs(q[static_cast<std::size_t>(k)]));
            Vec3 qp = q;
            Vec3 qm = q;
            qp[static_cast<std::size_t>(k)] += h;
            qm[static_cast<std::size_t>(k)] -= h;
            const Vec3 rp = problem.residuals(qp);
            const Vec3 rm = problem.residuals(qm);
            for (int i = 0; i < 3; ++i) jac[i][k] = (rp[i] - rm[i]) / (2.0 * h);
        }
        Mat3 jtj{};
        Vec3 jtr{};
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                for (int i = 0; i < 3; ++i) jtj[a][b] += jac[i][a] * jac[i][b];
            }
            for (int i = 0; i < 3; ++i) jtr[a] += jac[i][a] * r[i];
        }
        bool accepted = false;
        for (int attempt = 0; attempt < 60 && !accepted; ++attempt) {
            Mat3 damped = jtj;
            for (int a = 0; a < 3; ++a) damped[a][a] += lambda * std::max(jtj[a][a], 1e-12);
            Vec3 step{};
            Vec3 rhs{-jtr[0], -jtr[1], -jtr[2]};
            if (solve3(damped, rhs, step)) {
                const Vec3 cand = problem.project({q[0] + step[0], q[1] + step[1], q[2] + step[2]});
                const Vec3 rc = problem.residuals(cand);
                const double cc = sum_sq(rc);
                if (std::isfinite(cc) && cc < cost) {
                    q = cand;
                    r = rc;
                    cost = cc;
                    lambda = std::max(lambda / 3.0, 1e-15);
                    accepted = true;
                    break;
                }
            }
            lambda *= 2.0;
        }
        if (!accepted) break;
    }
    return {q, it};
}

LayoutCandidate solve_assignment(const LayoutRequest& req, std::array<int, 3> assignment) {
    const LayoutProblem problem(req, assignment);
    LayoutCandidate best;
    best.assignment = assignment;
    best.max_residual = std::numeric_limits<double>::infinity();

    constexpr int kGrid = 4;
    int seed_index = 0;
    for (int i = 0; i < kGrid; ++i) {
        for (int j = 0; j < kGrid; ++j) {
            for (int k = 0; k < kGrid; ++k, ++seed_index) {
                const double rho_l = 50.0 + (400.0 - 50.0) * i / (kGrid - 1);
                const double s1 = 0.5e-3 + (10e-3 - 0.5e-3) * j / (kGrid - 1);
                const double s2 = 1e-3 + (14e-3 - 1e-3) * k / (kGrid - 1);
                const Vec3 seed{rho_l / kScale[0], s1 / kScale[1], s2 / kScale[2]};
                const auto run = damped_least_squares(problem, seed, req.residual_tolerance, req.max_iterations);

                LayoutCandidate cand;
                cand.assignment = assignment;
                cand.config = problem.config(run.q);
                cand.solution = focal_solution(cand.config, problem.targets());
                cand.seed_index = seed_index;
                cand.iterations = run.iterations;
                const auto& res = cand.solution.residuals;
                cand.max_residual = max_abs(res);
                if (req.mode == SidePowerMode::derived) {
                    cand.max_residual = std::max(cand.max_residual, max_abs(problem.residuals(run.q)));
                }
                bool ok = std::isfinite(cand.max_residual) && cand.max_residual < req.residual_tolerance;
                ok = ok && cand.config.s1 > 0.0 && cand.config.s2 > 0.0 &&
                     cand.config.s1 + cand.config.s2 <= req.track_budget * (1.0 + 1e-12);
                for (double z : cand.solution.z_f) ok = ok && std::isfinite(z) && z > 0.0;
                cand.feasible = ok;

                // Total order: feasibility, residual, seed index.
                const bool better = (cand.feasible && !best.feasible) ||
                                    (cand.feasible == best.feasible && cand.max_residual < best.max_residual);
                if (better) best = cand;
            }
        }
    }
    return best;
}

}  // namespace

LayoutResult solve_layout_candidates(const LayoutRequest& req) {
    for (double z : req.targets) {
        if (!(z > 0.0) || !std::isfinite(z)) throw InvalidArgument("focal targets must be positive");
    }
    if (!(req.track_budget >= 0.0)) throw InvalidArgument("track budget must be non-negative");

    LayoutResult result;
    result.candidates.push_back(solve_assignment(req, {0, 1, 2}));
    result.candidates.push_back(solve_assignment(req, {2, 1, 0}));
    result.selected = 0;
    const auto& a = result.candidates[0];
    const auto& b = result.candidates[1];
    if (b.feasible && !a.feasible) {
        result.selected = 1;
    } else if (b.feasible == a.feasible && b.max_residual < a.max_residual) {
        // Derived-mode candidates are mirror images; keep the requested channel order.
        if (!(a.feasible && req.mode == SidePowerMode::derived)) result.selected = 1;
    }
    return result;
}

LayoutResult solve_layout(const LayoutRequest& req) {
    auto result = solve_layout_candidates(req);
    if (!result.best().feasible) {
        throw LayoutInfeasible("layout infeasible: best max imaging residual " +
                               std::to_string(result.best().max_residual) + " m");
    }
    return result;
}

}  // namespace nearfar
