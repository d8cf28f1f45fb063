#include "nearfar/metasurface.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "nearfar/errors.hpp"

namespace nearfar {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double circular_distance(double a, double b) {
    const double d = std::abs(a - b);
    return std::min(d, kTwoPi - d);
}

std::string format_g9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

PhaseGrid centered_grid(double panel_width, double panel_height, double pitch) {
    if (!(pitch > 0.0)) throw InvalidArgument("phase grid pitch must be positive");
    if (!(panel_width > 0.0) || !(panel_height > 0.0)) throw InvalidArgument("panel size must be positive");
    auto count = [pitch](double extent) {
        int half = static_cast<int>(std::floor(extent / (2.0 * pitch)));
        return 2 * half + 1;
    };
    PhaseGrid g;
    g.pitch = pitch;
    g.width = count(panel_width);
    g.height = count(panel_height);
    g.origin_x = -(g.width / 2) * pitch;
    g.origin_y = -(g.height / 2) * pitch;
    return g;
}

double unwrapped_phase(double power, double theta, double lambda, double x, double y) {
    const double k = kTwoPi / lambda;
    double phi = k * x * std::sin(theta);
    if (power != 0.0) {
        const double f = 1.0 / power;
        phi -= k * (std::sqrt(x * x + y * y + f * f) - f);
    }
    return phi;
}

std::pair<double, double> phase_gradient(double power, double theta, double lambda, double x, double y) {
    const double k = kTwoPi / lambda;
    double gx = k * std::sin(theta);
    double gy = 0.0;
    if (power != 0.0) {
        const double f = 1.0 / power;
        const double rho = std::sqrt(x * x + y * y + f * f);
        gx -= k * x / rho;
        gy -= k * y / rho;
    }
    return {gx, gy};
}

double wrap_phase(double phi) {
    if (!std::isfinite(phi)) throw InvalidArgument("cannot wrap a non-finite phase");
    double r = std::fmod(phi, kTwoPi);
    if (r < 0.0) r += kTwoPi;
    if (r >= kTwoPi) r = 0.0;
    return r;
}

PhaseProfile focusing_deflection_phase(double power, double theta, double lambda, const PhaseGrid& grid) {
    if (!(lambda > 0.0)) throw InvalidArgument("wavelength must be positive");
    if (power < 0.0) throw InvalidArgument("panel power must be non-negative");
    if (grid.width <= 0 || grid.height <= 0 || !(grid.pitch > 0.0)) throw InvalidArgument("invalid phase grid");

    PhaseProfile p;
    p.grid = grid;
    p.values = Image(grid.width, grid.height);
    for (int j = 0; j < grid.height; ++j) {
        const double y = p.y(j);
        for (int i = 0; i < grid.width; ++i) p.values(i, j) = wrap_phase(unwrapped_phase(power, theta, lambda, p.x(i), y));
    }

    // Local phase slope must stay below pi per sample everywhere on the panel;
    // each gradient component is monotone in its coordinate, so the corners
    // and axis crossings bound it.
    const double nyquist = std::numbers::pi / grid.pitch;
    const double xs[] = {p.x(0), p.x(grid.width - 1), 0.0};
    const double ys[] = {p.y(0), p.y(grid.height - 1), 0.0};
    double worst = 0.0;
    for (double x : xs) {
        for (double y : ys) {
            const auto [gx, gy] = phase_gradient(power, theta, lambda, x, y);
            worst = std::max({worst, std::abs(gx), std::abs(gy)});
        }
    }
    if (worst >= nyquist) {
        p.warnings.push_back("phase gradient " + format_g9(worst) + " rad/m exceeds sampling limit " +
                             format_g9(nyquist) + " rad/m; the wrapped profile is aliased");
    }
    return p;
}

PhaseProfile quantize_phase(const PhaseProfile& profile, int levels) {
    if (levels < 2) throw InvalidArgument("quantization needs at least 2 levels");
    const double step = kTwoPi / levels;
    PhaseProfile out = profile;
    for (double& v : out.values.values()) {
        // ceil(t - 1/2) rounds to nearest with ties toward the lower level
        auto k = static_cast<long long>(std::ceil(v / step - 0.5));
        k %= levels;
        if (k < 0) k += levels;
        v = static_cast<double>(k) * step;
    }
    return out;
}

void export_phase_csv(const PhaseProfile& profile, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open phase CSV for writing: " + path.string());
    os << "# pitch_m=" << format_g9(profile.grid.pitch) << " origin_x_m=" << format_g9(profile.grid.origin_x)
       << " origin_y_m=" << format_g9(profile.grid.origin_y) << '\n';
    std::string line;
    char cell[32];
    for (int j = 0; j < profile.values.height(); ++j) {
        line.clear();
        const auto row = profile.values.row(j);
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) line.push_back(',');
            std::snprintf(cell, sizeof cell, "%.8f", row[i]);
            line += cell;
        }
        line.push_back('\n');
        os << line;
    }
    if (!os) throw IoError("failed writing phase CSV: " + path.string());
}

PhaseProfile parse_phase_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open phase CSV: " + path.string());
    std::string header;
    std::getline(is, header);
    PhaseProfile p;
    if (std::sscanf(header.c_str(), "# pitch_m=%lf origin_x_m=%lf origin_y_m=%lf", &p.grid.pitch,
                    &p.grid.origin_x, &p.grid.origin_y) != 3) {
        throw FormatError(path.string() + ":1: malformed phase CSV header");
    }
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad value '" + cell + "'");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": ragged row");
        }
        rows.push_back(std::move(row));
    }
    p.grid.height = static_cast<int>(rows.size());
    p.grid.width = rows.empty() ? 0 : static_cast<int>(rows.front().size());
    p.values = Image(p.grid.width, p.grid.height);
    for (int j = 0; j < p.grid.height; ++j) {
        for (int i = 0; i < p.grid.width; ++i) p.values(i, j) = rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
    }
    return p;
}

UnitCellTable load_unit_cell_table(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open unit-cell table: " + path.string());
    std::string line;
    std::getline(is, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "phase_rad,diameter_m") throw FormatError(path.string() + ":1: expected header phase_rad,diameter_m");
    UnitCellTable table;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        double phase = 0.0;
        double diameter = 0.0;
        if (std::sscanf(line.c_str(), "%lf,%lf", &phase, &diameter) != 2) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected two numeric columns");
        }
        table.emplace_back(wrap_phase(phase), diameter);
    }
    if (table.empty()) throw FormatError(path.string() + ": unit-cell table has no rows");
    return table;
}

Image map_to_diameters(const PhaseProfile& profile, const UnitCellTable& table) {
    if (table.empty()) throw InvalidArgument("unit-cell table is empty");
    Image out(profile.values.width(), profile.values.height());
    auto src = profile.values.values();
    auto dst = out.values();
    for (std::size_t k = 0; k < src.size(); ++k) {
        std::size_t best = 0;
        double best_d = circular_distance(src[k], table[0].first);
        for (std::size_t t = 1; t < table.size(); ++t) {
            const double d = circular_distance(src[k], table[t].first);
            if (d < best_d) {
                best_d = d;
                best = t;
            }
        }
        dst[k] = table[best].second;
    }
    return out;
}

}  // namespace nearfar
