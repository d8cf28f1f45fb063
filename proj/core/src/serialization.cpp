#include "nearfar/serialization.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nearfar/errors.hpp"
#include "nearfar/image_io.hpp"

namespace nearfar {

namespace {

void check_finite(const Json& j, const std::string& where) {
    if (j.is_number_float() && !std::isfinite(j.get<double>()))
        throw FormatError("non-finite number at " + where);
    if (j.is_object())
        for (const auto& [k, v] : j.items()) check_finite(v, where + "." + k);
    if (j.is_array())
        for (std::size_t i = 0; i < j.size(); ++i) check_finite(j[i], where + "[" + std::to_string(i) + "]");
}

Json rect_json(const PixelRect& r) { return Json{{"x", r.x}, {"y", r.y}, {"width", r.width}, {"height", r.height}}; }

PixelRect rect_from_json(const Json& j, const std::string& ctx) {
    JsonReader r(j, ctx);
    r.reject_unknown({"x", "y", "width", "height"});
    auto as_int = [&](const char* k) {
        const long long v = r.integer(k, 0);
        if (!r.has(k)) throw FormatError("missing field " + r.path(k));
        if (v < INT32_MIN || v > INT32_MAX) throw FormatError("out of range: " + r.path(k));
        return static_cast<int>(v);
    };
    return {as_int("x"), as_int("y"), as_int("width"), as_int("height")};
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_cell(const std::string& cell, const std::filesystem::path& path, std::size_t line, const char* col) {
    double v = 0.0;
    const char* b = cell.data();
    const char* e = b + cell.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    while (e > b && (e[-1] == ' ' || e[-1] == '\t' || e[-1] == '\r')) --e;
    const auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e || !std::isfinite(v))
        throw FormatError(path.string() + ":" + std::to_string(line) + ": bad " + col + " '" + cell + "'");
    return v;
}

}  // namespace

std::string format_double(double v) {
    if (!std::isfinite(v)) throw FormatError("cannot format non-finite number");
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw FormatError("number formatting failed");
    return std::string(buf, ptr);
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    try {
        return Json::parse(ss.str());
    } catch (const Json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::string dump_json(const Json& doc) {
    check_finite(doc, "$");
    return doc.dump(2) + "\n";
}

void write_json_file(const std::filesystem::path& path, const Json& doc) {
    const std::string text = dump_json(doc);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os << text;
    if (!os) throw IoError("failed writing: " + path.string());
}

JsonReader::JsonReader(const Json& obj, std::string context) : obj_(obj), context_(std::move(context)) {
    if (!obj_.is_object()) throw FormatError(context_ + ": expected an object");
}

bool JsonReader::has(const char* key) const { return obj_.contains(key); }

const Json& JsonReader::at(const char* key) const {
    auto it = obj_.find(key);
    if (it == obj_.end()) throw FormatError("missing field " + path(key));
    return *it;
}

double JsonReader::number(const char* key, double fallback) const { return has(key) ? number(key) : fallback; }

double JsonReader::number(const char* key) const {
    const Json& v = at(key);
    if (!v.is_number()) throw FormatError("field " + path(key) + " must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw FormatError("field " + path(key) + " must be finite");
    return d;
}

long long JsonReader::integer(const char* key, long long fallback) const {
    if (!has(key)) return fallback;
    const Json& v = at(key);
    if (!v.is_number_integer()) throw FormatError("field " + path(key) + " must be an integer");
    if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX))
        throw FormatError("field " + path(key) + " is out of range");
    return v.get<long long>();
}

std::uint64_t JsonReader::unsigned_integer(const char* key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const Json& v = at(key);
    if (!v.is_number_unsigned()) throw FormatError("field " + path(key) + " must be a non-negative integer");
    return v.get<std::uint64_t>();
}

bool JsonReader::boolean(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    const Json& v = at(key);
    if (!v.is_boolean()) throw FormatError("field " + path(key) + " must be a boolean");
    return v.get<bool>();
}

std::string JsonReader::string(const char* key, const std::string& fallback) const {
    return has(key) ? string(key) : fallback;
}

std::string JsonReader::string(const char* key) const {
    const Json& v = at(key);
    if (!v.is_string()) throw FormatError("field " + path(key) + " must be a string");
    return v.get<std::string>();
}

const Json& JsonReader::child(const char* key) const { return at(key); }

void JsonReader::reject_unknown(std::initializer_list<const char*> known) const {
    for (const auto& [k, v] : obj_.items()) {
        bool ok = false;
        for (const char* n : known) ok = ok || k == n;
        if (!ok) throw FormatError("unknown field " + context_ + "." + k);
    }
}

Json to_json(const OpticalSystemConfig& c) {
    return Json{{"rho_1", c.rho_1},
                {"rho_3", c.rho_3},
                {"rho_L", c.rho_L},
                {"s1", c.s1},
                {"s2", c.s2},
                {"lambda", c.lambda},
                {"theta", c.theta},
                {"panel_width", c.panel_width},
                {"panel_height", c.panel_height},
                {"panel_pitch", c.panel_pitch},
                {"pinhole_diameter", c.pinhole_diameter},
                {"kappa", c.kappa}};
}

OpticalSystemConfig optical_config_from_json(const Json& j, const std::string& context) {
    JsonReader r(j, context);
    r.reject_unknown({"rho_1", "rho_3", "rho_L", "s1", "s2", "lambda", "theta", "panel_width", "panel_height",
                      "panel_pitch", "pinhole_diameter", "kappa", "psf_scale"});
    OpticalSystemConfig c;
    c.rho_1 = r.number("rho_1", c.rho_1);
    c.rho_3 = r.number("rho_3", c.rho_3);
    c.rho_L = r.number("rho_L", c.rho_L);
    c.s1 = r.number("s1", c.s1);
    c.s2 = r.number("s2", c.s2);
    c.lambda = r.number("lambda", c.lambda);
    c.theta = r.number("theta", c.theta);
    c.panel_width = r.number("panel_width", c.panel_width);
    c.panel_height = r.number("panel_height", c.panel_height);
    c.panel_pitch = r.number("panel_pitch", c.panel_pitch);
    c.pinhole_diameter = r.number("pinhole_diameter", c.pinhole_diameter);
    c.kappa = r.number("psf_scale", c.kappa);
    c.kappa = r.number("kappa", c.kappa);
    return c;
}

Json to_json(const SensorSpec& s) {
    return Json{{"width", s.width},
                {"height", s.height},
                {"pixel_pitch", s.pixel_pitch},
                {"full_well", s.full_well},
                {"read_noise_sigma", s.read_noise_sigma},
                {"bit_depth", s.bit_depth},
                {"black_level", s.black_level},
                {"window_width", s.window_width},
                {"window_height", s.window_height}};
}

SensorSpec sensor_from_json(const Json& j, const std::string& context) {
    JsonReader r(j, context);
    r.reject_unknown({"width", "height", "pixel_pitch", "full_well", "read_noise_sigma", "bit_depth", "black_level", "window_width",
                      "window_height"});
    SensorSpec s;
    auto int_field = [&](const char* k, int fallback) {
        const long long v = r.integer(k, fallback);
        if (v <= 0 || v > 1 << 20) throw FormatError("field " + r.path(k) + " out of range");
        return static_cast<int>(v);
    };
    s.width = int_field("width", s.width);
    s.height = int_field("height", s.height);
    s.pixel_pitch = r.number("pixel_pitch", s.pixel_pitch);
    s.full_well = r.number("full_well", s.full_well);
    s.read_noise_sigma = r.number("read_noise_sigma", s.read_noise_sigma);
    s.bit_depth = int_field("bit_depth", s.bit_depth);
    s.black_level = r.number("black_level", s.black_level);
    s.window_width = int_field("window_width", s.window_width);
    s.window_height = int_field("window_height", s.window_height);
    return s;
}

Json to_json(const DfddParams& p) { return Json{{"a_param", p.a_param}, {"b_param", p.b_param}}; }

Json to_json(const CalibrationResult& r) {
    return Json{{"a_param", r.params.a_param},
                {"b_param", r.params.b_param},
                {"rms_residual", r.rms_residual},
                {"n_used", r.n_used},
                {"condition", r.condition}};
}

CalibrationResult calibration_result_from_json(const Json& j, const std::string& context) {
    JsonReader r(j, context);
    r.reject_unknown({"a_param", "b_param", "rms_residual", "n_used", "condition"});
    CalibrationResult res;
    res.params.a_param = r.number("a_param");
    res.params.b_param = r.number("b_param");
    res.rms_residual = r.number("rms_residual", 0.0);
    res.n_used = static_cast<std::size_t>(r.unsigned_integer("n_used", 0));
    res.condition = r.number("condition", 0.0);
    try {
        validate(res.params);
    } catch (const InvalidArgument& e) {
        throw FormatError(context + ": " + e.what());
    }
    return res;
}

Json to_json(const CaptureLayout& l) {
    Json w = Json::array();
    for (const auto& r : l.windows) w.push_back(rect_json(r));
    return Json{{"windows", w},
                {"seed", l.seed},
                {"exposure_gain", l.exposure_gain},
                {"full_well", l.full_well},
                {"bit_depth", l.bit_depth},
                {"black_level", l.black_level}};
}

CaptureLayout capture_layout_from_json(const Json& j, const std::string& context) {
    JsonReader r(j, context);
    r.reject_unknown({"windows", "seed", "exposure_gain", "full_well", "bit_depth", "black_level"});
    CaptureLayout l;
    const Json& w = r.child("windows");
    if (!w.is_array() || w.size() != 3) throw FormatError("field " + r.path("windows") + " must hold three windows");
    for (std::size_t i = 0; i < 3; ++i)
        l.windows[i] = rect_from_json(w[i], context + ".windows[" + std::to_string(i) + "]");
    l.seed = r.unsigned_integer("seed", 0);
    l.exposure_gain = r.number("exposure_gain");
    l.full_well = r.number("full_well", l.full_well);
    l.bit_depth = static_cast<int>(r.integer("bit_depth", l.bit_depth));
    l.black_level = r.number("black_level", l.black_level);
    return l;
}

Json to_json(const LayoutCandidate& c) {
    Json z = Json::array();
    Json res = Json::array();
    for (std::size_t i = 0; i < 3; ++i) {
        z.push_back(std::isfinite(c.solution.z_f[i]) ? Json(c.solution.z_f[i]) : Json(nullptr));
        res.push_back(std::isfinite(c.solution.residuals[i]) ? Json(c.solution.residuals[i]) : Json(nullptr));
    }
    return Json{{"assignment", c.assignment},
                {"feasible", c.feasible},
                {"max_residual", std::isfinite(c.max_residual) ? Json(c.max_residual) : Json(nullptr)},
                {"track_length", c.solution.track_length},
                {"focal_distances", z},
                {"residuals", res},
                {"iterations", c.iterations},
                {"seed_index", c.seed_index},
                {"optical", to_json(c.config)}};
}

Json to_json(const LayoutResult& r) {
    Json cands = Json::array();
    for (const auto& c : r.candidates) cands.push_back(to_json(c));
    return Json{{"selected", r.selected}, {"candidates", cands}};
}

std::filesystem::path layout_sidecar_path(const std::filesystem::path& pgm) {
    auto p = pgm;
    p.replace_extension(".layout.json");
    return p;
}

void write_capture(const RawCapture& cap, const std::filesystem::path& pgm) {
    write_pgm16(cap.pixels(), pgm);
    write_json_file(layout_sidecar_path(pgm), to_json(cap.layout()));
}

RawCapture read_capture(const std::filesystem::path& pgm) {
    auto pixels = read_pgm(pgm);
    const auto side = layout_sidecar_path(pgm);
    if (!std::filesystem::exists(side)) throw IoError("missing layout sidecar: " + side.string());
    auto layout = capture_layout_from_json(read_json_file(side));
    try {
        return RawCapture(std::move(pixels), layout);
    } catch (const InvalidArgument& e) {
        throw FormatError(side.string() + ": " + e.what());
    }
}

void write_calibration_csv(std::span<const CalibrationSample> samples, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os << "lap,drho,z_true_m,weight\n";
    for (const auto& s : samples)
        os << format_double(s.lap) << ',' << format_double(s.drho) << ',' << format_double(s.z_true) << ','
           << format_double(s.weight) << '\n';
    if (!os) throw IoError("failed writing: " + path.string());
}

std::vector<CalibrationSample> read_calibration_csv(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw FormatError(path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "lap,drho,z_true_m,weight") throw FormatError(path.string() + ":1: unexpected header '" + line + "'");
    std::vector<CalibrationSample> out;
    std::size_t n = 1;
    while (std::getline(is, line)) {
        ++n;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv(line);
        if (cells.size() != 4) throw FormatError(path.string() + ":" + std::to_string(n) + ": expected 4 columns");
        out.push_back({parse_cell(cells[0], path, n, "lap"), parse_cell(cells[1], path, n, "drho"),
                       parse_cell(cells[2], path, n, "z_true_m"), parse_cell(cells[3], path, n, "weight")});
    }
    return out;
}

}  // namespace nearfar
