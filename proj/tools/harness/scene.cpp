#include "harness/scene.hpp"

#include <cmath>

#include <nearfar/errors.hpp>
#include <nearfar/image_io.hpp>

namespace nearfar::harness {

namespace {

Image load_texture_file(const std::filesystem::path& p, const std::string& ctx) {
    const auto ext = p.extension().string();
    if (ext == ".pfm") return read_pfm(p);
    if (ext == ".pgm") {
        const auto raw = read_pgm(p);
        Image img(raw.width(), raw.height());
        for (std::size_t k = 0; k < raw.size(); ++k) img.values()[k] = raw.values()[k];
        return img;
    }
    throw FormatError("field " + ctx + " must name a .pgm or .pfm file");
}

PlanarTarget target_from_json(const Json& j, const std::filesystem::path& base, const std::string& ctx) {
    JsonReader r(j, ctx);
    r.reject_unknown({"texture", "size", "depth", "pitch", "center", "alpha", "gain"});
    PlanarTarget t;
    const Json& tex = r.child("texture");
    if (tex.is_string()) {
        const long long size = r.integer("size", 64);
        if (size <= 0 || size > 8192) throw FormatError("field " + r.path("size") + " out of range");
        try {
            t.texture = procedural_texture(tex.get<std::string>(), static_cast<int>(size));
        } catch (const InvalidArgument& e) {
            throw FormatError("field " + r.path("texture") + ": " + e.what());
        }
    } else if (tex.is_object()) {
        JsonReader f(tex, r.path("texture"));
        f.reject_unknown({"file"});
        t.texture = load_texture_file(base / f.string("file"), f.path("file"));
    } else {
        throw FormatError("field " + r.path("texture") + " must be a name or {\"file\": ...}");
    }
    const double gain = r.number("gain", 1.0);
    if (!(gain > 0.0)) throw FormatError("field " + r.path("gain") + " must be positive");
    if (gain != 1.0)
        for (double& v : t.texture.values()) v *= gain;

    t.depth = r.number("depth");
    if (!(t.depth > 0.0)) throw FormatError("field " + r.path("depth") + " must be positive");
    t.physical_pitch = r.number("pitch", 1e-5);
    if (!(t.physical_pitch > 0.0)) throw FormatError("field " + r.path("pitch") + " must be positive");
    t.alpha = r.number("alpha", 1.0);
    if (!(t.alpha > 0.0 && t.alpha <= 1.0)) throw FormatError("field " + r.path("alpha") + " must lie in (0, 1]");
    if (r.has("center")) {
        const Json& c = r.child("center");
        if (!c.is_array() || c.size() != 2 || !c[0].is_number() || !c[1].is_number())
            throw FormatError("field " + r.path("center") + " must be [x, y]");
        t.center_x = c[0].get<double>();
        t.center_y = c[1].get<double>();
    }
    for (double v : t.texture.values())
        if (!std::isfinite(v) || v < 0.0) throw FormatError("field " + r.path("texture") + " has negative or non-finite radiance");
    return t;
}

}  // namespace

std::vector<PlanarTarget> scene_from_json(const Json& j, const std::filesystem::path& base_dir) {
    JsonReader r(j, "scene");
    r.reject_unknown({"targets"});
    const Json& arr = r.child("targets");
    if (!arr.is_array()) throw FormatError("field scene.targets must be an array");
    std::vector<PlanarTarget> out;
    for (std::size_t i = 0; i < arr.size(); ++i)
        out.push_back(target_from_json(arr[i], base_dir, "scene.targets[" + std::to_string(i) + "]"));
    return out;
}

std::vector<PlanarTarget> load_scene(const std::filesystem::path& path) {
    return scene_from_json(read_json_file(path), path.parent_path());
}

}  // namespace nearfar::harness
