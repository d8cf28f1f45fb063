#pragma once

#include <filesystem>
#include <vector>

#include <nearfar/render.hpp>
#include <nearfar/serialization.hpp>

namespace nearfar::harness {

/// Scene document:
///   {"targets": [{"texture": "checker" | "point" | "bars" | {"file": "t.pgm"},
///                 "size": 64, "depth": 0.014, "pitch": 1e-5,
///                 "center": [0, 0], "alpha": 1.0, "gain": 1.0}, ...]}
/// Texture files resolve relative to `base_dir`. Errors name the field.
std::vector<PlanarTarget> scene_from_json(const Json& j, const std::filesystem::path& base_dir);
std::vector<PlanarTarget> load_scene(const std::filesystem::path& path);

}  // namespace nearfar::harness
