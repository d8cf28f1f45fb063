#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nearfar/calibration.hpp"
#include "nearfar/dfdd.hpp"
#include "nearfar/optics.hpp"
#include "nearfar/render.hpp"

namespace nearfar {

using Json = nlohmann::ordered_json;

/// Parses a JSON file; syntax errors become FormatError with the byte offset.
Json read_json_file(const std::filesystem::path& path);

/// Two-space indented dump with a trailing newline. Rejects non-finite numbers.
void write_json_file(const std::filesystem::path& path, const Json& doc);
std::string dump_json(const Json& doc);

/// Typed field access for hand-written readers. Errors name `context.key`.
class JsonReader {
public:
    JsonReader(const Json& obj, std::string context);

    bool has(const char* key) const;
    double number(const char* key, double fallback) const;
    double number(const char* key) const;
    long long integer(const char* key, long long fallback) const;
    std::uint64_t unsigned_integer(const char* key, std::uint64_t fallback) const;
    bool boolean(const char* key, bool fallback) const;
    std::string string(const char* key, const std::string& fallback) const;
    std::string string(const char* key) const;
    const Json& child(const char* key) const;
    std::string path(const char* key) const { return context_ + "." + key; }

    /// Throws if the object has members outside `known`.
    void reject_unknown(std::initializer_list<const char*> known) const;

private:
    const Json& at(const char* key) const;

    const Json& obj_;
    std::string context_;
};

Json to_json(const OpticalSystemConfig& cfg);
/// Missing fields keep their defaults; unknown fields are rejected.
OpticalSystemConfig optical_config_from_json(const Json& j, const std::string& context = "optical");

Json to_json(const SensorSpec& s);
SensorSpec sensor_from_json(const Json& j, const std::string& context = "sensor");

Json to_json(const DfddParams& p);
Json to_json(const CalibrationResult& r);
CalibrationResult calibration_result_from_json(const Json& j, const std::string& context = "params");

Json to_json(const CaptureLayout& l);
CaptureLayout capture_layout_from_json(const Json& j, const std::string& context = "layout");

Json to_json(const LayoutCandidate& c);
Json to_json(const LayoutResult& r);

/// `<dir>/<stem>.layout.json` next to a capture's PGM.
std::filesystem::path layout_sidecar_path(const std::filesystem::path& pgm);

/// Writes the PGM and its layout sidecar.
void write_capture(const RawCapture& cap, const std::filesystem::path& pgm);
RawCapture read_capture(const std::filesystem::path& pgm);

/// CSV with header `lap,drho,z_true_m,weight`.
void write_calibration_csv(std::span<const CalibrationSample> samples, const std::filesystem::path& path);
std::vector<CalibrationSample> read_calibration_csv(const std::filesystem::path& path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace nearfar
