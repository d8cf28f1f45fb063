#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include <nearfar/errors.hpp>
#include <nearfar/image_io.hpp>
#include <nearfar/serialization.hpp>

#include "fixtures.hpp"

using namespace nearfar;

namespace {

Raster<std::uint16_t> ramp16(int w, int h) {
    Raster<std::uint16_t> r(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) r(x, y) = static_cast<std::uint16_t>((x * 977 + y * 31337) & 0xFFFF);
    return r;
}

}  // namespace

TEST(Pgm, RoundTripAndHeader) {
    fixture::TempDir dir("pgm");
    const auto img = ramp16(37, 11);
    write_pgm16(img, dir / "a.pgm");
    EXPECT_EQ(read_pgm(dir / "a.pgm"), img);
    const auto bytes = fixture::slurp(dir / "a.pgm");
    EXPECT_EQ(bytes.rfind("P5\n37 11\n65535\n", 0), 0u);
    const std::size_t body = std::strlen("P5\n37 11\n65535\n");
    ASSERT_EQ(bytes.size(), body + 2 * 37 * 11);
    // Big-endian samples.
    EXPECT_EQ(static_cast<unsigned char>(bytes[body + 2]), img(1, 0) >> 8);
    EXPECT_EQ(static_cast<unsigned char>(bytes[body + 3]), img(1, 0) & 0xFF);
}

TEST(Pgm, ReadsEightBitWithComments) {
    fixture::TempDir dir("pgm");
    fixture::spit(dir / "b.pgm", std::string("P5\n# note\n3 1\n255\n") + '\x01' + '\x80' + '\xff');
    const auto img = read_pgm(dir / "b.pgm");
    EXPECT_EQ(img(0, 0), 1);
    EXPECT_EQ(img(1, 0), 128);
    EXPECT_EQ(img(2, 0), 255);
}

TEST(Pgm, MalformedAndMissing) {
    fixture::TempDir dir("pgm");
    fixture::spit(dir / "c.pgm", "P2\n1 1\n255\n0\n");
    EXPECT_THROW(read_pgm(dir / "c.pgm"), FormatError);
    fixture::spit(dir / "d.pgm", "P5\n4 4\n65535\nxx");
    EXPECT_THROW(read_pgm(dir / "d.pgm"), FormatError);
    EXPECT_THROW(read_pgm(dir / "none.pgm"), IoError);
}

TEST(Pfm, RoundTripIsLosslessForFloats) {
    fixture::TempDir dir("pfm");
    Image img(13, 7);
    std::mt19937_64 rng(1);
    std::normal_distribution<float> n(0.0f, 100.0f);
    for (double& v : img.values()) v = static_cast<double>(n(rng));
    write_pfm(img, dir / "a.pfm");
    EXPECT_EQ(read_pfm(dir / "a.pfm"), img);
    const auto bytes = fixture::slurp(dir / "a.pfm");
    EXPECT_EQ(bytes.rfind("Pf\n13 7\n-1.0\n", 0), 0u);
    // Bottom row first, little-endian.
    float first;
    std::memcpy(&first, bytes.data() + std::strlen("Pf\n13 7\n-1.0\n"), 4);
    EXPECT_EQ(static_cast<double>(first), img(0, 6));
}

TEST(Pfm, ReadsBigEndian) {
    fixture::TempDir dir("pfm");
    std::string s = "Pf\n2 1\n1.0\n";
    for (float f : {1.5f, -2.25f}) {
        unsigned char b[4];
        std::memcpy(b, &f, 4);
        for (int i = 3; i >= 0; --i) s.push_back(static_cast<char>(b[i]));
    }
    fixture::spit(dir / "be.pfm", s);
    const auto img = read_pfm(dir / "be.pfm");
    EXPECT_EQ(img(0, 0), 1.5);
    EXPECT_EQ(img(1, 0), -2.25);
}

TEST(Json, OpticalRoundTripAndStrictFields) {
    OpticalSystemConfig cfg;
    cfg.rho_1 = 68.93123456789;
    cfg.s1 = 2.7474e-3;
    const Json j = to_json(cfg);
    for (const char* k : {"rho_1", "rho_3", "rho_L", "s1", "s2", "lambda", "theta", "panel_width", "panel_height",
                          "panel_pitch", "pinhole_diameter", "kappa"})
        EXPECT_TRUE(j.contains(k)) << k;
    const auto back = optical_config_from_json(Json::parse(dump_json(j)));
    EXPECT_EQ(back, cfg);
    Json bad = j;
    bad["rho_2"] = 1.0;
    try {
        optical_config_from_json(bad);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("rho_2"), std::string::npos);
    }
    Json wrong = j;
    wrong["s1"] = "two";
    EXPECT_THROW(optical_config_from_json(wrong), FormatError);
}

TEST(Json, NonFiniteRejected) {
    fixture::TempDir dir("json");
    Json j{{"x", std::numeric_limits<double>::quiet_NaN()}};
    EXPECT_THROW(write_json_file(dir / "n.json", j), FormatError);
}

TEST(Json, SensorAndParamsRoundTrip) {
    SensorSpec s;
    s.width = 3000;
    s.black_level = 100;
    EXPECT_EQ(sensor_from_json(Json::parse(dump_json(to_json(s)))), s);

    CalibrationResult r;
    r.params = {61.234567890123, -45.6789};
    r.rms_residual = 3.2e-4;
    r.n_used = 1234;
    r.condition = 17.5;
    const Json j = to_json(r);
    for (const char* k : {"a_param", "b_param", "rms_residual", "n_used", "condition"}) EXPECT_TRUE(j.contains(k));
    const auto back = calibration_result_from_json(Json::parse(dump_json(j)));
    EXPECT_EQ(back.params.a_param, r.params.a_param);
    EXPECT_EQ(back.params.b_param, r.params.b_param);
    EXPECT_EQ(back.rms_residual, r.rms_residual);
    EXPECT_EQ(back.n_used, r.n_used);
    EXPECT_EQ(back.condition, r.condition);
}

TEST(Json, FileRoundTripIsByteStable) {
    fixture::TempDir dir("json");
    const Json j = to_json(OpticalSystemConfig{});
    write_json_file(dir / "a.json", j);
    write_json_file(dir / "b.json", read_json_file(dir / "a.json"));
    EXPECT_EQ(fixture::slurp(dir / "a.json"), fixture::slurp(dir / "b.json"));
    fixture::spit(dir / "bad.json", "{\"a\": ");
    EXPECT_THROW(read_json_file(dir / "bad.json"), FormatError);
}

TEST(Capture, PgmWithSidecarRoundTrip) {
    fixture::TempDir dir("cap");
    CaptureLayout layout;
    layout.windows = {PixelRect{0, 0, 10, 8}, PixelRect{10, 0, 10, 8}, PixelRect{20, 0, 10, 8}};
    layout.seed = 12345678901234ULL;
    layout.exposure_gain = 0.123456789;
    layout.black_level = 256;
    const RawCapture cap(ramp16(30, 8), layout);
    write_capture(cap, dir / "c.pgm");
    EXPECT_EQ(layout_sidecar_path(dir / "c.pgm"), dir / "c.layout.json");
    const auto back = read_capture(dir / "c.pgm");
    EXPECT_EQ(back.pixels(), cap.pixels());
    EXPECT_EQ(back.layout(), cap.layout());
    std::filesystem::remove(dir / "c.layout.json");
    EXPECT_THROW(read_capture(dir / "c.pgm"), IoError);
}

TEST(CalibrationCsv, LosslessRoundTrip) {
    fixture::TempDir dir("csv");
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<CalibrationSample> s;
    for (int i = 0; i < 200; ++i) s.push_back({n(rng) * 1e3, n(rng) * 1e-5, 0.012 + 1e-4 * i, std::abs(n(rng))});
    write_calibration_csv(s, dir / "s.csv");
    EXPECT_EQ(fixture::slurp(dir / "s.csv").rfind("lap,drho,z_true_m,weight\n", 0), 0u);
    const auto back = read_calibration_csv(dir / "s.csv");
    ASSERT_EQ(back.size(), s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        EXPECT_EQ(back[i].lap, s[i].lap);
        EXPECT_EQ(back[i].drho, s[i].drho);
        EXPECT_EQ(back[i].z_true, s[i].z_true);
        EXPECT_EQ(back[i].weight, s[i].weight);
    }
    fixture::spit(dir / "bad.csv", "lap,drho,z_true_m,weight\n1,2,3\n");
    EXPECT_THROW(read_calibration_csv(dir / "bad.csv"), FormatError);
}

TEST(FormatDouble, ShortestRoundTrip) {
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
    EXPECT_THROW(format_double(std::numeric_limits<double>::infinity()), FormatError);
}
