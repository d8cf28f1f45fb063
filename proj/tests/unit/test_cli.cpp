#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

#include <nearfar/image_io.hpp>
#include <nearfar/metasurface.hpp>
#include <nearfar/serialization.hpp>

#include "fixtures.hpp"
#include "harness/commands.hpp"
#include "harness/experiment.hpp"
#include "harness/scene.hpp"

using namespace nearfar;
using namespace nearfar::harness;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

template <typename F>
Run capture(F&& f) {
    std::ostringstream out, err;
    Run r;
    r.code = f(Streams{out, err});
    r.out = out.str();
    r.err = err.str();
    return r;
}

CommonOptions opts(const std::filesystem::path& out, const std::filesystem::path& config = {}) {
    CommonOptions c;
    c.out = out;
    if (!config.empty()) c.config = config;
    return c;
}

std::filesystem::path write_config(const fixture::TempDir& dir, const std::string& name, const Json& j) {
    const auto p = dir / name;
    write_json_file(p, j);
    return p;
}

double second_moment(const Image& img) {
    double m = 0, sx = 0, sy = 0;
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            m += img(x, y);
            sx += img(x, y) * x;
            sy += img(x, y) * y;
        }
    const double cx = sx / m, cy = sy / m;
    double v = 0;
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) v += img(x, y) * ((x - cx) * (x - cx) + (y - cy) * (y - cy));
    return v / m;
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string l; std::getline(ss, l);) out.push_back(l);
    return out;
}

// Noise-free stack over the default depths, shared by the calibrate and depth tests.
class Stack : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = std::make_unique<fixture::TempDir>("stack");
        auto c = opts(dir_->path() / "stack");
        c.noise = false;
        const auto r = capture([&](Streams io) { return cmd_psf_stack(c, io); });
        ASSERT_EQ(r.code, 0) << r.err;
        auto cc = opts(dir_->path() / "cal");
        cc.noise = false;
        const auto rc = capture([&](Streams io) { return cmd_calibrate(cc, dir_->path() / "stack", io); });
        ASSERT_EQ(rc.code, 0) << rc.err;
    }
    static void TearDownTestSuite() { dir_.reset(); }

    static std::filesystem::path stack() { return dir_->path() / "stack"; }
    static std::filesystem::path cal() { return dir_->path() / "cal"; }

    static std::unique_ptr<fixture::TempDir> dir_;
};

std::unique_ptr<fixture::TempDir> Stack::dir_;

}  // namespace

TEST(Config, DefaultsRoundTripThroughJson) {
    const auto cfg = default_experiment();
    const auto back = experiment_from_json(Json::parse(dump_json(to_json(cfg))));
    EXPECT_EQ(dump_json(to_json(back)), dump_json(to_json(cfg)));
    EXPECT_EQ(back.depths.size(), 9u);
    EXPECT_EQ(back.design.mode, SidePowerMode::derived);
}

TEST(Config, StrictFieldsAndNoiseForms) {
    EXPECT_THROW(experiment_from_json(Json{{"depth", {0.01}}}), FormatError);
    EXPECT_FALSE(experiment_from_json(Json{{"noise", "off"}}).noise.enabled);
    const auto n = experiment_from_json(Json{{"noise", {{"gain", 2.0}, {"read_sigma", 0.5}}}});
    EXPECT_TRUE(n.noise.enabled);
    EXPECT_EQ(n.noise.gain_scale, 2.0);
    EXPECT_THROW(experiment_from_json(Json{{"depths", {0.014, 0.012}}}), FormatError);
}

TEST(Config, OffsetDepthsStraddleTheSweep) {
    const auto d = offset_depths({0.012, 0.013, 0.014});
    ASSERT_EQ(d.size(), 4u);
    EXPECT_NEAR(d.front(), 0.0115, 1e-15);
    EXPECT_NEAR(d[1], 0.0125, 1e-15);
    EXPECT_NEAR(d.back(), 0.0145, 1e-15);
}

TEST(Design, DerivedFeasibleAndReproducible) {
    fixture::TempDir dir("design");
    DesignOptions d;
    d.mode = SidePowerMode::derived;
    const auto a = capture([&](Streams io) { return cmd_design(opts(dir / "a"), d, io); });
    const auto b = capture([&](Streams io) { return cmd_design(opts(dir / "b"), d, io); });
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(b.code, 0);
    EXPECT_EQ(fixture::slurp(dir / "a/layout.json"), fixture::slurp(dir / "b/layout.json"));
    const auto optical = optical_config_from_json(read_json_file(dir / "a/optical.json"));
    EXPECT_LE(optical.s1 + optical.s2, 0.015 * (1 + 1e-12));
    const Json layout = read_json_file(dir / "a/layout.json");
    EXPECT_EQ(layout["candidates"].size(), 2u);
}

TEST(Design, PaperSidePowersAndZeroBudgetExitTwo) {
    fixture::TempDir dir("design");
    const auto fixed = capture([&](Streams io) { return cmd_design(opts(dir / "f"), DesignOptions{}, io); });
    EXPECT_EQ(fixed.code, kExitConfig);
    EXPECT_NE(fixed.err.find("layout infeasible"), std::string::npos);
    EXPECT_TRUE(std::filesystem::exists(dir / "f/layout.json"));
    EXPECT_FALSE(std::filesystem::exists(dir / "f/optical.json"));
    DesignOptions zero;
    zero.budget = 0.0;
    EXPECT_EQ(capture([&](Streams io) { return cmd_design(opts(dir / "z"), zero, io); }).code, kExitConfig);
}

TEST(Phase, RightPanelCarriesCurvatureAndRamp) {
    fixture::TempDir dir("phase");
    const auto cfg = write_config(dir, "c.json", Json{{"phase", {{"width", 200e-6}, {"height", 200e-6}}}});
    const auto r = capture([&](Streams io) { return cmd_phase(opts(dir / "o", cfg), "right", {}, io); });
    ASSERT_EQ(r.code, 0) << r.err;
    const auto p = parse_phase_csv(dir / "o/phase_right.csv");
    const int c = p.grid.width / 2;
    // The unwrapped profile is neither constant along rows nor along columns.
    bool row_varies = false, col_varies = false;
    for (int i = 0; i < p.grid.width; ++i) row_varies |= p.values(i, c) != p.values(c, c);
    for (int j = 0; j < p.grid.height; ++j) col_varies |= p.values(c, j) != p.values(c, c);
    EXPECT_TRUE(row_varies);
    EXPECT_TRUE(col_varies);
    const auto again = capture([&](Streams io) { return cmd_phase(opts(dir / "o2", cfg), "right", {}, io); });
    EXPECT_EQ(again.code, 0);
    EXPECT_EQ(fixture::slurp(dir / "o/phase_right.csv"), fixture::slurp(dir / "o2/phase_right.csv"));
}

TEST(Phase, UnmodulatedPanelIsZero) {
    fixture::TempDir dir("phase");
    OpticalSystemConfig o;
    o.rho_1 = 0.0;
    o.theta = 0.0;
    const auto cfg =
        write_config(dir, "c.json", Json{{"optical", to_json(o)}, {"phase", {{"width", 5e-6}, {"height", 5e-6}}}});
    ASSERT_EQ(capture([&](Streams io) { return cmd_phase(opts(dir / "o", cfg), "left", {}, io); }).code, 0);
    const auto body = lines(fixture::slurp(dir / "o/phase_left.csv"));
    ASSERT_GT(body.size(), 1u);
    for (std::size_t i = 1; i < body.size(); ++i)
        for (char ch : body[i]) EXPECT_TRUE(ch == '0' || ch == '.' || ch == ',') << body[i];
    EXPECT_EQ(capture([&](Streams io) { return cmd_phase(opts(dir / "o", cfg), "middle", {}, io); }).code, 2);
}

TEST(Render, NearFarDemo) {
    fixture::TempDir dir("render");
    const auto scene = std::filesystem::path(NEARFAR_SCENES) / "near_far.json";
    auto c = opts(dir / "o");
    c.noise = false;
    const auto r = capture([&](Streams io) { return cmd_render(c, scene, io); });
    ASSERT_EQ(r.code, 0) << r.err;
    const auto cap = read_capture(dir / "o/capture.pgm");
    const auto again = capture([&](Streams io) { return cmd_render(c, scene, io); });
    EXPECT_EQ(again.code, 0);
    EXPECT_EQ(read_pgm(dir / "o/capture.pgm"), cap.pixels());

    // The near checker alone: sharp in the side windows, washed out in the centre.
    fixture::spit(dir / "near.json",
                  "{\"targets\": [{\"texture\": \"checker\", \"size\": 128, \"depth\": 0.014, \"pitch\": 1e-5}]}");
    auto c_near = opts(dir / "n");
    c_near.noise = false;
    ASSERT_EQ(capture([&](Streams io) { return cmd_render(c_near, dir / "near.json", io); }).code, 0);
    const auto subs = extract_subimages(read_capture(dir / "n/capture.pgm"));
    auto contrast = [](const Image& img) {
        double acc = 0;
        for (int y = 1; y < img.height(); ++y)
            for (int x = 1; x < img.width(); ++x) acc += (img(x, y) - img(x - 1, y)) * (img(x, y) - img(x - 1, y));
        return acc;
    };
    EXPECT_GT(contrast(subs[0]), 10 * contrast(subs[1]));
    const auto& optical = fixture::solved_optical();
    const double r1 = blur_radius(optical, channel(optical, 1), 0.014).x;
    const double r2 = blur_radius(optical, channel(optical, 2), 0.014).x;
    EXPECT_GE(r2, 10 * r1);
}

TEST(Render, EmptySceneIsBlack) {
    fixture::TempDir dir("render");
    fixture::spit(dir / "s.json", "{\"targets\": []}");
    auto c = opts(dir / "o");
    c.noise = false;
    ASSERT_EQ(capture([&](Streams io) { return cmd_render(c, dir / "s.json", io); }).code, 0);
    const auto cap = read_capture(dir / "o/capture.pgm");
    for (auto v : cap.pixels().values()) ASSERT_EQ(v, cap.layout().black_level);
}

TEST(Render, MalformedSceneNamesField) {
    fixture::TempDir dir("render");
    fixture::spit(dir / "s.json", "{\"targets\": [{\"texture\": \"checker\", \"size\": 16, \"depth\": -1}]}");
    const auto r = capture([&](Streams io) { return cmd_render(opts(dir / "o"), dir / "s.json", io); });
    EXPECT_EQ(r.code, kExitConfig);
    EXPECT_NE(r.err.find("targets[0].depth"), std::string::npos) << r.err;
    fixture::spit(dir / "t.json", "{\"targets\": [{\"texture\": \"checker\",");
    EXPECT_EQ(capture([&](Streams io) { return cmd_render(opts(dir / "o"), dir / "t.json", io); }).code, kExitConfig);
}

TEST(PsfStack, EmptyDepthsExitTwo) {
    fixture::TempDir dir("stack");
    const auto cfg = write_config(dir, "c.json", Json{{"depths", Json::array()}});
    EXPECT_EQ(capture([&](Streams io) { return cmd_psf_stack(opts(dir / "o", cfg), io); }).code, kExitConfig);
}

TEST_F(Stack, FilesAndIndex) {
    int pgm = 0, pfm = 0;
    for (const auto& e : std::filesystem::directory_iterator(stack())) {
        pgm += e.path().extension() == ".pgm";
        pfm += e.path().extension() == ".pfm";
    }
    EXPECT_EQ(pgm, 9);
    EXPECT_EQ(pfm, 18);
    const auto idx = lines(fixture::slurp(stack() / "stack_index.csv"));
    ASSERT_EQ(idx.size(), 10u);
    EXPECT_EQ(idx[0], "depth_mm,capture,i1,i3");
    EXPECT_EQ(idx[1], "12,frame_00.pgm,frame_00_i1.pfm,frame_00_i3.pfm");
}

TEST_F(Stack, SpotGrowsAwayFromFocus) {
    const auto& optical = fixture::solved_optical();
    const double zf = focal_object_distance(channel_system_matrix(optical, channel(optical, 1)));
    ASSERT_NEAR(zf, 0.014, 1e-9);
    std::vector<double> m;
    for (int k = 0; k < 9; ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%02d_i1.pfm", k);
        m.push_back(second_moment(read_pfm(stack() / name)));
    }
    // Frame 2 is 14 mm.
    for (int k = 2; k < 8; ++k) EXPECT_LT(m[static_cast<std::size_t>(k)], m[static_cast<std::size_t>(k + 1)]);
    EXPECT_LT(m[2], m[1]);
    EXPECT_LT(m[1], m[0]);
}

TEST_F(Stack, CalibrationIsSelfConsistent) {
    const auto params = calibration_result_from_json(read_json_file(cal() / "params.json"));
    EXPECT_GT(params.params.a_param, 0.0);
    EXPECT_EQ(dump_json(to_json(params)), dump_json(read_json_file(cal() / "params.json")));
    const auto report = lines(fixture::slurp(cal() / "calibration_report.csv"));
    ASSERT_EQ(report.size(), 10u);
    EXPECT_EQ(report[0], "depth_mm,median_pred_mm,n_samples");
    for (std::size_t k = 0; k < 9; ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%02zu.pgm", k);
        fixture::TempDir out("depth");
        const auto r = capture([&](Streams io) { return cmd_depth(opts(out.path()), stack() / name, cal() / "params.json", io); });
        ASSERT_EQ(r.code, 0) << r.err;
        const double estimate = read_json_file(out / "summary.json")["point_estimate_m"].get<double>();
        const auto cells = report[k + 1];
        const double median_mm = std::stod(cells.substr(cells.find(',') + 1));
        EXPECT_NEAR(estimate, median_mm * 1e-3, 1e-5) << "frame " << k;
        EXPECT_NEAR(estimate, 0.012 + 1e-3 * static_cast<double>(k), 1e-3) << "frame " << k;
    }
    EXPECT_EQ(read_calibration_csv(cal() / "calibration_samples.csv").size(),
              static_cast<std::size_t>(read_json_file(cal() / "params.json")["n_used"].get<std::size_t>()));
}

TEST_F(Stack, DepthIsReproducible) {
    fixture::TempDir a("depth"), b("depth");
    for (const auto* d : {&a, &b})
        ASSERT_EQ(capture([&](Streams io) {
                      return cmd_depth(opts(d->path()), stack() / "frame_04.pgm", cal() / "params.json", io);
                  }).code,
                  0);
    for (const char* f : {"depth.pfm", "confidence.pfm", "depth.json", "summary.json"})
        EXPECT_EQ(fixture::slurp(a / f), fixture::slurp(b / f)) << f;
    const double z = read_json_file(a / "summary.json")["point_estimate_m"].get<double>();
    EXPECT_NEAR(z, 0.016, 1e-3);
}

TEST_F(Stack, IdenticalPairsAreUnidentifiable) {
    fixture::TempDir dir("same");
    std::filesystem::copy(stack(), dir / "s");
    for (int k = 0; k < 9; ++k) {
        char i1[32], i3[32];
        std::snprintf(i1, sizeof i1, "frame_%02d_i1.pfm", k);
        std::snprintf(i3, sizeof i3, "frame_%02d_i3.pfm", k);
        std::filesystem::copy_file(dir / "s" / i1, dir / "s" / i3, std::filesystem::copy_options::overwrite_existing);
    }
    const auto r = capture([&](Streams io) { return cmd_calibrate(opts(dir / "o"), dir / "s", io); });
    EXPECT_EQ(r.code, kExitConfig);
    EXPECT_NE(r.err.find("B unidentifiable"), std::string::npos) << r.err;
}

TEST_F(Stack, EmptyWindowsFailCleanly) {
    fixture::TempDir dir("empty");
    auto cap = read_capture(stack() / "frame_00.pgm");
    Raster<std::uint16_t> black(cap.pixels().width(), cap.pixels().height(),
                                static_cast<std::uint16_t>(cap.layout().black_level));
    write_capture(RawCapture(black, cap.layout()), dir / "black.pgm");
    const auto r = capture([&](Streams io) { return cmd_depth(opts(dir / "o"), dir / "black.pgm", cal() / "params.json", io); });
    EXPECT_TRUE(r.code == kExitAlignment || r.code == kExitNoDepth) << r.code << " " << r.err;
}

TEST(Eval, NoiseFreeSweep) {
    fixture::TempDir dir("eval");
    auto c = opts(dir / "o");
    c.noise = false;
    const auto r = capture([&](Streams io) { return cmd_eval(c, {}, io); });
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = lines(fixture::slurp(dir / "o/metrics.csv"));
    ASSERT_EQ(rows.size(), 10u);
    EXPECT_EQ(rows[0], "true_depth_mm,mean_pred_mm,mae_mm,frac_within_5pct,n_valid");
    for (std::size_t i = 1; i < rows.size(); ++i) {
        std::stringstream ss(rows[i]);
        std::string cell[5];
        for (auto& s : cell) std::getline(ss, s, ',');
        EXPECT_LT(std::stod(cell[2]), 1.0) << rows[i];
        EXPECT_EQ(std::stod(cell[3]), 1.0) << rows[i];
    }
    EXPECT_TRUE(std::filesystem::exists(dir / "o/band.svg"));
    EXPECT_TRUE(std::filesystem::exists(dir / "o/hist_00.svg"));
    EXPECT_EQ(fixture::slurp(dir / "o/band.svg").rfind("<svg", 0), 0u);
}
