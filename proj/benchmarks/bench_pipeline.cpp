#include <benchmark/benchmark.h>

#include <random>

#include <nearfar/calibration.hpp>
#include <nearfar/optics.hpp>
#include <nearfar/render.hpp>

#include "harness/experiment.hpp"
#include "harness/scene.hpp"

using namespace nearfar;
using namespace nearfar::harness;

namespace {

const OpticalSystemConfig& optical() {
    static const auto cfg = resolve_optical(default_experiment());
    return cfg;
}

void BM_SolveLayout(benchmark::State& state) {
    const auto exp = default_experiment();
    for (auto _ : state) benchmark::DoNotOptimize(resolve_optical(exp));
}
BENCHMARK(BM_SolveLayout)->Unit(benchmark::kMillisecond);

void BM_RenderCapture(benchmark::State& state) {
    const auto scene = load_scene(std::string(NEARFAR_SCENES) + "/near_far.json");
    const SensorSpec sensor;
    const NoiseSettings noise;
    std::uint64_t seed = 0;
    for (auto _ : state) benchmark::DoNotOptimize(render_capture(scene, optical(), sensor, noise, ++seed));
}
BENCHMARK(BM_RenderCapture)->Unit(benchmark::kMillisecond);

void BM_PointFrame(benchmark::State& state) {
    const SensorSpec sensor;
    const NoiseSettings noise;
    for (auto _ : state) benchmark::DoNotOptimize(render_point_frame(optical(), sensor, noise, 0.016, 1));
}
BENCHMARK(BM_PointFrame)->Unit(benchmark::kMillisecond);

void BM_AlignPair(benchmark::State& state) {
    const auto f = render_point_frame(optical(), SensorSpec{}, NoiseSettings{}, 0.016, 1);
    for (auto _ : state) benchmark::DoNotOptimize(align_pair(f.i1, f.i3));
}
BENCHMARK(BM_AlignPair)->Unit(benchmark::kMillisecond);

void BM_DepthPipeline(benchmark::State& state) {
    const auto f = render_point_frame(optical(), SensorSpec{}, NoiseSettings{}, 0.016, 1);
    const DfddSettings s;
    const DfddParams params{62.0, 5.0e3};
    for (auto _ : state) benchmark::DoNotOptimize(estimate_depth(f.i1, f.i3, params, s, optical()));
}
BENCHMARK(BM_DepthPipeline)->Unit(benchmark::kMillisecond);

void BM_FitRobust(benchmark::State& state) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> z(0.012, 0.020), lap(-100.0, 100.0);
    std::vector<CalibrationSample> samples(static_cast<std::size_t>(state.range(0)));
    for (auto& s : samples) {
        s.lap = lap(rng);
        s.z_true = z(rng);
        s.drho = (s.lap / s.z_true - 60.0 * s.lap) / 7000.0;
        s.weight = 1.0;
    }
    for (auto _ : state) benchmark::DoNotOptimize(fit_robust(samples));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FitRobust)->Arg(1000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
