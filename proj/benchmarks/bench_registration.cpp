#include <benchmark/benchmark.h>

#include "stcal/registration.hpp"
#include "stcal/synth.hpp"

using namespace stcal;

namespace {

SyntheticScene make_pair_scene(int people, int frames, double offset) {
  SceneSpec spec;
  spec.n_cameras = 2;
  spec.n_people = people;
  spec.n_frames = frames;
  spec.pixel_sigma = 2.0;
  spec.offsets = {0.0, offset};
  spec.seed = 77;
  return generate(spec);
}

}  // namespace

static void BM_EmRegister(benchmark::State& state) {
  const SyntheticScene scene = make_pair_scene(static_cast<int>(state.range(0)), 100, 0.0);
  RegistrationOptions opts;
  const auto starts =
      window_starts_for_offset(scene.views[0], scene.views[1], 0, opts.window_length, opts.window_stride);
  const OrientationWindows src = OrientationWindows::gather(scene.views[0], starts, opts.window_length);
  const OrientationWindows tgt = OrientationWindows::gather(scene.views[1], starts, opts.window_length);
  for (auto _ : state) {
    benchmark::DoNotOptimize(em_register(src, tgt, Eigen::Matrix3d::Identity()));
  }
}
BENCHMARK(BM_EmRegister)->Arg(2)->Arg(3)->Arg(6)->Unit(benchmark::kMillisecond);

static void BM_RegisterAtOffset(benchmark::State& state) {
  const SyntheticScene scene = make_pair_scene(3, 100, 0.0);
  RegistrationOptions opts;
  opts.search_offsets = false;
  for (auto _ : state) {
    benchmark::DoNotOptimize(register_at_offset(scene.views[0], scene.views[1], 0, opts));
  }
}
BENCHMARK(BM_RegisterAtOffset)->Unit(benchmark::kMillisecond);

static void BM_OffsetSearch(benchmark::State& state) {
  const SyntheticScene scene = make_pair_scene(3, 100, 5.0);
  RegistrationOptions opts;
  opts.offset_range = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(offset_search(scene.views[0], scene.views[1], opts));
  }
}
BENCHMARK(BM_OffsetSearch)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

static void BM_RansacRegister(benchmark::State& state) {
  SceneSpec spec;
  spec.n_cameras = 2;
  spec.n_people = 5;
  spec.n_frames = 100;
  spec.pixel_sigma = 2.0;
  spec.seed = 78;
  spec.visibility = {{true, true, true, true, false}, {true, true, true, false, true}};
  const SyntheticScene scene = generate(spec);
  RegistrationOptions opts;
  opts.search_offsets = false;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ransac_register(scene.views[0], scene.views[1], opts));
  }
}
BENCHMARK(BM_RansacRegister)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
