#include <benchmark/benchmark.h>

#include "stcal/pipeline.hpp"
#include "stcal/stba.hpp"
#include "stcal/synth.hpp"

using namespace stcal;

namespace {

struct Fixture {
  SyntheticScene scene;
  std::vector<Observation2D> obs;
  BundleState state;
};

Fixture make_fixture(int cameras, int people, int frames) {
  Fixture f;
  SceneSpec spec;
  spec.n_cameras = cameras;
  spec.n_people = people;
  spec.n_frames = frames;
  spec.pixel_sigma = 2.0;
  spec.seed = 99;
  f.scene = generate(spec);

  GlobalAssociation ga;
  int max_gid = -1;
  for (std::size_t c = 0; c < f.scene.gt.person_map.size(); ++c) {
    for (const auto& [pid, person] : f.scene.gt.person_map[c]) {
      ga.ids[{static_cast<int>(c), pid}] = person;
      max_gid = std::max(max_gid, person);
    }
  }
  ga.n_global = max_gid + 1;
  f.obs = build_observations(f.scene.views, f.scene.intrinsics, ga);

  f.state.intrinsics = f.scene.intrinsics;
  const CameraPose inv0 = f.scene.gt.poses[0].inverse();
  for (const auto& p : f.scene.gt.poses) f.state.poses.push_back(p * inv0);
  f.state.offsets = f.scene.gt.offsets;
  f.state.association = ga;
  f.state.motion_window = 5;
  f.state.points = estimate_motion(f.obs, f.state);
  return f;
}

}  // namespace

static void BM_EstimateMotion(benchmark::State& state) {
  const Fixture f = make_fixture(4, 3, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimate_motion(f.obs, f.state));
  }
}
BENCHMARK(BM_EstimateMotion)->Arg(60)->Arg(120)->Unit(benchmark::kMillisecond);

static void BM_SolveStba(benchmark::State& state) {
  Fixture f = make_fixture(4, 3, static_cast<int>(state.range(0)));
  // Perturb so the solver has real work.
  for (std::size_t c = 1; c < f.state.poses.size(); ++c) {
    f.state.poses[c].R = exp_map(Eigen::Vector3d(0.02, -0.01, 0.015)) * f.state.poses[c].R;
    f.state.offsets[c] += 0.4;
  }
  f.state.points = estimate_motion(f.obs, f.state);
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_stba(f.state, f.obs));
  }
}
BENCHMARK(BM_SolveStba)->Arg(60)->Arg(120)->Unit(benchmark::kMillisecond);

static void BM_FullPipeline(benchmark::State& state) {
  SceneSpec spec;
  spec.n_cameras = 4;
  spec.n_people = 3;
  spec.n_frames = 60;
  spec.pixel_sigma = 2.0;
  spec.seed = 101;
  const SyntheticScene scene = generate(spec);
  PipelineConfig cfg;
  cfg.synchronize = false;
  cfg.registration.use_ransac = false;
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_pipeline(scene.views, scene.intrinsics, cfg, &scene.gt));
  }
}
BENCHMARK(BM_FullPipeline)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
