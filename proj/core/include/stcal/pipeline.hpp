#pragma once

#include <string>
#include <vector>

#include "stcal/errors.hpp"
#include "stcal/io.hpp"
#include "stcal/metrics.hpp"
#include "stcal/multiview.hpp"
#include "stcal/stba.hpp"
#include "stcal/synth.hpp"

namespace stcal {

/// Error annotated with the pipeline stage that raised it.
class StageError : public Error {
public:
  StageError(std::string stage, const std::string& msg) : Error("[" + stage + "] " + msg), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

private:
  std::string stage_;
};

/// Per-stage calibration snapshot, kept for --keep-intermediates output.
struct StageSnapshot {
  std::string stage;
  std::vector<CameraPose> poses;
  std::vector<double> offsets;
  GlobalAssociation association;
};

struct PipelineResult {
  std::vector<CameraPose> poses;
  std::vector<double> offsets;
  GlobalAssociation association;
  BundleState bundle;
  std::vector<Observation2D> observations;
  CameraGraph graph;
  std::vector<StageSnapshot> snapshots;     // one per completed stage
  std::vector<StageMetrics> stage_metrics;  // populated when gt is given
  EvaluationReport final_metrics;
  bool has_metrics = false;
  std::string completed_stage;  // "pr", "mi", "ba" or "iba"
};

/// Full pipeline: encode -> all-pairs registration (RANSAC / offset search
/// per config) -> pose graph + association merge + offset consensus ->
/// iterative spatiotemporal bundle adjustment -> metrics against gt when
/// provided. Fills `out` progressively so callers can persist partial results
/// when a StageError is thrown.
void run_pipeline_into(const std::vector<ViewTracks>& views, const std::vector<CameraIntrinsics>& intrinsics,
                       const PipelineConfig& cfg, const GroundTruthBundle* gt, PipelineResult& out);

PipelineResult run_pipeline(const std::vector<ViewTracks>& views, const std::vector<CameraIntrinsics>& intrinsics,
                            const PipelineConfig& cfg, const GroundTruthBundle* gt = nullptr);

/// Pixel observations of every globally associated person: the raw keypoint
/// channel when present, otherwise projections of the camera-frame joints.
std::vector<Observation2D> build_observations(const std::vector<ViewTracks>& views,
                                              const std::vector<CameraIntrinsics>& intrinsics,
                                              const GlobalAssociation& assoc);

/// Effective worker count: explicit > 0 wins, then STCAL_WORKERS, then the
/// hardware concurrency.
int effective_workers(int requested);

}  // namespace stcal
