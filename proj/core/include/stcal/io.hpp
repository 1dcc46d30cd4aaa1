#pragma once

#include <string>
#include <vector>

#include "stcal/metrics.hpp"
#include "stcal/multiview.hpp"
#include "stcal/registration.hpp"
#include "stcal/stba.hpp"
#include "stcal/synth.hpp"

namespace stcal {

// Track files are JSON Lines: a header object followed by one record per
// (person, frame). Tracks split into contiguous segments at frame gaps on
// load; joints carrying non-finite values are marked invalid.

struct TrackFileInfo {
  double fps = 30.0;
  int warnings = 0;  // records with non-finite joints
};

ViewTracks load_tracks(const std::string& path, TrackFileInfo* info = nullptr);
void save_tracks(const std::string& path, const ViewTracks& view, double fps = 30.0);

std::vector<CameraIntrinsics> load_intrinsics(const std::string& path);
void save_intrinsics(const std::string& path, const std::vector<CameraIntrinsics>& cams);

void save_ground_truth(const std::string& path, const GroundTruthBundle& gt);
GroundTruthBundle load_ground_truth(const std::string& path);

struct PipelineConfig {
  RegistrationOptions registration;
  StbaOptions stba;
  bool synchronize = true;
  std::string stop_after;  // "", "pr", "mi", "ba"
  bool keep_intermediates = false;
  bool round_offsets_in_metrics = false;
  int workers = 0;  // 0: STCAL_WORKERS env or hardware default
  std::uint64_t seed = 1;
};

PipelineConfig load_config(const std::string& path);
void save_config(const std::string& path, const PipelineConfig& cfg);

struct StageMetrics {
  std::string stage;
  EvaluationReport report;
};

struct ResultFile {
  std::vector<CameraPose> poses;
  std::vector<double> offsets;
  std::vector<std::tuple<int, int, int>> associations;  // (camera, pid, gid)
  std::vector<StageMetrics> stages;
  bool has_metrics = false;
  PipelineConfig config;
  std::uint64_t seed = 0;
  std::string generated_at;  // informational only; excluded from equality
};

void save_result(const std::string& path, const ResultFile& result);
ResultFile load_result(const std::string& path);

/// Adapter for a common estimator export layout:
/// {"camera_id":..,"people":[{"id":..,"frames":[{"frame":..,"joints":[[x,y,z],..]},..]},..]}
ViewTracks convert_estimator_json(const std::string& path, const Skeleton& skeleton);

}  // namespace stcal
