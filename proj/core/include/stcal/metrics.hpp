#pragma once

#include <map>
#include <vector>

#include "stcal/camera.hpp"
#include "stcal/multiview.hpp"
#include "stcal/registration.hpp"
#include "stcal/stba.hpp"

namespace stcal {

struct EvaluationReport {
  double rotation_error = 0.0;       // E_R, radians, mean over cameras 1..N-1
  double translation_error = 0.0;    // E_t, unitless (normalized by gt baseline)
  double reprojection_error = 0.0;   // E_2D, pixels
  double offset_error = 0.0;         // E_delta, frames (MAE)
  double precision = 0.0;            // P
  bool precision_defined = true;     // false when zero matches were estimated
  std::vector<double> per_camera_rotation;
  std::vector<double> per_camera_offset;
};

/// Mean geodesic distance of the camera-0-relative rotations, cameras 1..N-1.
/// Throws CountMismatch when the lists disagree.
double rotation_error(const std::vector<CameraPose>& est, const std::vector<CameraPose>& gt,
                      std::vector<double>* per_camera = nullptr);

/// RMSE of camera centers after pinning camera 0 and aligning rotation+scale
/// (orthogonal Procrustes), normalized by the gt camera-0-to-1 distance.
/// Throws DegenerateBaseline when that distance vanishes.
double translation_error(const std::vector<CameraPose>& est, const std::vector<CameraPose>& gt);

/// MAE of offsets over cameras 1..N-1; optionally rounds the estimates to
/// integers first (for integral ground truth).
double offset_error(const std::vector<double>& est, const std::vector<double>& gt, bool round_to_int = false,
                    std::vector<double>* per_camera = nullptr);

struct PrecisionResult {
  double precision = 0.0;
  int correct = 0;
  int estimated = 0;
  bool defined = false;  // false when estimated == 0 (precision reported as 0)
};

/// Precision from ground-truth labels: every cross-camera pair inside an
/// estimated cluster counts; a pair is correct when both members carry the
/// same gt person. labels[camera] maps local pid -> gt person id.
PrecisionResult association_precision(const GlobalAssociation& est, const std::vector<std::map<int, int>>& labels);

/// Precision by geometric consistency: per matched cross-camera pair,
/// triangulate the joints with the ground-truth poses/offsets and accept the
/// pair when the mean reprojection error stays under threshold_px.
PrecisionResult association_precision_geometric(const GlobalAssociation& est, const std::vector<ViewTracks>& views,
                                                const std::vector<CameraIntrinsics>& intrinsics,
                                                const std::vector<CameraPose>& gt_poses,
                                                const std::vector<double>& gt_offsets, double threshold_px = 5.0);

/// Mean residual norm over the observations that bind to the state.
double reprojection_error(const BundleState& state, const std::vector<Observation2D>& obs);

}  // namespace stcal
