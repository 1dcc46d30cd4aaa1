#pragma once

#include <Eigen/Core>
#include <vector>

#include "stcal/camera.hpp"
#include "stcal/multiview.hpp"

namespace stcal {

/// One pixel measurement of a joint of a globally associated person.
struct Observation2D {
  int camera = -1;
  int frame = 0;  // camera-local frame index
  int global_person = -1;
  int joint = -1;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
};

/// Linear motion segment of one joint of one person: world position X at the
/// reference-time anchor t0 plus a per-frame motion vector V.
struct JointTrackPoint {
  int global_person = -1;
  int joint = -1;
  int t0 = 0;  // reference-timeline window anchor
  Eigen::Vector3d X = Eigen::Vector3d::Zero();
  Eigen::Vector3d V = Eigen::Vector3d::Zero();
  bool has_motion = false;  // V meaningful only with >= 2 temporal samples
};

/// Full optimization state: camera poses, continuous per-camera offsets
/// (camera 0 pinned at zero), motion segments and the active association.
struct BundleState {
  std::vector<CameraPose> poses;
  std::vector<CameraIntrinsics> intrinsics;
  std::vector<double> offsets;  // frames; offsets[0] == 0
  std::vector<JointTrackPoint> points;
  GlobalAssociation association;
  int motion_window = 5;  // W, frames per (X, V) segment
};

struct StbaOptions {
  int max_iterations = 100;
  double tol_relative = 1e-8;
  double huber_px = 3.0;
  double prune_factor = 3.0;  // remove persons above prune_factor * median error
  double prune_floor_px = 1e-3;  // never prune below this absolute error
  int max_rounds = 10;
  int motion_window = 5;
  /// Offsets may move at most this many frames from their entry values: the
  /// pairwise search already pinned the integer part, STBA refines the
  /// fraction. Keeps gross association outliers from dragging the time base.
  double max_offset_shift = 2.0;
};

/// Reference time of an observation under the state's current offsets.
inline double reference_time(const Observation2D& obs, const BundleState& state) {
  return static_cast<double>(obs.frame) - state.offsets[static_cast<std::size_t>(obs.camera)];
}

/// Index of the state's track point an observation belongs to, or -1. The
/// binding uses the rounded offset so it stays stable while delta moves.
int find_track_point(const Observation2D& obs, const BundleState& state);

/// Reprojection residual of one observation under the linear motion model:
/// project(pose, K, X + (t_obs - delta_c - t0) V) - pixel.
Eigen::Vector2d residual(const Observation2D& obs, const BundleState& state);

/// Residual plus analytic Jacobians with respect to the camera tangent
/// (left perturbation), translation, offset, and the segment's X and V.
struct ResidualJacobian {
  Eigen::Vector2d r = Eigen::Vector2d::Zero();
  Eigen::Matrix<double, 2, 3> d_omega = Eigen::Matrix<double, 2, 3>::Zero();
  Eigen::Matrix<double, 2, 3> d_t = Eigen::Matrix<double, 2, 3>::Zero();
  Eigen::Vector2d d_delta = Eigen::Vector2d::Zero();
  Eigen::Matrix<double, 2, 3> d_X = Eigen::Matrix<double, 2, 3>::Zero();
  Eigen::Matrix<double, 2, 3> d_V = Eigen::Matrix<double, 2, 3>::Zero();
};
ResidualJacobian residual_with_jacobian(const Observation2D& obs, const CameraPose& pose, const CameraIntrinsics& K,
                                        double delta, const JointTrackPoint& pt);

/// Triangulates every (person, joint, window) with >= 2 cameras at the
/// current offsets and fits the linear motion segment by least squares.
std::vector<JointTrackPoint> estimate_motion(const std::vector<Observation2D>& obs, const BundleState& state);

struct StbaSolveInfo {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  /// Accepted-iteration costs, one list per solve pass (the solver re-binds
  /// windows and re-solves when the integer part of an offset moves; costs
  /// are only comparable within a pass).
  std::vector<std::vector<double>> pass_costs;
  int iterations = 0;
  bool converged = false;
};

/// Damped least squares over all poses, offsets and motion segments with a
/// Huber loss, Schur elimination of the segments, and gauge re-fixing
/// (camera 0 identity, offset 0, unit 0-1 baseline). Throws
/// InsufficientObservations when no segment is seen by two cameras.
BundleState solve_stba(const BundleState& state, const std::vector<Observation2D>& obs, const StbaOptions& opts = {},
                       StbaSolveInfo* info = nullptr);

struct PruneResult {
  BundleState state;
  std::vector<Observation2D> observations;  // survivors
  std::vector<int> removed_global_ids;
};

/// Drops persons whose mean reprojection error exceeds
/// prune_factor * median over persons, then re-triangulates the survivors.
PruneResult prune_associations(const BundleState& state, const std::vector<Observation2D>& obs,
                               const StbaOptions& opts = {});

struct StbaRounds {
  BundleState state;
  std::vector<Observation2D> observations;
  std::vector<int> removed_global_ids;
  std::vector<double> round_costs;  // final solver cost per round
  int rounds = 0;
};

/// Alternates solve_stba and prune_associations until no person is removed
/// or max_rounds is hit.
StbaRounds iterate_stba(const BundleState& state, const std::vector<Observation2D>& obs,
                        const StbaOptions& opts = {});

}  // namespace stcal
