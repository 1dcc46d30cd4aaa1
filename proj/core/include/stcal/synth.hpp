#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "stcal/camera.hpp"
#include "stcal/registration.hpp"
#include "stcal/skeleton.hpp"

namespace stcal {

/// Synthetic multi-camera scene description. Fully deterministic given the
/// seed. Noise is calibrated so the same-view reprojection of the perturbed
/// 3D joints has pixel standard deviation `pixel_sigma`; the optional 2D
/// keypoint channel carries its own independent noise, mirroring the
/// accurate-detector / noisy-lifter split of real estimator stacks.
struct SceneSpec {
  int n_cameras = 4;
  int n_people = 3;
  int n_frames = 100;
  Skeleton skeleton = Skeleton::h36m17();

  double ring_radius = 4.0;
  double ring_height = 1.6;
  double height_jitter = 0.3;
  double area_radius = 1.2;  // persons roam a disc of this radius

  double pixel_sigma = 0.0;     // 3D-noise level, in reprojected pixels
  double keypoint_sigma = -1.0;  // 2D channel noise; <0 selects 1px when pixel_sigma>0 else 0
  bool emit_keypoints = true;
  double depth_sigma_scale = 1.0;  // depth noise = scale * sigma * Z / f

  std::vector<double> offsets;  // per-camera gt offsets in frames; empty = all zero

  // Motion: piecewise-linear joint trajectories with knots every
  // `knot_spacing` frames; root velocity and bone angular velocities follow
  // OU processes across knots with the rates below as equilibrium scales.
  int knot_spacing = 5;
  double root_speed = 0.02;  // m/frame
  double bone_rate = 0.35;   // rad/knot equilibrium bone angular velocity
  double smoothness = 0.8;   // OU memory in [0,1)

  std::vector<std::vector<bool>> visibility;  // [camera][person]; empty = all visible
  double joint_dropout = 0.0;                 // per joint-frame invalidation probability
  std::vector<int> clone_motion_of;           // per person, index to mimic (-1 = none)
  double clone_jitter = 0.03;                 // rad perturbation on cloned bones

  CameraIntrinsics intrinsics{1000.0, 1000.0, 960.0, 540.0, 1920, 1080};
  std::uint64_t seed = 1;
};

struct GroundTruthBundle {
  std::vector<CameraPose> poses;
  std::vector<double> offsets;
  std::vector<std::map<int, int>> person_map;  // per camera: local pid -> gt person
  // World joint positions at integer reference ticks: [person][frame][joint].
  std::vector<std::vector<std::vector<Eigen::Vector3d>>> world_tracks;
};

struct SyntheticScene {
  std::vector<ViewTracks> views;
  std::vector<CameraIntrinsics> intrinsics;
  GroundTruthBundle gt;
};

/// World-space lateral noise scale that first-order maps to sigma_px pixels
/// at the given depth and focal length.
double noise_calibration(double depth, double focal, double sigma_px);

/// Generates per-camera tracks plus the ground truth. Throws InvalidSpec on
/// inconsistent parameters.
SyntheticScene generate(const SceneSpec& spec);

}  // namespace stcal
