#pragma once

#include <Eigen/Core>
#include <vector>

#include "stcal/so3.hpp"

namespace stcal {

/// Pinhole intrinsics, zero skew. Focal lengths and principal point in pixels.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  double mean_focal() const { return 0.5 * (fx + fy); }
};

/// Rigid world-to-camera transform: p_cam = R * p_world + t.
struct CameraPose {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  static CameraPose identity() { return {}; }

  /// Composition: (a * b) maps through b first, then a.
  CameraPose operator*(const CameraPose& other) const {
    return {R * other.R, R * other.t + t};
  }

  CameraPose inverse() const { return {R.transpose(), -(R.transpose() * t)}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return R * p + t; }

  /// Camera center in world coordinates.
  Eigen::Vector3d center() const { return -(R.transpose() * t); }
};

/// Pinhole projection of a world point. Throws NonPositiveDepth if the point
/// is not strictly in front of the camera.
Eigen::Vector2d project(const CameraPose& pose, const CameraIntrinsics& K, const Eigen::Vector3d& X);

/// Projection of a camera-frame point (pose already applied).
Eigen::Vector2d project_camera_frame(const CameraIntrinsics& K, const Eigen::Vector3d& Xc);

/// Unit vector from the camera center toward a camera-frame point.
/// Throws ZeroVector for the origin.
Eigen::Vector3d bearing_from_point(const Eigen::Vector3d& X_cam);

/// One 2D measurement used for triangulation.
struct Ray {
  CameraPose pose;
  CameraIntrinsics K;
  Eigen::Vector2d pixel;
};

/// Linear midpoint triangulation from back-projected rays.
/// Throws DegenerateGeometry for coincident centers or parallel rays.
Eigen::Vector3d triangulate(const std::vector<Ray>& obs);

}  // namespace stcal
