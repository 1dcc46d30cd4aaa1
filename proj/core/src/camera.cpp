#include "stcal/camera.hpp"

#include <Eigen/Dense>

#include "stcal/errors.hpp"

namespace stcal {

namespace {
constexpr double kMinDepth = 1e-9;
}

Eigen::Vector2d project_camera_frame(const CameraIntrinsics& K, const Eigen::Vector3d& Xc) {
  if (Xc.z() <= kMinDepth) {
    throw NonPositiveDepth("projection depth " + std::to_string(Xc.z()));
  }
  return {K.fx * Xc.x() / Xc.z() + K.cx, K.fy * Xc.y() / Xc.z() + K.cy};
}

Eigen::Vector2d project(const CameraPose& pose, const CameraIntrinsics& K, const Eigen::Vector3d& X) {
  return project_camera_frame(K, pose.apply(X));
}

Eigen::Vector3d bearing_from_point(const Eigen::Vector3d& X_cam) {
  const double n = X_cam.norm();
  if (n <= 0.0) {
    throw ZeroVector();
  }
  return X_cam / n;
}

Eigen::Vector3d triangulate(const std::vector<Ray>& obs) {
  if (obs.size() < 2) {
    throw DegenerateGeometry("triangulation needs >= 2 observations");
  }

  bool distinct_centers = false;
  const Eigen::Vector3d c0 = obs.front().pose.center();
  for (std::size_t i = 1; i < obs.size(); ++i) {
    if ((obs[i].pose.center() - c0).norm() > 1e-12) {
      distinct_centers = true;
      break;
    }
  }
  if (!distinct_centers) {
    throw DegenerateGeometry("all camera centers coincide");
  }

  // Least-squares closest point to the bundle of rays:
  //   min_X sum_k || (I - d_k d_k^T)(X - C_k) ||^2
  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  for (const Ray& r : obs) {
    const Eigen::Vector3d dir_cam(
        (r.pixel.x() - r.K.cx) / r.K.fx, (r.pixel.y() - r.K.cy) / r.K.fy, 1.0);
    const Eigen::Vector3d d = (r.pose.R.transpose() * dir_cam).normalized();
    const Eigen::Matrix3d P = Eigen::Matrix3d::Identity() - d * d.transpose();
    A += P;
    b += P * r.pose.center();
  }

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(A);
  if (eig.eigenvalues()(0) < 1e-12 * std::max(1.0, eig.eigenvalues()(2))) {
    throw DegenerateGeometry("parallel back-projected rays");
  }
  return A.ldlt().solve(b);
}

}  // namespace stcal
