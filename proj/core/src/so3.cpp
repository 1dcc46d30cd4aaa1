#include "stcal/so3.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace stcal {

Eigen::Matrix3d hat(const Eigen::Vector3d& w) {
  Eigen::Matrix3d S;
  S << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
      -w.y(), w.x(), 0.0;
  return S;
}

Eigen::Matrix3d exp_map(const Eigen::Vector3d& omega) {
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Eigen::Matrix3d K = hat(omega);

  // R = I + a*K + b*K^2 with a = sin(t)/t, b = (1-cos(t))/t^2.
  double a, b;
  if (theta < 1e-5) {
    a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
    b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Eigen::Matrix3d::Identity() + a * K + b * K * K;
}

Eigen::Vector3d log_map(const Eigen::Matrix3d& R) {
  const double trace = R.trace();
  const double cos_theta = std::clamp(0.5 * (trace - 1.0), -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  const Eigen::Vector3d axial(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));

  if (theta < 1e-5) {
    // theta/sin(theta) ~ 1 + t^2/6 + 7 t^4/360
    const double t2 = theta * theta;
    return 0.5 * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0) * axial;
  }
  if (theta > M_PI - 1e-4) {
    // Near pi the axial vector vanishes; recover the axis from the dominant
    // eigenvector of the symmetric part: R + R^T = 2(cos t I + (1-cos t) nn^T).
    const Eigen::Matrix3d S = 0.5 * (R + R.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(S);
    Eigen::Vector3d n = eig.eigenvectors().col(2);  // eigenvalue closest to +1
    // Disambiguate the axis sign with the axial part when it is nonzero,
    // otherwise any sign is a valid logarithm at exactly pi.
    if (n.dot(axial) < 0.0) n = -n;
    // acos loses half the precision at the boundary; the axial norm gives
    // sin(theta) and asin recovers the angle to machine accuracy.
    const double refined = M_PI - std::asin(std::clamp(0.5 * axial.norm(), 0.0, 1.0));
    return refined * n;
  }
  return (0.5 * theta / std::sin(theta)) * axial;
}

double geodesic_distance(const Eigen::Matrix3d& R1, const Eigen::Matrix3d& R2) {
  return log_map(R1.transpose() * R2).norm();
}

bool is_rotation(const Eigen::Matrix3d& R, double tol) {
  const Eigen::Matrix3d err = R * R.transpose() - Eigen::Matrix3d::Identity();
  return err.cwiseAbs().maxCoeff() <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& M) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d R = svd.matrixU() * svd.matrixV().transpose();
  if (R.determinant() < 0.0) {
    Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
    D(2, 2) = -1.0;
    R = svd.matrixU() * D * svd.matrixV().transpose();
  }
  return R;
}

}  // namespace stcal
