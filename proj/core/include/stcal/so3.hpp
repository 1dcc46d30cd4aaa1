#pragma once

#include <Eigen/Core>

namespace stcal {

/// Skew-symmetric cross-product matrix: hat(w) * u == w x u.
Eigen::Matrix3d hat(const Eigen::Vector3d& w);

/// Exponential map so(3) -> SO(3) (Rodrigues). Series expansion near zero.
Eigen::Matrix3d exp_map(const Eigen::Vector3d& omega);

/// Logarithm map SO(3) -> so(3). Stable near angle 0 (Taylor) and near pi
/// (symmetric-part eigenvector extraction).
Eigen::Vector3d log_map(const Eigen::Matrix3d& R);

/// Riemannian (geodesic) distance between two rotations, in radians.
double geodesic_distance(const Eigen::Matrix3d& R1, const Eigen::Matrix3d& R2);

/// True if R is orthonormal with determinant +1 within tol.
bool is_rotation(const Eigen::Matrix3d& R, double tol = 1e-9);

/// Nearest rotation matrix in the Frobenius sense (SVD projection).
Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& M);

}  // namespace stcal
