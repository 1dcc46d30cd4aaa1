#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

namespace stcal {

/// Corresponding unit bearings (target camera, source camera) of associated
/// persons' joints over matched frames, with optional per-pair weights.
struct EpipolarSystem {
  std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> pairs;  // (x target, x' source)
  std::vector<double> weights;  // empty means uniform
};

struct TranslationEstimate {
  Eigen::Vector3d direction = Eigen::Vector3d::Zero();  // unit, target frame
  double residual = 0.0;  // ||M t|| / sqrt(rows)
};

/// Recovers the translation direction from the coplanarity constraint
/// x^T [t]x R x' = 0 given the rotation, with the sign fixed by a cheirality
/// vote. Throws RankDeficient when the direction is not unique and
/// CheiralityAmbiguous on a tied vote.
TranslationEstimate solve_translation(const EpipolarSystem& pairs, const Eigen::Matrix3d& R);

}  // namespace stcal
