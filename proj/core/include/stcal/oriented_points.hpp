#pragma once

#include <Eigen/Core>
#include <vector>

#include "stcal/skeleton.hpp"

namespace stcal {

/// Per-joint position plus unit bone orientation for one person at one frame.
/// The orientation of joint s points from its parent toward s. The root and
/// any joint with an invalid endpoint or a degenerate bone are invalid.
struct OrientedPointSet {
  int person_id = -1;
  int frame = 0;
  std::vector<Eigen::Vector3d> positions;
  std::vector<Eigen::Vector3d> orientations;
  std::vector<bool> valid;
};

/// Encodes bone orientations: v_s = (x_s - x_parent(s)) / ||x_s - x_parent(s)||.
/// Throws SkeletonMismatch if the frame's joint count differs from the skeleton.
OrientedPointSet encode_orientations(const PoseFrame& frame, const Skeleton& skel);

}  // namespace stcal
