#include "stcal/oriented_points.hpp"

#include "stcal/errors.hpp"

namespace stcal {

namespace {
constexpr double kMinBoneLength = 1e-9;
}

OrientedPointSet encode_orientations(const PoseFrame& frame, const Skeleton& skel) {
  const int S = skel.size();
  if (static_cast<int>(frame.joints.size()) != S || static_cast<int>(frame.valid.size()) != S) {
    throw SkeletonMismatch("frame has " + std::to_string(frame.joints.size()) + " joints, skeleton has " +
                           std::to_string(S));
  }

  OrientedPointSet out;
  out.person_id = frame.person_id;
  out.frame = frame.frame;
  out.positions = frame.joints;
  out.orientations.assign(static_cast<std::size_t>(S), Eigen::Vector3d::Zero());
  out.valid.assign(static_cast<std::size_t>(S), false);

  for (int s = 0; s < S; ++s) {
    const int parent = skel.parents[s];
    if (parent < 0) continue;  // root has no bone
    if (!frame.valid[static_cast<std::size_t>(s)] || !frame.valid[static_cast<std::size_t>(parent)]) continue;
    const Eigen::Vector3d bone = frame.joints[static_cast<std::size_t>(s)] - frame.joints[static_cast<std::size_t>(parent)];
    const double len = bone.norm();
    if (len < kMinBoneLength) continue;  // degenerate bone
    out.orientations[static_cast<std::size_t>(s)] = bone / len;
    out.valid[static_cast<std::size_t>(s)] = true;
  }
  return out;
}

}  // namespace stcal
