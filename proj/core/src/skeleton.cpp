#include "stcal/skeleton.hpp"

#include "stcal/errors.hpp"

namespace stcal {

int Skeleton::root() const {
  for (int j = 0; j < size(); ++j) {
    if (parents[j] < 0) return j;
  }
  return -1;
}

void Skeleton::validate() const {
  if (parents.empty()) throw SkeletonMismatch("empty skeleton");
  if (!joint_names.empty() && joint_names.size() != parents.size()) {
    throw SkeletonMismatch("joint name count does not match parent count");
  }
  int roots = 0;
  for (int j = 0; j < size(); ++j) {
    if (parents[j] < 0) {
      ++roots;
    } else if (parents[j] >= j) {
      throw SkeletonMismatch("parent index must precede joint " + std::to_string(j));
    }
  }
  if (roots != 1) throw SkeletonMismatch("skeleton must have exactly one root");
}

Skeleton Skeleton::h36m17() {
  Skeleton s;
  s.joint_names = {"pelvis",        "right_hip",   "right_knee", "right_ankle", "left_hip",
                   "left_knee",     "left_ankle",  "spine",      "thorax",      "neck",
                   "head",          "left_shoulder", "left_elbow", "left_wrist",
                   "right_shoulder", "right_elbow", "right_wrist"};
  s.parents = {-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15};
  return s;
}

std::vector<PoseFrame> window(const PersonTrack& track, int start, int count) {
  if (count < 1 || start < track.start_frame || start + count > track.end_frame()) {
    throw OutOfRange("window [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") outside track [" + std::to_string(track.start_frame) + ", " +
                     std::to_string(track.end_frame()) + ")");
  }
  std::vector<PoseFrame> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int f = start; f < start + count; ++f) {
    out.push_back(track.at(f));
  }
  return out;
}

}  // namespace stcal
