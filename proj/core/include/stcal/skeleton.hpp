#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

namespace stcal {

/// Kinematic tree. parents[j] == -1 marks the root; every other joint must
/// point at a lower index so the joint order is topological.
struct Skeleton {
  std::vector<std::string> joint_names;
  std::vector<int> parents;

  int size() const { return static_cast<int>(parents.size()); }
  int root() const;

  /// Validates the tree structure (single root, parent[j] < j). Throws
  /// SkeletonMismatch on violation.
  void validate() const;

  bool operator==(const Skeleton&) const = default;

  /// The 17-joint Human3.6M convention used by common monocular estimators.
  static Skeleton h36m17();
};

/// One person's joints at one frame, in the camera frame of the view that
/// produced them. Invalid joints carry no numeric guarantees.
struct PoseFrame {
  int person_id = -1;
  int frame = 0;
  std::vector<Eigen::Vector3d> joints;
  std::vector<bool> valid;
  /// Optional raw 2D keypoints (pixels); empty when the estimator provided
  /// only 3D positions.
  std::vector<Eigen::Vector2d> pixels;

  bool has_pixels() const { return !pixels.empty(); }
};

/// Contiguous run of frames for one tracked person in one view.
struct PersonTrack {
  int person_id = -1;
  int start_frame = 0;
  std::vector<PoseFrame> frames;

  int end_frame() const { return start_frame + static_cast<int>(frames.size()); }  // exclusive
  bool contains(int frame) const { return frame >= start_frame && frame < end_frame(); }
  const PoseFrame& at(int frame) const { return frames[static_cast<std::size_t>(frame - start_frame)]; }
};

/// Frames [start, start+count) of a track, in order. Throws OutOfRange when
/// the window leaves the track.
std::vector<PoseFrame> window(const PersonTrack& track, int start, int count);

}  // namespace stcal
