#pragma once

#include <Eigen/Core>
#include <map>
#include <utility>
#include <vector>

#include "stcal/camera.hpp"

namespace stcal {

/// Pairwise registration outcome between cameras i (source) and j (target):
/// rotation and unit translation mapping camera-i coordinates into camera-j
/// coordinates, the temporal offset delta_j - delta_i, and the matched
/// person pairs (target pid, source pid).
struct PairwiseEdge {
  int cam_i = -1;
  int cam_j = -1;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  int delta = 0;
  std::vector<std::pair<int, int>> matches;  // (pid in cam_j, pid in cam_i)
  double score = 0.0;  // mean matched angular cost; lower is better
};

/// Essential graph over all computed camera pairs.
struct CameraGraph {
  int n_cameras = 0;
  std::vector<std::vector<int>> persons;  // local person ids per camera
  std::vector<PairwiseEdge> edges;
};

/// Throws DisconnectedGraph unless every camera is reachable through edges.
void require_connected(const CameraGraph& graph);

/// Edge indices of the maximum-score spanning tree (best registrations kept,
/// i.e. smallest angular costs win).
std::vector<int> max_score_spanning_tree(const CameraGraph& graph);

struct PgoOptions {
  double lambda_t = 1.0;       // weight of the translation-direction term
  double cauchy_scale = 0.1;   // robust kernel scale
  bool robust = true;
  int max_iterations = 100;
  double tol_relative = 1e-12;
};

struct PgoResult {
  std::vector<CameraPose> poses;  // camera 0 identity, |center_1| = 1
  double final_cost = 0.0;
  std::vector<double> cost_history;  // accepted iterations only
};

/// Nonlinear least squares on the tangent space over relative rotation and
/// translation-direction residuals, initialized by spanning-tree chaining.
PgoResult pose_graph_optimize(const CameraGraph& graph, const PgoOptions& opts = {});

/// Absolute poses (camera 0 = identity) chained along the given tree edges
/// with unit pairwise baselines; the raw pairwise-stage estimate.
std::vector<CameraPose> chain_tree_poses(const CameraGraph& graph, const std::vector<int>& tree_edges);

struct InconsistentPair {
  int edge_index = -1;
  int cam_i = -1;
  int pid_i = -1;
  int cam_j = -1;
  int pid_j = -1;
};

/// Camera-local person id to global person id.
struct GlobalAssociation {
  std::map<std::pair<int, int>, int> ids;  // (camera, pid) -> global id
  int n_global = 0;
  std::vector<InconsistentPair> inconsistent;  // non-tree pairs contradicting the tree labeling

  int global_of(int camera, int pid) const {
    auto it = ids.find({camera, pid});
    return it == ids.end() ? -1 : it->second;
  }
  /// Members per global id, ordered by (camera, pid).
  std::vector<std::vector<std::pair<int, int>>> clusters() const;
};

/// Union-find over (camera, person) along the given spanning tree's matches;
/// non-tree edges only validate the labeling.
GlobalAssociation merge_associations_with_tree(const CameraGraph& graph, const std::vector<int>& tree_edges);

/// Merge along the maximum-score spanning tree.
GlobalAssociation merge_associations(const CameraGraph& graph);

struct OffsetConsensus {
  std::vector<int> offsets;  // per camera, camera 0 fixed at 0
  std::vector<std::pair<int, int>> cycle_residuals;  // (edge index, residual in frames)
};

/// Spanning-tree chaining of the pairwise integer offsets; non-tree edges
/// report their cycle residuals for diagnostics.
OffsetConsensus consensus_offsets(const CameraGraph& graph);

}  // namespace stcal
