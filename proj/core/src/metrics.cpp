#include "stcal/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "stcal/errors.hpp"
#include "stcal/so3.hpp"

namespace stcal {

double rotation_error(const std::vector<CameraPose>& est, const std::vector<CameraPose>& gt,
                      std::vector<double>* per_camera) {
  if (est.size() != gt.size()) throw CountMismatch("pose count mismatch");
  if (est.size() < 2) return 0.0;
  double sum = 0.0;
  if (per_camera) per_camera->clear();
  for (std::size_t c = 1; c < est.size(); ++c) {
    const Eigen::Matrix3d rel_est = est[c].R * est[0].R.transpose();
    const Eigen::Matrix3d rel_gt = gt[c].R * gt[0].R.transpose();
    const double e = geodesic_distance(rel_est, rel_gt);
    sum += e;
    if (per_camera) per_camera->push_back(e);
  }
  return sum / static_cast<double>(est.size() - 1);
}

double translation_error(const std::vector<CameraPose>& est, const std::vector<CameraPose>& gt) {
  if (est.size() != gt.size()) throw CountMismatch("pose count mismatch");
  const std::size_t n = est.size();
  if (n < 2) return 0.0;

  // Centers relative to camera 0, expressed in each solution's own frame.
  std::vector<Eigen::Vector3d> ce(n), cg(n);
  for (std::size_t c = 0; c < n; ++c) {
    ce[c] = est[c].center() - est[0].center();
    cg[c] = gt[c].center() - gt[0].center();
  }
  const double baseline = cg[1].norm();
  if (baseline <= 1e-12) throw DegenerateBaseline("gt cameras 0 and 1 coincide");

  // Orthogonal Procrustes with camera 0 pinned at the origin: rotation from
  // the cross-covariance, then the optimal uniform scale.
  Eigen::Matrix3d M = Eigen::Matrix3d::Zero();
  double denom = 0.0;
  for (std::size_t c = 1; c < n; ++c) {
    M += cg[c] * ce[c].transpose();
    denom += ce[c].squaredNorm();
  }
  Eigen::Matrix3d Q = Eigen::Matrix3d::Identity();
  double scale = 1.0;
  if (denom > 1e-300) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) D(2, 2) = -1.0;
    Q = svd.matrixU() * D * svd.matrixV().transpose();
    double num = 0.0;
    for (std::size_t c = 1; c < n; ++c) num += cg[c].dot(Q * ce[c]);
    if (std::abs(num) > 1e-300) scale = num / denom;
  }

  double ss = 0.0;
  for (std::size_t c = 1; c < n; ++c) {
    ss += (scale * (Q * ce[c]) - cg[c]).squaredNorm();
  }
  return std::sqrt(ss / static_cast<double>(n - 1)) / baseline;
}

double offset_error(const std::vector<double>& est, const std::vector<double>& gt, bool round_to_int,
                    std::vector<double>* per_camera) {
  if (est.size() != gt.size()) throw CountMismatch("offset count mismatch");
  if (est.size() < 2) return 0.0;
  double sum = 0.0;
  if (per_camera) per_camera->clear();
  for (std::size_t c = 1; c < est.size(); ++c) {
    const double v = round_to_int ? static_cast<double>(std::llround(est[c])) : est[c];
    const double e = std::abs(v - gt[c]);
    sum += e;
    if (per_camera) per_camera->push_back(e);
  }
  return sum / static_cast<double>(est.size() - 1);
}

namespace {

std::vector<std::pair<std::pair<int, int>, std::pair<int, int>>> cluster_pairs(const GlobalAssociation& est) {
  std::vector<std::pair<std::pair<int, int>, std::pair<int, int>>> pairs;
  for (const auto& cluster : est.clusters()) {
    for (std::size_t a = 0; a < cluster.size(); ++a) {
      for (std::size_t b = a + 1; b < cluster.size(); ++b) {
        if (cluster[a].first == cluster[b].first) continue;  // same camera
        pairs.emplace_back(cluster[a], cluster[b]);
      }
    }
  }
  return pairs;
}

}  // namespace

PrecisionResult association_precision(const GlobalAssociation& est, const std::vector<std::map<int, int>>& labels) {
  PrecisionResult out;
  for (const auto& [a, b] : cluster_pairs(est)) {
    const auto& la = labels[static_cast<std::size_t>(a.first)];
    const auto& lb = labels[static_cast<std::size_t>(b.first)];
    const auto ia = la.find(a.second);
    const auto ib = lb.find(b.second);
    if (ia == la.end() || ib == lb.end()) {
      ++out.estimated;  // unmatched label: counted as estimated, never correct
      continue;
    }
    ++out.estimated;
    if (ia->second == ib->second) ++out.correct;
  }
  out.defined = out.estimated > 0;
  out.precision = out.defined ? static_cast<double>(out.correct) / out.estimated : 0.0;
  return out;
}

PrecisionResult association_precision_geometric(const GlobalAssociation& est, const std::vector<ViewTracks>& views,
                                                const std::vector<CameraIntrinsics>& intrinsics,
                                                const std::vector<CameraPose>& gt_poses,
                                                const std::vector<double>& gt_offsets, double threshold_px) {
  if (gt_poses.empty()) throw NoGroundTruth("geometric precision needs gt poses");
  PrecisionResult out;
  for (const auto& [a, b] : cluster_pairs(est)) {
    const auto [cam_a, pid_a] = a;
    const auto [cam_b, pid_b] = b;
    ++out.estimated;

    // Common reference ticks where both cameras track the person.
    double err_sum = 0.0;
    int err_n = 0;
    const auto [lo_a, hi_a] = views[static_cast<std::size_t>(cam_a)].frame_span();
    for (int fa = lo_a; fa < hi_a; ++fa) {
      const int t = fa - static_cast<int>(std::llround(gt_offsets[static_cast<std::size_t>(cam_a)]));
      const int fb = t + static_cast<int>(std::llround(gt_offsets[static_cast<std::size_t>(cam_b)]));
      const PersonTrack* sa = views[static_cast<std::size_t>(cam_a)].segment_at(pid_a, fa);
      const PersonTrack* sb = views[static_cast<std::size_t>(cam_b)].segment_at(pid_b, fb);
      if (sa == nullptr || sb == nullptr) continue;
      const PoseFrame& pfa = sa->at(fa);
      const PoseFrame& pfb = sb->at(fb);
      for (std::size_t j = 0; j < pfa.joints.size() && j < pfb.joints.size(); ++j) {
        if (!pfa.valid[j] || !pfb.valid[j]) continue;
        Eigen::Vector2d ua, ub;
        try {
          ua = project_camera_frame(intrinsics[static_cast<std::size_t>(cam_a)], pfa.joints[j]);
          ub = project_camera_frame(intrinsics[static_cast<std::size_t>(cam_b)], pfb.joints[j]);
          const Eigen::Vector3d X = triangulate({{gt_poses[static_cast<std::size_t>(cam_a)],
                                                  intrinsics[static_cast<std::size_t>(cam_a)], ua},
                                                 {gt_poses[static_cast<std::size_t>(cam_b)],
                                                  intrinsics[static_cast<std::size_t>(cam_b)], ub}});
          const double ea = (project(gt_poses[static_cast<std::size_t>(cam_a)],
                                     intrinsics[static_cast<std::size_t>(cam_a)], X) -
                             ua)
                                .norm();
          const double eb = (project(gt_poses[static_cast<std::size_t>(cam_b)],
                                     intrinsics[static_cast<std::size_t>(cam_b)], X) -
                             ub)
                                .norm();
          err_sum += 0.5 * (ea + eb);
          err_n += 1;
        } catch (const Error&) {
          continue;
        }
      }
    }
    if (err_n > 0 && err_sum / err_n < threshold_px) ++out.correct;
  }
  out.defined = out.estimated > 0;
  out.precision = out.defined ? static_cast<double>(out.correct) / out.estimated : 0.0;
  return out;
}

double reprojection_error(const BundleState& state, const std::vector<Observation2D>& obs) {
  double sum = 0.0;
  int n = 0;
  for (const auto& o : obs) {
    const int k = find_track_point(o, state);
    if (k < 0) continue;
    try {
      sum += residual_with_jacobian(o, state.poses[static_cast<std::size_t>(o.camera)],
                                    state.intrinsics[static_cast<std::size_t>(o.camera)],
                                    state.offsets[static_cast<std::size_t>(o.camera)],
                                    state.points[static_cast<std::size_t>(k)])
                 .r.norm();
      n += 1;
    } catch (const NonPositiveDepth&) {
      continue;
    }
  }
  return n > 0 ? sum / n : 0.0;
}

}  // namespace stcal
