#include "stcal/stba.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "stcal/errors.hpp"
#include "stcal/so3.hpp"

namespace stcal {

namespace {

constexpr double kFailResidual = 1e6;  // stands in for observations behind a camera

int floor_div(int a, int b) {
  const int q = a / b;
  const int r = a % b;
  return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}

int nominal_reference_time(const Observation2D& obs, const BundleState& state) {
  return obs.frame - static_cast<int>(std::llround(state.offsets[static_cast<std::size_t>(obs.camera)]));
}

// Window anchor of an observation under the continuous offsets: once the
// offsets converge, every observation's true reference time lies inside its
// window, so a piecewise-linear world within the window is modeled exactly.
int window_anchor(const Observation2D& obs, const BundleState& state) {
  const int W = std::max(1, state.motion_window);
  const double t_ref = reference_time(obs, state);
  return static_cast<int>(std::floor(t_ref / static_cast<double>(W))) * W;
}

std::int64_t point_key(int gid, int joint, int t0) {
  return (static_cast<std::int64_t>(gid) << 40) ^ (static_cast<std::int64_t>(joint) << 24) ^
         (static_cast<std::int64_t>(t0) & 0xffffff);
}

std::unordered_map<std::int64_t, int> build_point_index(const BundleState& state) {
  std::unordered_map<std::int64_t, int> index;
  for (std::size_t k = 0; k < state.points.size(); ++k) {
    const auto& p = state.points[k];
    index[point_key(p.global_person, p.joint, p.t0)] = static_cast<int>(k);
  }
  return index;
}

double huber(double e, double delta) { return e <= delta ? e * e : delta * (2.0 * e - delta); }

}  // namespace

int find_track_point(const Observation2D& obs, const BundleState& state) {
  const int t0 = window_anchor(obs, state);
  for (std::size_t k = 0; k < state.points.size(); ++k) {
    const auto& p = state.points[k];
    if (p.global_person == obs.global_person && p.joint == obs.joint && p.t0 == t0) return static_cast<int>(k);
  }
  return -1;
}

ResidualJacobian residual_with_jacobian(const Observation2D& obs, const CameraPose& pose, const CameraIntrinsics& K,
                                        double delta, const JointTrackPoint& pt) {
  const double t_eval = (static_cast<double>(obs.frame) - delta) - static_cast<double>(pt.t0);
  const Eigen::Vector3d Xw = pt.X + t_eval * pt.V;
  const Eigen::Vector3d p = pose.apply(Xw);
  if (p.z() <= 1e-9) {
    throw NonPositiveDepth("observation behind camera " + std::to_string(obs.camera));
  }

  ResidualJacobian out;
  out.r = Eigen::Vector2d(K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy) - obs.pixel;

  Eigen::Matrix<double, 2, 3> Jpi;
  const double iz = 1.0 / p.z();
  Jpi << K.fx * iz, 0.0, -K.fx * p.x() * iz * iz,
         0.0, K.fy * iz, -K.fy * p.y() * iz * iz;

  out.d_omega = Jpi * (-hat(pose.R * Xw));
  out.d_t = Jpi;
  out.d_delta = Jpi * (pose.R * (-pt.V));
  out.d_X = Jpi * pose.R;
  out.d_V = (Jpi * pose.R) * t_eval;
  return out;
}

Eigen::Vector2d residual(const Observation2D& obs, const BundleState& state) {
  const int k = find_track_point(obs, state);
  if (k < 0) {
    throw InsufficientObservations("observation has no track point in the state");
  }
  const auto& pt = state.points[static_cast<std::size_t>(k)];
  return residual_with_jacobian(obs, state.poses[static_cast<std::size_t>(obs.camera)],
                                state.intrinsics[static_cast<std::size_t>(obs.camera)],
                                state.offsets[static_cast<std::size_t>(obs.camera)], pt)
      .r;
}

// ---------------------------------------------------------------------------
// Motion estimation

std::vector<JointTrackPoint> estimate_motion(const std::vector<Observation2D>& obs, const BundleState& state) {
  const int W = std::max(1, state.motion_window);

  // (gid, joint, window) -> reference tick -> rays. Windows follow the
  // continuous offsets; the triangulation grid stays on integer ticks.
  std::map<std::tuple<int, int, int>, std::map<int, std::vector<Ray>>> buckets;
  for (const auto& o : obs) {
    const int t_nom = nominal_reference_time(o, state);
    const int t0 = window_anchor(o, state);
    buckets[{o.global_person, o.joint, t0}][t_nom].push_back(
        {state.poses[static_cast<std::size_t>(o.camera)], state.intrinsics[static_cast<std::size_t>(o.camera)],
         o.pixel});
  }

  std::vector<JointTrackPoint> points;
  for (const auto& [key, ticks] : buckets) {
    const auto [gid, joint, t0] = key;
    std::vector<std::pair<double, Eigen::Vector3d>> samples;
    for (const auto& [tick, rays] : ticks) {
      if (rays.size() < 2) continue;
      try {
        samples.emplace_back(static_cast<double>(tick - t0), triangulate(rays));
      } catch (const DegenerateGeometry&) {
        // Skip degenerate ticks; the window may still carry usable samples.
      }
    }
    if (samples.empty()) continue;

    JointTrackPoint pt;
    pt.global_person = gid;
    pt.joint = joint;
    pt.t0 = t0;
    if (samples.size() == 1) {
      pt.X = samples.front().second;
      pt.V.setZero();
      pt.has_motion = false;
    } else {
      // Per-axis least squares of X + dt * V.
      double s0 = 0.0, s1 = 0.0, s2 = 0.0;
      Eigen::Vector3d b0 = Eigen::Vector3d::Zero();
      Eigen::Vector3d b1 = Eigen::Vector3d::Zero();
      for (const auto& [dt, P] : samples) {
        s0 += 1.0;
        s1 += dt;
        s2 += dt * dt;
        b0 += P;
        b1 += dt * P;
      }
      const double det = s0 * s2 - s1 * s1;
      if (std::abs(det) < 1e-12) {
        pt.X = b0 / s0;
        pt.V.setZero();
        pt.has_motion = false;
      } else {
        pt.X = (s2 * b0 - s1 * b1) / det;
        pt.V = (s0 * b1 - s1 * b0) / det;
        pt.has_motion = true;
      }
    }
    points.push_back(pt);
  }
  return points;
}

// ---------------------------------------------------------------------------
// Damped least squares with Schur elimination of the motion segments

namespace {

struct Bindings {
  std::vector<int> point_of;  // per observation; -1 = excluded
  std::vector<char> point_active;
};

Bindings bind_observations(const std::vector<Observation2D>& obs, const BundleState& state) {
  Bindings b;
  b.point_of.assign(obs.size(), -1);
  const auto index = build_point_index(state);
  std::vector<std::vector<char>> cams_seen(state.points.size(),
                                           std::vector<char>(state.poses.size(), 0));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const int t0 = window_anchor(obs[i], state);
    const auto it = index.find(point_key(obs[i].global_person, obs[i].joint, t0));
    if (it == index.end()) continue;
    b.point_of[i] = it->second;
    cams_seen[static_cast<std::size_t>(it->second)][static_cast<std::size_t>(obs[i].camera)] = 1;
  }
  b.point_active.assign(state.points.size(), 0);
  for (std::size_t k = 0; k < state.points.size(); ++k) {
    int ncams = 0;
    for (char c : cams_seen[k]) ncams += c;
    b.point_active[k] = ncams >= 2 ? 1 : 0;
  }
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (b.point_of[i] >= 0 && !b.point_active[static_cast<std::size_t>(b.point_of[i])]) b.point_of[i] = -1;
  }
  return b;
}

double robust_cost(const BundleState& state, const std::vector<Observation2D>& obs, const Bindings& bind,
                   double huber_px) {
  double cost = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const int k = bind.point_of[i];
    if (k < 0) continue;
    double e;
    try {
      e = residual_with_jacobian(obs[i], state.poses[static_cast<std::size_t>(obs[i].camera)],
                                 state.intrinsics[static_cast<std::size_t>(obs[i].camera)],
                                 state.offsets[static_cast<std::size_t>(obs[i].camera)],
                                 state.points[static_cast<std::size_t>(k)])
              .r.norm();
    } catch (const NonPositiveDepth&) {
      e = kFailResidual;
    }
    cost += huber(e, huber_px);
  }
  return cost;
}

void renormalize_scale(BundleState& state) {
  if (state.poses.size() < 2) return;
  const double baseline = state.poses[1].center().norm();
  if (baseline <= 1e-12) return;
  const double s = 1.0 / baseline;
  for (auto& p : state.poses) p.t *= s;
  for (auto& pt : state.points) {
    pt.X *= s;
    pt.V *= s;
  }
}

BundleState solve_once(const BundleState& input, const std::vector<Observation2D>& obs, const StbaOptions& opts,
                       const std::vector<double>& offset_ref, StbaSolveInfo* info) {
  BundleState state = input;
  const Bindings bind = bind_observations(obs, state);

  bool any_active = false;
  for (char a : bind.point_active) {
    if (a) {
      any_active = true;
      break;
    }
  }
  if (!any_active) {
    throw InsufficientObservations("no motion segment is observed by >= 2 cameras");
  }

  const int n_cams = static_cast<int>(state.poses.size());
  const int n_free = n_cams - 1;
  const int cam_dim = 7 * n_free;  // [omega(3), t(3), delta(1)] per free camera
  const int n_pts = static_cast<int>(state.points.size());

  double cost = robust_cost(state, obs, bind, opts.huber_px);
  if (info) {
    info->initial_cost = cost;
    info->pass_costs.push_back({cost});
  }
  double lambda = 1e-6;
  bool converged = false;
  int iters = 0;

  for (int it = 0; it < opts.max_iterations; ++it) {
    ++iters;

    Eigen::MatrixXd Hcc = Eigen::MatrixXd::Zero(cam_dim, cam_dim);
    Eigen::VectorXd gc = Eigen::VectorXd::Zero(cam_dim);
    std::vector<Eigen::Matrix<double, 6, 6>> Hpp(static_cast<std::size_t>(n_pts),
                                                 Eigen::Matrix<double, 6, 6>::Zero());
    std::vector<Eigen::Matrix<double, 6, 1>> gp(static_cast<std::size_t>(n_pts),
                                                Eigen::Matrix<double, 6, 1>::Zero());
    // Cross blocks per point: (free camera index, 7x6 block).
    std::vector<std::vector<std::pair<int, Eigen::Matrix<double, 7, 6>>>> cross(static_cast<std::size_t>(n_pts));

    for (std::size_t i = 0; i < obs.size(); ++i) {
      const int k = bind.point_of[i];
      if (k < 0) continue;
      ResidualJacobian rj;
      try {
        rj = residual_with_jacobian(obs[i], state.poses[static_cast<std::size_t>(obs[i].camera)],
                                    state.intrinsics[static_cast<std::size_t>(obs[i].camera)],
                                    state.offsets[static_cast<std::size_t>(obs[i].camera)],
                                    state.points[static_cast<std::size_t>(k)]);
      } catch (const NonPositiveDepth&) {
        continue;  // contributes to the cost but not to the linearization
      }
      const double e = rj.r.norm();
      const double w = e <= opts.huber_px ? 1.0 : opts.huber_px / e;  // IRLS weight

      Eigen::Matrix<double, 2, 6> Jp;
      Jp << rj.d_X, rj.d_V;
      const Eigen::Matrix<double, 6, 1> gpi = w * Jp.transpose() * rj.r;
      gp[static_cast<std::size_t>(k)] += gpi;
      Hpp[static_cast<std::size_t>(k)] += w * Jp.transpose() * Jp;

      if (obs[i].camera >= 1) {
        const int ci = obs[i].camera - 1;
        Eigen::Matrix<double, 2, 7> Jc;
        Jc << rj.d_omega, rj.d_t, rj.d_delta;
        gc.segment<7>(7 * ci) += w * Jc.transpose() * rj.r;
        Hcc.block<7, 7>(7 * ci, 7 * ci) += w * Jc.transpose() * Jc;
        auto& blocks = cross[static_cast<std::size_t>(k)];
        bool found = false;
        for (auto& [c, B] : blocks) {
          if (c == ci) {
            B += w * Jc.transpose() * Jp;
            found = true;
            break;
          }
        }
        if (!found) blocks.emplace_back(ci, (w * Jc.transpose() * Jp).eval());
      }
    }

    bool accepted = false;
    for (int attempt = 0; attempt < 12 && !accepted; ++attempt) {
      // Damped Schur complement.
      Eigen::MatrixXd S = Hcc;
      for (int d = 0; d < cam_dim; ++d) S(d, d) += lambda * std::max(Hcc(d, d), 1e-12);
      Eigen::VectorXd rhs = -gc;
      std::vector<Eigen::Matrix<double, 6, 6>> Hpp_inv(static_cast<std::size_t>(n_pts));
      for (int k = 0; k < n_pts; ++k) {
        if (!bind.point_active[static_cast<std::size_t>(k)]) continue;
        Eigen::Matrix<double, 6, 6> Hk = Hpp[static_cast<std::size_t>(k)];
        for (int d = 0; d < 6; ++d) Hk(d, d) += lambda * std::max(Hpp[static_cast<std::size_t>(k)](d, d), 1e-12);
        Hpp_inv[static_cast<std::size_t>(k)] = Hk.ldlt().solve(Eigen::Matrix<double, 6, 6>::Identity());
        const Eigen::Matrix<double, 6, 1> y = Hpp_inv[static_cast<std::size_t>(k)] * gp[static_cast<std::size_t>(k)];
        for (const auto& [ci, Bi] : cross[static_cast<std::size_t>(k)]) {
          rhs.segment<7>(7 * ci) += Bi * y;
          for (const auto& [cj, Bj] : cross[static_cast<std::size_t>(k)]) {
            S.block<7, 7>(7 * ci, 7 * cj) -= Bi * Hpp_inv[static_cast<std::size_t>(k)] * Bj.transpose();
          }
        }
      }

      const Eigen::VectorXd dc = cam_dim > 0 ? S.ldlt().solve(rhs).eval() : Eigen::VectorXd();

      BundleState cand = state;
      for (int c = 1; c < n_cams; ++c) {
        const int o = 7 * (c - 1);
        cand.poses[static_cast<std::size_t>(c)].R = exp_map(dc.segment<3>(o)) * state.poses[static_cast<std::size_t>(c)].R;
        cand.poses[static_cast<std::size_t>(c)].t = state.poses[static_cast<std::size_t>(c)].t + dc.segment<3>(o + 3);
        cand.offsets[static_cast<std::size_t>(c)] =
            std::clamp(state.offsets[static_cast<std::size_t>(c)] + dc(o + 6),
                       offset_ref[static_cast<std::size_t>(c)] - opts.max_offset_shift,
                       offset_ref[static_cast<std::size_t>(c)] + opts.max_offset_shift);
      }
      for (int k = 0; k < n_pts; ++k) {
        if (!bind.point_active[static_cast<std::size_t>(k)]) continue;
        Eigen::Matrix<double, 6, 1> rp = -gp[static_cast<std::size_t>(k)];
        for (const auto& [ci, Bi] : cross[static_cast<std::size_t>(k)]) {
          rp -= Bi.transpose() * dc.segment<7>(7 * ci);
        }
        const Eigen::Matrix<double, 6, 1> dp = Hpp_inv[static_cast<std::size_t>(k)] * rp;
        cand.points[static_cast<std::size_t>(k)].X += dp.head<3>();
        cand.points[static_cast<std::size_t>(k)].V += dp.tail<3>();
      }

      const double cand_cost = robust_cost(cand, obs, bind, opts.huber_px);
      if (cand_cost < cost) {
        state = std::move(cand);
        const double prev = cost;
        cost = cand_cost;
        if (info) info->pass_costs.back().push_back(cost);
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        if (std::abs(prev - cost) <= opts.tol_relative * (1.0 + prev)) converged = true;
      } else {
        lambda *= 4.0;
      }
    }
    if (!accepted || converged) {
      converged = converged || !accepted;
      break;
    }
  }

  renormalize_scale(state);
  if (info) {
    info->final_cost = cost;
    info->iterations = iters;
    info->converged = converged;
  }
  return state;
}

}  // namespace

BundleState solve_stba(const BundleState& input, const std::vector<Observation2D>& obs, const StbaOptions& opts,
                       StbaSolveInfo* info) {
  BundleState state = input;
  state.motion_window = opts.motion_window;
  // Re-solve when any observation's window assignment moved under the
  // optimized offsets so segments track the recovered time base.
  auto anchors = [&](const BundleState& st) {
    std::vector<int> a(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) a[i] = window_anchor(obs[i], st);
    return a;
  };
  for (int pass = 0; pass < 6; ++pass) {
    const std::vector<int> before = anchors(state);
    StbaSolveInfo local;
    state = solve_once(state, obs, opts, input.offsets, &local);
    if (info) {
      if (pass == 0) info->initial_cost = local.initial_cost;
      info->pass_costs.insert(info->pass_costs.end(), local.pass_costs.begin(), local.pass_costs.end());
      info->final_cost = local.final_cost;
      info->iterations += local.iterations;
      info->converged = local.converged;
    }
    if (anchors(state) == before) break;
    state.points = estimate_motion(obs, state);
  }
  return state;
}

PruneResult prune_associations(const BundleState& state, const std::vector<Observation2D>& obs,
                               const StbaOptions& opts) {
  PruneResult out;
  out.state = state;

  const Bindings bind = bind_observations(obs, state);
  std::map<int, std::pair<double, int>> err;  // gid -> (sum, count)
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const int k = bind.point_of[i];
    if (k < 0) continue;
    double e;
    try {
      e = residual_with_jacobian(obs[i], state.poses[static_cast<std::size_t>(obs[i].camera)],
                                 state.intrinsics[static_cast<std::size_t>(obs[i].camera)],
                                 state.offsets[static_cast<std::size_t>(obs[i].camera)],
                                 state.points[static_cast<std::size_t>(k)])
              .r.norm();
    } catch (const NonPositiveDepth&) {
      e = kFailResidual;
    }
    auto& acc = err[obs[i].global_person];
    acc.first += e;
    acc.second += 1;
  }

  if (err.empty()) {
    out.observations = obs;
    return out;
  }

  std::vector<std::pair<int, double>> means;
  for (const auto& [gid, acc] : err) means.emplace_back(gid, acc.first / acc.second);
  std::vector<double> sorted;
  for (const auto& [gid, m] : means) sorted.push_back(m);
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  // The absolute floor keeps the rule from firing on numerical dust when the
  // scene is essentially exact.
  const double threshold = std::max(opts.prune_factor * median, opts.prune_floor_px);

  for (const auto& [gid, m] : means) {
    if (m > threshold) out.removed_global_ids.push_back(gid);
  }
  if (out.removed_global_ids.empty()) {
    out.observations = obs;
    return out;
  }

  auto removed = [&](int gid) {
    return std::find(out.removed_global_ids.begin(), out.removed_global_ids.end(), gid) !=
           out.removed_global_ids.end();
  };
  for (const auto& o : obs) {
    if (!removed(o.global_person)) out.observations.push_back(o);
  }
  for (auto it = out.state.association.ids.begin(); it != out.state.association.ids.end();) {
    if (removed(it->second)) {
      it = out.state.association.ids.erase(it);
    } else {
      ++it;
    }
  }
  out.state.points = estimate_motion(out.observations, out.state);
  return out;
}

StbaRounds iterate_stba(const BundleState& state, const std::vector<Observation2D>& obs, const StbaOptions& opts) {
  StbaRounds out;
  out.state = state;
  out.observations = obs;
  if (opts.max_rounds <= 0) return out;

  // Geometrically inconsistent persons are dropped before the first bundle
  // so gross association outliers cannot warp it; a no-op on clean scenes.
  {
    PruneResult pre = prune_associations(out.state, out.observations, opts);
    if (!pre.removed_global_ids.empty()) {
      out.removed_global_ids = pre.removed_global_ids;
      out.state = std::move(pre.state);
      out.observations = std::move(pre.observations);
    }
  }

  for (int round = 0; round < opts.max_rounds; ++round) {
    ++out.rounds;
    StbaSolveInfo info;
    out.state = solve_stba(out.state, out.observations, opts, &info);
    out.round_costs.push_back(info.final_cost);
    PruneResult pr = prune_associations(out.state, out.observations, opts);
    if (pr.removed_global_ids.empty()) break;
    out.removed_global_ids.insert(out.removed_global_ids.end(), pr.removed_global_ids.begin(),
                                  pr.removed_global_ids.end());
    out.state = std::move(pr.state);
    out.observations = std::move(pr.observations);
  }
  return out;
}

}  // namespace stcal
