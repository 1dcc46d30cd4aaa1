#include "stcal/synth.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "stcal/errors.hpp"
#include "stcal/rng.hpp"
#include "stcal/so3.hpp"

namespace stcal {

double noise_calibration(double depth, double focal, double sigma_px) {
  return sigma_px * depth / focal;
}

namespace {

// Approximate bone lengths (meters) for the 17-joint convention; the root has
// no bone.
std::vector<double> default_bone_lengths(const Skeleton& skel) {
  std::vector<double> len(static_cast<std::size_t>(skel.size()), 0.25);
  if (skel.size() == 17) {
    len = {0.0,  0.13, 0.45, 0.45, 0.13, 0.45, 0.45, 0.24, 0.25, 0.12, 0.12, 0.15, 0.28, 0.25, 0.15, 0.28, 0.25};
  }
  return len;
}

// Rest directions pointing limbs outward so random drift stays human-ish.
std::vector<Eigen::Vector3d> rest_directions(const Skeleton& skel) {
  std::vector<Eigen::Vector3d> dirs(static_cast<std::size_t>(skel.size()), Eigen::Vector3d(0, 0, -1));
  if (skel.size() == 17) {
    dirs[1] = {-1, 0, 0};  dirs[2] = {0, 0, -1};  dirs[3] = {0, 0, -1};
    dirs[4] = {1, 0, 0};   dirs[5] = {0, 0, -1};  dirs[6] = {0, 0, -1};
    dirs[7] = {0, 0, 1};   dirs[8] = {0, 0, 1};   dirs[9] = {0, 0, 1};
    dirs[10] = {0, 0, 1};
    dirs[11] = {1, 0, 0};  dirs[12] = {0.3, 0, -1};  dirs[13] = {0.3, 0, -1};
    dirs[14] = {-1, 0, 0}; dirs[15] = {-0.3, 0, -1}; dirs[16] = {-0.3, 0, -1};
    for (auto& d : dirs) d.normalize();
  }
  return dirs;
}

CameraPose look_at(const Eigen::Vector3d& position, const Eigen::Vector3d& target) {
  const Eigen::Vector3d forward = (target - position).normalized();
  Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ());
  if (right.norm() < 1e-9) right = Eigen::Vector3d::UnitX();
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right).normalized() * -1.0;
  Eigen::Matrix3d R;
  R.row(0) = right.transpose();
  R.row(1) = (-down).transpose();  // image y grows downward
  R.row(2) = forward.transpose();
  CameraPose pose;
  pose.R = R;
  pose.t = -R * position;
  return pose;
}

struct MotionKnots {
  // [person][knot][joint] world joint positions; knot k sits at time k*spacing + t_base.
  std::vector<std::vector<std::vector<Eigen::Vector3d>>> joints;
  int t_base = 0;
  int spacing = 5;

  Eigen::Vector3d sample(int person, double t, int joint) const {
    const double u = (t - static_cast<double>(t_base)) / static_cast<double>(spacing);
    const int k0 = std::clamp(static_cast<int>(std::floor(u)), 0,
                              static_cast<int>(joints[static_cast<std::size_t>(person)].size()) - 2);
    const double a = u - static_cast<double>(k0);
    const auto& p0 = joints[static_cast<std::size_t>(person)][static_cast<std::size_t>(k0)][static_cast<std::size_t>(joint)];
    const auto& p1 = joints[static_cast<std::size_t>(person)][static_cast<std::size_t>(k0 + 1)][static_cast<std::size_t>(joint)];
    return (1.0 - a) * p0 + a * p1;
  }
};

MotionKnots make_motion(const SceneSpec& spec, Rng& rng) {
  const int S = spec.skeleton.size();
  const auto lengths = default_bone_lengths(spec.skeleton);
  const auto rest = rest_directions(spec.skeleton);

  double max_abs_offset = 0.0;
  for (double d : spec.offsets) max_abs_offset = std::max(max_abs_offset, std::abs(d));
  const int margin = static_cast<int>(std::ceil(max_abs_offset)) + spec.knot_spacing;
  const int t_base = -((margin / spec.knot_spacing) + 1) * spec.knot_spacing;
  const int t_end = spec.n_frames + margin;
  const int n_knots = (t_end - t_base) / spec.knot_spacing + 2;

  MotionKnots knots;
  knots.t_base = t_base;
  knots.spacing = spec.knot_spacing;
  knots.joints.resize(static_cast<std::size_t>(spec.n_people));

  // Bone direction histories per person, possibly cloned from another person.
  std::vector<std::vector<std::vector<Eigen::Vector3d>>> bone_dirs(
      static_cast<std::size_t>(spec.n_people));
  std::vector<std::vector<Eigen::Vector3d>> roots(static_cast<std::size_t>(spec.n_people));

  for (int p = 0; p < spec.n_people; ++p) {
    Rng prng = rng.fork(static_cast<std::uint64_t>(p) + 101);

    // Root: OU-smoothed velocity random walk inside the roaming disc. The
    // sqrt(1-s^2) drive keeps the equilibrium speed at root_speed.
    const double ang0 = prng.uniform(0.0, 2.0 * M_PI);
    const double rad0 = spec.area_radius * std::sqrt(prng.uniform());
    Eigen::Vector3d root(rad0 * std::cos(ang0), rad0 * std::sin(ang0), 0.95);
    Eigen::Vector3d vel = spec.root_speed * prng.normal3();
    vel.z() *= 0.1;
    const double drive = std::sqrt(1.0 - spec.smoothness * spec.smoothness);
    auto& rk = roots[static_cast<std::size_t>(p)];
    for (int k = 0; k < n_knots; ++k) {
      rk.push_back(root);
      Eigen::Vector3d kick = prng.normal3();
      kick.z() *= 0.1;  // mostly planar
      vel = spec.smoothness * vel + drive * spec.root_speed * kick;
      // Pull back toward the disc center so people stay in view.
      const Eigen::Vector3d planar(root.x(), root.y(), 0.0);
      if (planar.norm() > spec.area_radius) vel -= 0.2 * spec.root_speed * planar.normalized();
      root += vel * static_cast<double>(spec.knot_spacing);
    }

    // Bones: OU-smoothed angular drift around personalized rest directions.
    auto& bd = bone_dirs[static_cast<std::size_t>(p)];
    bd.assign(static_cast<std::size_t>(n_knots), std::vector<Eigen::Vector3d>(static_cast<std::size_t>(S)));
    std::vector<Eigen::Vector3d> dir(static_cast<std::size_t>(S));
    std::vector<Eigen::Vector3d> avel(static_cast<std::size_t>(S), Eigen::Vector3d::Zero());
    for (int j = 0; j < S; ++j) {
      dir[static_cast<std::size_t>(j)] = exp_map(prng.normal3() * 0.25) * rest[static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < S; ++j) {
      avel[static_cast<std::size_t>(j)] = spec.bone_rate * prng.normal3();
    }
    for (int k = 0; k < n_knots; ++k) {
      for (int j = 0; j < S; ++j) {
        bd[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] = dir[static_cast<std::size_t>(j)];
        Eigen::Vector3d& w = avel[static_cast<std::size_t>(j)];
        w = spec.smoothness * w + drive * spec.bone_rate * prng.normal3();
        dir[static_cast<std::size_t>(j)] = exp_map(w) * dir[static_cast<std::size_t>(j)];
      }
    }
  }

  // Motion cloning: copy bone histories with a fixed small perturbation.
  for (int p = 0; p < spec.n_people; ++p) {
    if (p >= static_cast<int>(spec.clone_motion_of.size())) break;
    const int src = spec.clone_motion_of[static_cast<std::size_t>(p)];
    if (src < 0 || src == p || src >= spec.n_people) continue;
    Rng jrng = rng.fork(static_cast<std::uint64_t>(p) + 501);
    const Eigen::Matrix3d wobble = exp_map(jrng.direction() * spec.clone_jitter);
    auto& dst = bone_dirs[static_cast<std::size_t>(p)];
    const auto& ref = bone_dirs[static_cast<std::size_t>(src)];
    for (std::size_t k = 0; k < dst.size(); ++k) {
      for (std::size_t j = 0; j < dst[k].size(); ++j) dst[k][j] = wobble * ref[k][j];
    }
  }

  // Assemble world joints per knot following the kinematic tree.
  for (int p = 0; p < spec.n_people; ++p) {
    auto& pj = knots.joints[static_cast<std::size_t>(p)];
    pj.assign(static_cast<std::size_t>(n_knots), std::vector<Eigen::Vector3d>(static_cast<std::size_t>(S)));
    for (int k = 0; k < n_knots; ++k) {
      for (int j = 0; j < S; ++j) {
        if (spec.skeleton.parents[static_cast<std::size_t>(j)] < 0) {
          pj[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] = roots[static_cast<std::size_t>(p)][static_cast<std::size_t>(k)];
        } else {
          const int parent = spec.skeleton.parents[static_cast<std::size_t>(j)];
          pj[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] =
              pj[static_cast<std::size_t>(k)][static_cast<std::size_t>(parent)] +
              lengths[static_cast<std::size_t>(j)] *
                  bone_dirs[static_cast<std::size_t>(p)][static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
        }
      }
    }
  }
  return knots;
}

}  // namespace

SyntheticScene generate(const SceneSpec& spec) {
  if (spec.n_cameras < 1 || spec.n_people < 1 || spec.n_frames < 2 || spec.knot_spacing < 1) {
    throw InvalidSpec("scene needs >= 1 camera, >= 1 person, >= 2 frames");
  }
  if (!spec.offsets.empty() && static_cast<int>(spec.offsets.size()) != spec.n_cameras) {
    throw InvalidSpec("offsets size must match camera count");
  }
  if (!spec.visibility.empty() && static_cast<int>(spec.visibility.size()) != spec.n_cameras) {
    throw InvalidSpec("visibility must be per camera");
  }
  spec.skeleton.validate();

  Rng rng(spec.seed);
  SyntheticScene scene;

  std::vector<double> offsets(static_cast<std::size_t>(spec.n_cameras), 0.0);
  if (!spec.offsets.empty()) offsets = spec.offsets;

  // Camera ring.
  for (int c = 0; c < spec.n_cameras; ++c) {
    Rng crng = rng.fork(static_cast<std::uint64_t>(c) + 11);
    const double ang = 2.0 * M_PI * c / spec.n_cameras + crng.uniform(-0.1, 0.1);
    const double height = spec.ring_height + crng.uniform(-spec.height_jitter, spec.height_jitter);
    const Eigen::Vector3d pos(spec.ring_radius * std::cos(ang), spec.ring_radius * std::sin(ang), height);
    scene.gt.poses.push_back(look_at(pos, Eigen::Vector3d(0, 0, 1.0)));
    scene.intrinsics.push_back(spec.intrinsics);
  }
  scene.gt.offsets = offsets;

  const MotionKnots motion = make_motion(spec, rng);
  const int S = spec.skeleton.size();

  // Ground-truth world tracks at integer reference ticks.
  scene.gt.world_tracks.assign(static_cast<std::size_t>(spec.n_people), {});
  for (int p = 0; p < spec.n_people; ++p) {
    auto& wt = scene.gt.world_tracks[static_cast<std::size_t>(p)];
    wt.resize(static_cast<std::size_t>(spec.n_frames));
    for (int f = 0; f < spec.n_frames; ++f) {
      wt[static_cast<std::size_t>(f)].resize(static_cast<std::size_t>(S));
      for (int j = 0; j < S; ++j) {
        wt[static_cast<std::size_t>(f)][static_cast<std::size_t>(j)] = motion.sample(p, static_cast<double>(f), j);
      }
    }
  }

  const double noise_sigma = spec.pixel_sigma;
  const double kp_sigma = spec.keypoint_sigma >= 0.0 ? spec.keypoint_sigma : (noise_sigma > 0.0 ? 1.0 : 0.0);
  const double f_mean = spec.intrinsics.mean_focal();

  scene.gt.person_map.resize(static_cast<std::size_t>(spec.n_cameras));
  for (int c = 0; c < spec.n_cameras; ++c) {
    ViewTracks view;
    view.camera_id = c;
    view.skeleton = spec.skeleton;

    Rng crng = rng.fork(static_cast<std::uint64_t>(c) + 1001);

    // Seeded local person id permutation.
    std::vector<int> perm(static_cast<std::size_t>(spec.n_people));
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = spec.n_people - 1; i > 0; --i) {
      const int j = static_cast<int>(crng.index(static_cast<std::uint64_t>(i) + 1));
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }

    for (int p = 0; p < spec.n_people; ++p) {
      if (!spec.visibility.empty() && !spec.visibility[static_cast<std::size_t>(c)][static_cast<std::size_t>(p)]) {
        continue;
      }
      const int pid = perm[static_cast<std::size_t>(p)];
      scene.gt.person_map[static_cast<std::size_t>(c)][pid] = p;

      PersonTrack track;
      track.person_id = pid;
      track.start_frame = 0;
      Rng prng = crng.fork(static_cast<std::uint64_t>(p) + 71);

      for (int frame = 0; frame < spec.n_frames; ++frame) {
        const double t_ref = static_cast<double>(frame) - offsets[static_cast<std::size_t>(c)];
        PoseFrame pf;
        pf.person_id = pid;
        pf.frame = frame;
        pf.joints.resize(static_cast<std::size_t>(S));
        pf.valid.assign(static_cast<std::size_t>(S), true);
        if (spec.emit_keypoints) pf.pixels.resize(static_cast<std::size_t>(S));

        for (int j = 0; j < S; ++j) {
          const Eigen::Vector3d Xw = motion.sample(p, t_ref, j);
          const Eigen::Vector3d Xc = scene.gt.poses[static_cast<std::size_t>(c)].apply(Xw);
          const double Z = Xc.z();

          // Exact pixel of the ground-truth point.
          const double u = spec.intrinsics.fx * Xc.x() / Z + spec.intrinsics.cx;
          const double v = spec.intrinsics.fy * Xc.y() / Z + spec.intrinsics.cy;

          // 3D noise: pixel-plane perturbation re-lifted at a noisy depth, so
          // same-view reprojection noise is exactly noise_sigma.
          const double nu = noise_sigma * prng.normal();
          const double nv = noise_sigma * prng.normal();
          const double nz = spec.depth_sigma_scale * noise_calibration(Z, f_mean, noise_sigma) * prng.normal();
          const double Zn = std::max(Z + nz, 0.05 * Z);
          const Eigen::Vector3d Xn(Zn * (u + nu - spec.intrinsics.cx) / spec.intrinsics.fx,
                                   Zn * (v + nv - spec.intrinsics.cy) / spec.intrinsics.fy, Zn);
          pf.joints[static_cast<std::size_t>(j)] = Xn;

          if (spec.emit_keypoints) {
            pf.pixels[static_cast<std::size_t>(j)] =
                Eigen::Vector2d(u + kp_sigma * prng.normal(), v + kp_sigma * prng.normal());
          }
          if (spec.joint_dropout > 0.0 && prng.uniform() < spec.joint_dropout) {
            pf.valid[static_cast<std::size_t>(j)] = false;
          }
        }
        track.frames.push_back(std::move(pf));
      }
      view.tracks.push_back(std::move(track));
    }

    // Camera-local person order should not leak the gt order.
    std::sort(view.tracks.begin(), view.tracks.end(),
              [](const PersonTrack& a, const PersonTrack& b) { return a.person_id < b.person_id; });
    scene.views.push_back(std::move(view));
  }

  return scene;
}

}  // namespace stcal
