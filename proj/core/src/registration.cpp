#include "stcal/registration.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "stcal/errors.hpp"
#include "stcal/hungarian.hpp"
#include "stcal/rng.hpp"
#include "stcal/so3.hpp"

namespace stcal {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kUnmatchableCost = 1e9;
}  // namespace

// ---------------------------------------------------------------------------
// ViewTracks

std::pair<int, int> ViewTracks::frame_span() const {
  if (tracks.empty()) return {0, 0};
  int lo = tracks.front().start_frame;
  int hi = tracks.front().end_frame();
  for (const auto& t : tracks) {
    lo = std::min(lo, t.start_frame);
    hi = std::max(hi, t.end_frame());
  }
  return {lo, hi};
}

std::vector<int> ViewTracks::person_ids() const {
  std::vector<int> ids;
  for (const auto& t : tracks) {
    if (std::find(ids.begin(), ids.end(), t.person_id) == ids.end()) ids.push_back(t.person_id);
  }
  return ids;
}

const PersonTrack* ViewTracks::segment_at(int person_id, int frame) const {
  for (const auto& t : tracks) {
    if (t.person_id == person_id && t.contains(frame)) return &t;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// OrientationWindows

OrientationWindows OrientationWindows::gather(const ViewTracks& view, const std::vector<int>& starts, int T) {
  view.skeleton.validate();
  OrientationWindows out;
  out.n_joints_ = view.skeleton.size();
  out.T_ = T;
  out.window_starts_ = starts;

  const std::vector<int> all_ids = view.person_ids();
  const int W = static_cast<int>(starts.size());
  const int J = out.n_joints_;

  for (int pid : all_ids) {
    const std::size_t base = out.dirs_.size();
    const std::size_t block = static_cast<std::size_t>(W) * static_cast<std::size_t>(T) * static_cast<std::size_t>(J);
    out.dirs_.resize(base + block, Eigen::Vector3d::Zero());
    out.positions_.resize(base + block, Eigen::Vector3d::Zero());
    out.valid_.resize(base + block, 0);
    out.pos_valid_.resize(base + block, 0);
    const std::size_t sbase = out.resultant_.size();
    out.resultant_.resize(sbase + static_cast<std::size_t>(W) * static_cast<std::size_t>(J), Eigen::Vector3d::Zero());
    out.counts_.resize(sbase + static_cast<std::size_t>(W) * static_cast<std::size_t>(J), 0.0);

    bool any_valid = false;
    for (int w = 0; w < W; ++w) {
      for (int f = 0; f < T; ++f) {
        const int frame = starts[static_cast<std::size_t>(w)] + f;
        const PersonTrack* seg = view.segment_at(pid, frame);
        if (seg == nullptr) continue;
        const OrientedPointSet ops = encode_orientations(seg->at(frame), view.skeleton);
        const PoseFrame& pf = seg->at(frame);
        for (int j = 0; j < J; ++j) {
          const std::size_t idx =
              base + (static_cast<std::size_t>(w) * static_cast<std::size_t>(T) + static_cast<std::size_t>(f)) *
                         static_cast<std::size_t>(J) +
              static_cast<std::size_t>(j);
          if (pf.valid[static_cast<std::size_t>(j)]) {
            out.positions_[idx] = pf.joints[static_cast<std::size_t>(j)];
            out.pos_valid_[idx] = 1;
          }
          if (ops.valid[static_cast<std::size_t>(j)]) {
            out.dirs_[idx] = ops.orientations[static_cast<std::size_t>(j)];
            out.valid_[idx] = 1;
            any_valid = true;
            const std::size_t sidx =
                sbase + static_cast<std::size_t>(w) * static_cast<std::size_t>(J) + static_cast<std::size_t>(j);
            out.resultant_[sidx] += ops.orientations[static_cast<std::size_t>(j)];
            out.counts_[sidx] += 1.0;
          }
        }
      }
    }

    if (any_valid) {
      out.person_ids_.push_back(pid);
    } else {
      out.dirs_.resize(base);
      out.positions_.resize(base);
      out.valid_.resize(base);
      out.pos_valid_.resize(base);
      out.resultant_.resize(sbase);
      out.counts_.resize(sbase);
    }
  }
  return out;
}

OrientationWindows OrientationWindows::subset_persons(const std::vector<int>& person_rows) const {
  OrientationWindows out;
  out.n_joints_ = n_joints_;
  out.T_ = T_;
  out.window_starts_ = window_starts_;
  const std::size_t block =
      static_cast<std::size_t>(n_windows()) * static_cast<std::size_t>(T_) * static_cast<std::size_t>(n_joints_);
  const std::size_t sblock = static_cast<std::size_t>(n_windows()) * static_cast<std::size_t>(n_joints_);
  for (int p : person_rows) {
    out.person_ids_.push_back(person_ids_[static_cast<std::size_t>(p)]);
    const std::size_t src = static_cast<std::size_t>(p) * block;
    out.dirs_.insert(out.dirs_.end(), dirs_.begin() + static_cast<std::ptrdiff_t>(src),
                     dirs_.begin() + static_cast<std::ptrdiff_t>(src + block));
    out.positions_.insert(out.positions_.end(), positions_.begin() + static_cast<std::ptrdiff_t>(src),
                          positions_.begin() + static_cast<std::ptrdiff_t>(src + block));
    out.valid_.insert(out.valid_.end(), valid_.begin() + static_cast<std::ptrdiff_t>(src),
                      valid_.begin() + static_cast<std::ptrdiff_t>(src + block));
    out.pos_valid_.insert(out.pos_valid_.end(), pos_valid_.begin() + static_cast<std::ptrdiff_t>(src),
                          pos_valid_.begin() + static_cast<std::ptrdiff_t>(src + block));
    const std::size_t ssrc = static_cast<std::size_t>(p) * sblock;
    out.resultant_.insert(out.resultant_.end(), resultant_.begin() + static_cast<std::ptrdiff_t>(ssrc),
                          resultant_.begin() + static_cast<std::ptrdiff_t>(ssrc + sblock));
    out.counts_.insert(out.counts_.end(), counts_.begin() + static_cast<std::ptrdiff_t>(ssrc),
                       counts_.begin() + static_cast<std::ptrdiff_t>(ssrc + sblock));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Source model

SourceModel fit_source_model(const OrientationWindows& source) {
  SourceModel model;
  model.n_joints = source.n_joints();
  model.n_windows = source.n_windows();
  model.person_ids = source.person_ids();
  const int P = source.n_persons();
  const std::size_t total = static_cast<std::size_t>(P) * static_cast<std::size_t>(model.n_windows) *
                            static_cast<std::size_t>(model.n_joints);
  model.components.assign(total, VmfComponent{});
  model.component_valid.assign(total, 0);
  model.pi = Eigen::VectorXd::Constant(P, P > 0 ? 1.0 / P : 0.0);

  std::vector<Eigen::Vector3d> dirs;
  for (int p = 0; p < P; ++p) {
    for (int w = 0; w < model.n_windows; ++w) {
      for (int j = 0; j < model.n_joints; ++j) {
        dirs.clear();
        for (int f = 0; f < source.frames_per_window(); ++f) {
          if (source.orient_valid(p, w, f, j)) dirs.push_back(source.orientation(p, w, f, j));
        }
        if (dirs.empty()) continue;
        const VmfFit fit = vmf_fit_mle(dirs);
        VmfComponent& c = model.components[model.at(p, w, j)];
        c.mu = fit.mu;
        c.kappa = fit.kappa;
        c.pi = model.pi(p);
        model.component_valid[model.at(p, w, j)] = 1;
      }
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// E-step quantities

Eigen::MatrixXd pair_log_likelihoods(const OrientationWindows& targets, const SourceModel& model,
                                     const Eigen::Matrix3d& R) {
  const int Np = targets.n_persons();
  const int Ns = model.n_persons();
  Eigen::MatrixXd logits(Np, Ns);
  for (int ps = 0; ps < Ns; ++ps) {
    const double log_pi = std::log(model.pi(ps));
    for (int pt = 0; pt < Np; ++pt) {
      double acc = log_pi;
      for (int w = 0; w < model.n_windows; ++w) {
        for (int j = 0; j < model.n_joints; ++j) {
          if (!model.component_valid[model.at(ps, w, j)]) continue;
          const double n = targets.count(pt, w, j);
          if (n <= 0.0) continue;
          const VmfComponent& c = model.components[model.at(ps, w, j)];
          acc += n * vmf_log_norm(c.kappa) + c.kappa * (R * c.mu).dot(targets.resultant(pt, w, j));
        }
      }
      logits(pt, ps) = acc;
    }
  }
  return logits;
}

Eigen::MatrixXd responsibility_from_logits(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd gamma = logits;
  for (Eigen::Index r = 0; r < gamma.rows(); ++r) {
    const double mx = gamma.row(r).maxCoeff();
    if (!std::isfinite(mx)) {
      gamma.row(r).setConstant(1.0 / static_cast<double>(gamma.cols()));
      continue;
    }
    const Eigen::ArrayXd e = (gamma.row(r).array() - mx).exp();
    gamma.row(r) = (e / e.sum()).matrix();
  }
  return gamma;
}

Eigen::MatrixXd compute_responsibility(const OrientationWindows& targets, const SourceModel& model,
                                       const Eigen::Matrix3d& R) {
  return responsibility_from_logits(pair_log_likelihoods(targets, model, R));
}

double observed_log_likelihood(const Eigen::MatrixXd& logits) {
  double ll = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    if (!std::isfinite(mx)) {
      ll += mx;
      continue;
    }
    ll += mx + std::log((logits.row(r).array() - mx).exp().sum());
  }
  return ll;
}

namespace {

// Expected complete-data objective for a fixed responsibility.
double soft_objective(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& gamma) {
  double q = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      const double g = gamma(r, c);
      if (g > 0.0) q += g * logits(r, c);
    }
  }
  return q;
}

}  // namespace

// ---------------------------------------------------------------------------
// M-step: rotation ascent

RotationGradient rotation_gradient(const OrientationWindows& targets, const SourceModel& model,
                                   const Eigen::Matrix3d& R, const Eigen::MatrixXd& gamma) {
  RotationGradient out;
  const int Np = targets.n_persons();
  const int Ns = model.n_persons();
  for (int ps = 0; ps < Ns; ++ps) {
    for (int w = 0; w < model.n_windows; ++w) {
      for (int j = 0; j < model.n_joints; ++j) {
        if (!model.component_valid[model.at(ps, w, j)]) continue;
        const VmfComponent& c = model.components[model.at(ps, w, j)];
        const Eigen::Vector3d rmu = R * c.mu;
        for (int pt = 0; pt < Np; ++pt) {
          const double g = gamma(pt, ps);
          if (g <= 0.0) continue;
          const double n = targets.count(pt, w, j);
          if (n <= 0.0) continue;
          out.g += g * c.kappa * rmu.cross(targets.resultant(pt, w, j));
          out.total_weight += g * c.kappa * n;
        }
      }
    }
  }
  return out;
}

namespace {

struct AscentOutcome {
  Eigen::Matrix3d R;
  double used_step = 0.0;  // absolute tangent step actually applied
  bool moved = false;
  double grad_norm = 0.0;
  double weight = 0.0;
};

AscentOutcome ascent_backtrack(const OrientationWindows& targets, const SourceModel& model, const Eigen::Matrix3d& R,
                               const Eigen::MatrixXd& gamma, double abs_step, const EmOptions& opts) {
  AscentOutcome out;
  out.R = R;
  const RotationGradient grad = rotation_gradient(targets, model, R, gamma);
  out.grad_norm = grad.g.norm();
  out.weight = grad.total_weight;
  if (grad.total_weight <= 0.0 || out.grad_norm <= opts.tol_grad * grad.total_weight) {
    return out;  // stationary
  }

  const double q0 = soft_objective(pair_log_likelihoods(targets, model, R), gamma);
  double s = abs_step;
  for (int h = 0; h <= opts.max_halvings; ++h) {
    const Eigen::Matrix3d Rn = exp_map(s * grad.g) * R;
    const double q = soft_objective(pair_log_likelihoods(targets, model, Rn), gamma);
    if (q > q0) {
      out.R = Rn;
      out.used_step = s;
      out.moved = true;
      return out;
    }
    s *= 0.5;
  }
  return out;  // no improving step; leave R unchanged
}

}  // namespace

Eigen::Matrix3d rotation_ascent_step(const OrientationWindows& targets, const SourceModel& model,
                                     const Eigen::Matrix3d& R, const Eigen::MatrixXd& gamma, double step,
                                     const EmOptions& opts) {
  // Normalize the nominal step by the gradient's natural weight so that the
  // allotted halvings suffice at any concentration scale.
  const RotationGradient grad = rotation_gradient(targets, model, R, gamma);
  if (grad.total_weight <= 0.0) return R;
  return ascent_backtrack(targets, model, R, gamma, step / grad.total_weight, opts).R;
}

Eigen::VectorXd update_mixing(const Eigen::MatrixXd& gamma) {
  Eigen::VectorXd pi = gamma.colwise().sum();
  const double total = pi.sum();
  if (total > 0.0) pi /= total;
  return pi;
}

// ---------------------------------------------------------------------------
// Association extraction

AssociationResult extract_association(const OrientationWindows& source, const OrientationWindows& targets,
                                      const Eigen::Matrix3d& R, double theta_match) {
  const int Np = targets.n_persons();
  const int Ns = source.n_persons();
  AssociationResult out;
  out.A = Eigen::MatrixXd::Zero(Np, Ns);
  out.cost = Eigen::MatrixXd::Constant(Np, Ns, kUnmatchableCost);
  if (Np == 0 || Ns == 0) return out;

  const int W = std::min(source.n_windows(), targets.n_windows());
  const int T = std::min(source.frames_per_window(), targets.frames_per_window());
  const int J = std::min(source.n_joints(), targets.n_joints());

  for (int pt = 0; pt < Np; ++pt) {
    for (int ps = 0; ps < Ns; ++ps) {
      double acc = 0.0;
      double n = 0.0;
      for (int w = 0; w < W; ++w) {
        for (int f = 0; f < T; ++f) {
          for (int j = 0; j < J; ++j) {
            if (!targets.orient_valid(pt, w, f, j) || !source.orient_valid(ps, w, f, j)) continue;
            const double d = targets.orientation(pt, w, f, j).dot(R * source.orientation(ps, w, f, j));
            acc += std::acos(std::clamp(d, -1.0, 1.0));
            n += 1.0;
          }
        }
      }
      if (n > 0.0) out.cost(pt, ps) = acc / n;
    }
  }

  const std::vector<int> match = solve_assignment(out.cost);
  double total = 0.0;
  for (int pt = 0; pt < Np; ++pt) {
    const int ps = match[static_cast<std::size_t>(pt)];
    if (ps < 0) continue;
    if (out.cost(pt, ps) > theta_match) continue;  // gate
    out.A(pt, ps) = 1.0;
    out.pairs.emplace_back(pt, ps);
    total += out.cost(pt, ps);
  }
  out.n_matched = static_cast<int>(out.pairs.size());
  out.mean_cost = out.n_matched > 0 ? total / out.n_matched : kInf;
  const int potential = std::min(Np, Ns);
  out.score = out.n_matched > 0
                  ? (total + theta_match * static_cast<double>(potential - out.n_matched)) / potential
                  : kInf;
  return out;
}

// ---------------------------------------------------------------------------
// EM driver

RegistrationResult em_register(const OrientationWindows& source, const OrientationWindows& targets,
                               const Eigen::Matrix3d& init_R, const EmOptions& opts) {
  if (source.n_persons() == 0 || targets.n_persons() == 0) {
    throw NoValidData("em_register: a view has no valid orientations");
  }

  SourceModel model = fit_source_model(source);
  Eigen::Matrix3d R = orthonormalize(init_R);

  Eigen::MatrixXd logits = pair_log_likelihoods(targets, model, R);
  Eigen::MatrixXd gamma = responsibility_from_logits(logits);
  double ll = observed_log_likelihood(logits);

  RegistrationResult result;
  result.loglik_history.push_back(ll);
  double best_ll = ll;
  Eigen::Matrix3d best_R = R;
  Eigen::MatrixXd best_gamma = gamma;
  Eigen::VectorXd best_pi = model.pi;

  double prev_ll = ll;
  for (int it = 1; it <= opts.max_outer; ++it) {
    result.iterations = it;

    // M-step: rotation ascent to stationarity under the current gamma.
    double abs_step = -1.0;
    for (int k = 0; k < opts.max_inner; ++k) {
      AscentOutcome o{};
      if (abs_step <= 0.0) {
        const RotationGradient grad = rotation_gradient(targets, model, R, gamma);
        if (grad.total_weight <= 0.0) break;
        o = ascent_backtrack(targets, model, R, gamma, opts.initial_step / grad.total_weight, opts);
      } else {
        o = ascent_backtrack(targets, model, R, gamma, abs_step, opts);
      }
      if (!o.moved) break;
      R = o.R;
      abs_step = o.used_step * 4.0;  // grow again after a cautious accept
    }
    R = orthonormalize(R);

    // M-step: mixing proportions.
    model.pi = update_mixing(gamma);

    // E-step.
    logits = pair_log_likelihoods(targets, model, R);
    gamma = responsibility_from_logits(logits);
    ll = observed_log_likelihood(logits);
    result.loglik_history.push_back(ll);

    if (ll > best_ll) {
      best_ll = ll;
      best_R = R;
      best_gamma = gamma;
      best_pi = model.pi;
    }
    if (std::abs(ll - prev_ll) <= opts.tol_loglik * (1.0 + std::abs(prev_ll))) {
      result.converged = true;
      break;
    }
    prev_ll = ll;
  }

  result.rotation = best_R;
  result.responsibility = best_gamma;
  result.pi = best_pi;
  result.log_likelihood = best_ll;
  result.association = extract_association(source, targets, best_R, opts.theta_match);
  return result;
}

std::vector<Eigen::Matrix3d> default_rotation_seeds() {
  std::vector<Eigen::Matrix3d> seeds;
  seeds.push_back(Eigen::Matrix3d::Identity());
  const double half = M_PI;
  const double quarter = M_PI / 2.0;
  const std::array<Eigen::Vector3d, 3> axes = {Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY(),
                                               Eigen::Vector3d::UnitZ()};
  for (const auto& ax : axes) {
    seeds.push_back(exp_map(ax * quarter));
    seeds.push_back(exp_map(ax * half));
    seeds.push_back(exp_map(ax * -quarter));
  }
  seeds.push_back(exp_map(Eigen::Vector3d(1, 1, 0).normalized() * half));
  seeds.push_back(exp_map(Eigen::Vector3d(1, 0, 1).normalized() * half));
  return seeds;
}

// ---------------------------------------------------------------------------
// Pairwise drivers

std::vector<int> window_starts_for_offset(const ViewTracks& source, const ViewTracks& target, int delta, int T,
                                          int stride) {
  const auto [s0, s1] = source.frame_span();
  const auto [t0, t1] = target.frame_span();
  const int lo = std::max(s0, t0 - delta);
  const int hi = std::min(s1, t1 - delta) - T;  // last admissible start
  std::vector<int> starts;
  for (int w = lo; w <= hi; w += std::max(1, stride)) starts.push_back(w);
  return starts;
}

namespace {

bool better_candidate(double score, int n_matched, int index, double best_score, int best_matched, int best_index) {
  if (score != best_score) return score < best_score;
  if (n_matched != best_matched) return n_matched > best_matched;
  return index < best_index;
}

void collect_bearings(const OrientationWindows& source, const OrientationWindows& targets, PairRegistration& pr) {
  pr.bearing_pairs.clear();
  pr.bearing_weights.clear();
  const int W = std::min(source.n_windows(), targets.n_windows());
  const int T = std::min(source.frames_per_window(), targets.frames_per_window());
  const int J = std::min(source.n_joints(), targets.n_joints());
  for (const auto& [pt, ps] : pr.association.pairs) {
    const double weight = pr.em.responsibility.size() > 0 ? pr.em.responsibility(pt, ps) : 1.0;
    for (int w = 0; w < W; ++w) {
      for (int f = 0; f < T; ++f) {
        for (int j = 0; j < J; ++j) {
          if (!targets.position_valid(pt, w, f, j) || !source.position_valid(ps, w, f, j)) continue;
          const Eigen::Vector3d xt = targets.position(pt, w, f, j);
          const Eigen::Vector3d xs = source.position(ps, w, f, j);
          const double nt = xt.norm();
          const double ns = xs.norm();
          if (nt <= 0.0 || ns <= 0.0) continue;
          pr.bearing_pairs.emplace_back(xt / nt, xs / ns);
          pr.bearing_weights.push_back(weight);
        }
      }
    }
  }
}

}  // namespace

PairRegistration register_at_offset(const ViewTracks& source, const ViewTracks& target, int delta,
                                    const RegistrationOptions& opts) {
  const std::vector<int> starts =
      window_starts_for_offset(source, target, delta, opts.window_length, opts.window_stride);
  if (starts.empty()) {
    throw InsufficientOverlap("no complete window at offset " + std::to_string(delta));
  }
  std::vector<int> tgt_starts(starts.size());
  std::transform(starts.begin(), starts.end(), tgt_starts.begin(), [delta](int s) { return s + delta; });

  const OrientationWindows src_w = OrientationWindows::gather(source, starts, opts.window_length);
  const OrientationWindows tgt_w = OrientationWindows::gather(target, tgt_starts, opts.window_length);

  RegistrationResult best;
  double best_score = kInf;
  int best_matched = -1;
  int best_index = std::numeric_limits<int>::max();
  for (int k = 0; k < static_cast<int>(opts.init_rotations.size()); ++k) {
    RegistrationResult res = em_register(src_w, tgt_w, opts.init_rotations[static_cast<std::size_t>(k)], opts.em);
    const double score = res.association.score;
    if (better_candidate(score, res.association.n_matched, k, best_score, best_matched, best_index)) {
      best = std::move(res);
      best_score = score;
      best_matched = best.association.n_matched;
      best_index = k;
    }
  }

  PairRegistration pr;
  pr.rotation = best.rotation;
  pr.delta = delta;
  pr.association = best.association;
  pr.source_person_ids = src_w.person_ids();
  pr.target_person_ids = tgt_w.person_ids();
  pr.score = best_score;
  pr.em = std::move(best);
  collect_bearings(src_w, tgt_w, pr);
  return pr;
}

OffsetSearchResult offset_search(const ViewTracks& source, const ViewTracks& target,
                                 const RegistrationOptions& opts) {
  for (int delta = -opts.offset_range; delta <= opts.offset_range; ++delta) {
    if (window_starts_for_offset(source, target, delta, opts.window_length, opts.window_stride).empty()) {
      throw InsufficientOverlap("offset " + std::to_string(delta) + " leaves no complete window");
    }
  }

  // Center-out scan: the full multi-start runs once at the innermost offset,
  // each further candidate warm-starts from the best rotation found so far.
  // The scan itself uses a relaxed EM tolerance; the winner is re-registered
  // at full quality below.
  std::vector<int> order;
  for (int a = 0; a <= opts.offset_range; ++a) {
    order.push_back(a);
    if (a > 0) order.push_back(-a);
  }
  RegistrationOptions scan_opts = opts;
  scan_opts.em.tol_loglik = opts.em.tol_loglik * 100.0;

  OffsetSearchResult out;
  out.scanned.resize(order.size());
  PairRegistration best_scan;
  bool have_best = false;
  int best_delta = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const int delta = order[k];
    if (have_best) {
      scan_opts.init_rotations = {best_scan.rotation};
    } else {
      scan_opts.init_rotations = opts.init_rotations;
    }
    OffsetCandidate cand;
    cand.delta = delta;
    PairRegistration reg;
    bool ok = true;
    try {
      reg = register_at_offset(source, target, delta, scan_opts);
      cand.score = reg.score;
      cand.n_matched = reg.association.n_matched;
    } catch (const NoValidData&) {
      ok = false;
    }
    out.scanned[k] = cand;
    if (!ok) continue;

    bool take = !have_best;
    if (have_best) {
      const double bs = best_scan.score;
      if (cand.score != bs) {
        take = cand.score < bs;
      } else if (std::abs(delta) != std::abs(best_delta)) {
        take = std::abs(delta) < std::abs(best_delta);
      } else {
        take = delta < best_delta;
      }
    }
    if (take) {
      best_scan = std::move(reg);
      best_delta = delta;
      have_best = true;
    }
  }
  if (!have_best) {
    throw NoValidData("offset_search: no offset produced a registration");
  }
  std::sort(out.scanned.begin(), out.scanned.end(),
            [](const OffsetCandidate& a, const OffsetCandidate& b) { return a.delta < b.delta; });

  // Final full-quality registration at the winning offset; keep the scan
  // result if it happens to score better so the reported score stays the
  // minimum over everything evaluated.
  RegistrationOptions final_opts = opts;
  final_opts.init_rotations.push_back(best_scan.rotation);
  out.best = register_at_offset(source, target, best_delta, final_opts);
  if (!(out.best.score <= best_scan.score)) {
    out.best = std::move(best_scan);
  }
  for (auto& cand : out.scanned) {
    if (cand.delta == best_delta) {
      cand.score = out.best.score;
      cand.n_matched = out.best.association.n_matched;
    }
  }
  return out;
}

namespace {

std::vector<std::vector<int>> person_subsets(const std::vector<int>& ids, int k, int max_count, std::uint64_t seed) {
  std::vector<std::vector<int>> subsets;
  const int n = static_cast<int>(ids.size());
  std::vector<int> pick(static_cast<std::size_t>(k));
  // Lexicographic enumeration of k-combinations.
  std::vector<int> c(static_cast<std::size_t>(k));
  std::iota(c.begin(), c.end(), 0);
  while (true) {
    for (int i = 0; i < k; ++i) pick[static_cast<std::size_t>(i)] = ids[static_cast<std::size_t>(c[static_cast<std::size_t>(i)])];
    subsets.push_back(pick);
    int i = k - 1;
    while (i >= 0 && c[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) break;
    ++c[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) c[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j - 1)] + 1;
  }
  if (static_cast<int>(subsets.size()) > max_count) {
    // Seeded Fisher-Yates prefix selection keeps the draw deterministic.
    Rng rng(seed);
    for (int i = 0; i < max_count; ++i) {
      const std::size_t j = static_cast<std::size_t>(i) + static_cast<std::size_t>(rng.index(subsets.size() - static_cast<std::size_t>(i)));
      std::swap(subsets[static_cast<std::size_t>(i)], subsets[j]);
    }
    subsets.resize(static_cast<std::size_t>(max_count));
  }
  return subsets;
}

ViewTracks filter_persons(const ViewTracks& view, const std::vector<int>& keep_ids) {
  ViewTracks out;
  out.camera_id = view.camera_id;
  out.skeleton = view.skeleton;
  for (const auto& t : view.tracks) {
    if (std::find(keep_ids.begin(), keep_ids.end(), t.person_id) != keep_ids.end()) out.tracks.push_back(t);
  }
  return out;
}

}  // namespace

PairRegistration ransac_register(const ViewTracks& source, const ViewTracks& target,
                                 const RegistrationOptions& opts) {
  std::vector<int> source_ids = source.person_ids();
  std::sort(source_ids.begin(), source_ids.end());
  const int n = static_cast<int>(source_ids.size());
  if (n < 2 || opts.ransac_subset < 2) {
    throw InvalidSpec("ransac_register needs >= 2 source persons and subset size >= 2");
  }
  const int k = std::min(opts.ransac_subset, n);
  const auto subsets = person_subsets(source_ids, k, opts.max_hypotheses, opts.seed);

  PairRegistration best_hyp;
  bool have = false;
  int best_index = std::numeric_limits<int>::max();
  for (int h = 0; h < static_cast<int>(subsets.size()); ++h) {
    const ViewTracks sub = filter_persons(source, subsets[static_cast<std::size_t>(h)]);
    PairRegistration reg;
    try {
      if (opts.search_offsets) {
        reg = offset_search(sub, target, opts).best;
      } else {
        reg = register_at_offset(sub, target, 0, opts);
      }
    } catch (const Error&) {
      continue;  // hypothesis unusable; keep scanning
    }
    if (!have || better_candidate(reg.score, reg.association.n_matched, h, best_hyp.score,
                                  best_hyp.association.n_matched, best_index)) {
      best_hyp = std::move(reg);
      best_index = h;
      have = true;
    }
  }
  if (!have) {
    throw NoValidData("ransac_register: every hypothesis failed");
  }
  if (best_hyp.association.pairs.empty()) {
    return best_hyp;
  }

  // Inlier refinement: unmatched target persons still soak responsibility
  // mass (rows normalize to one) and bias the rotation, so re-run the EM on
  // the matched persons of both sides, then extract the final association of
  // the hypothesized sources against the full target set. Lookalikes outside
  // the subset stay excluded by construction.
  const int delta = best_hyp.delta;
  const std::vector<int> starts =
      window_starts_for_offset(source, target, delta, opts.window_length, opts.window_stride);
  std::vector<int> tgt_starts(starts.size());
  std::transform(starts.begin(), starts.end(), tgt_starts.begin(), [delta](int s) { return s + delta; });
  const ViewTracks sub_source = filter_persons(source, best_hyp.source_person_ids);
  const OrientationWindows src_w = OrientationWindows::gather(sub_source, starts, opts.window_length);
  const OrientationWindows tgt_w = OrientationWindows::gather(target, tgt_starts, opts.window_length);

  std::vector<int> matched_target_rows;
  for (const auto& [pt, ps] : best_hyp.association.pairs) {
    const int pid = best_hyp.target_person_ids[static_cast<std::size_t>(pt)];
    for (int row = 0; row < tgt_w.n_persons(); ++row) {
      if (tgt_w.person_ids()[static_cast<std::size_t>(row)] == pid) {
        matched_target_rows.push_back(row);
        break;
      }
    }
  }
  std::sort(matched_target_rows.begin(), matched_target_rows.end());
  matched_target_rows.erase(std::unique(matched_target_rows.begin(), matched_target_rows.end()),
                            matched_target_rows.end());
  if (matched_target_rows.empty() || src_w.n_persons() == 0) {
    return best_hyp;
  }
  const OrientationWindows tgt_inlier = tgt_w.subset_persons(matched_target_rows);
  RegistrationResult refined = em_register(src_w, tgt_inlier, best_hyp.rotation, opts.em);

  PairRegistration pr;
  pr.rotation = refined.rotation;
  pr.delta = delta;
  pr.association = extract_association(src_w, tgt_w, refined.rotation, opts.em.theta_match);
  pr.source_person_ids = src_w.person_ids();
  pr.target_person_ids = tgt_w.person_ids();
  pr.score = pr.association.score;
  pr.em = std::move(refined);
  pr.em.responsibility = pr.association.A;  // row weights for the bearing stage
  collect_bearings(src_w, tgt_w, pr);
  return pr;
}

PairRegistration register_pair(const ViewTracks& source, const ViewTracks& target, const RegistrationOptions& opts) {
  const int n_src = static_cast<int>(source.person_ids().size());
  if (opts.use_ransac && n_src > opts.ransac_subset) {
    return ransac_register(source, target, opts);
  }
  if (opts.search_offsets) {
    return offset_search(source, target, opts).best;
  }
  return register_at_offset(source, target, 0, opts);
}

}  // namespace stcal
