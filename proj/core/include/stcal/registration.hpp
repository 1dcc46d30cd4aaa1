#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <utility>
#include <vector>

#include "stcal/oriented_points.hpp"
#include "stcal/skeleton.hpp"
#include "stcal/vmf.hpp"

namespace stcal {

/// All tracks of one camera view plus the skeleton they follow.
struct ViewTracks {
  int camera_id = -1;
  Skeleton skeleton;
  std::vector<PersonTrack> tracks;

  /// [first frame, one past last frame) over all segments; {0,0} when empty.
  std::pair<int, int> frame_span() const;
  /// Distinct person ids in first-appearance order.
  std::vector<int> person_ids() const;
  /// Segment containing the frame for a person, or nullptr.
  const PersonTrack* segment_at(int person_id, int frame) const;
};

/// Bone orientations and joint positions of one view gathered over a list of
/// windows, with per-(person, window, joint) resultant statistics. Persons
/// with no valid orientation anywhere are dropped; `person_ids` maps the
/// retained rows back to camera-local ids.
class OrientationWindows {
public:
  OrientationWindows() = default;

  int n_persons() const { return static_cast<int>(person_ids_.size()); }
  int n_windows() const { return static_cast<int>(window_starts_.size()); }
  int n_joints() const { return n_joints_; }
  int frames_per_window() const { return T_; }

  const std::vector<int>& person_ids() const { return person_ids_; }
  const std::vector<int>& window_starts() const { return window_starts_; }

  bool orient_valid(int p, int w, int f, int j) const { return valid_[flat(p, w, f, j)] != 0; }
  const Eigen::Vector3d& orientation(int p, int w, int f, int j) const { return dirs_[flat(p, w, f, j)]; }
  bool position_valid(int p, int w, int f, int j) const { return pos_valid_[flat(p, w, f, j)] != 0; }
  const Eigen::Vector3d& position(int p, int w, int f, int j) const { return positions_[flat(p, w, f, j)]; }

  /// Sum of valid unit orientations over the window's frames.
  const Eigen::Vector3d& resultant(int p, int w, int j) const { return resultant_[stat(p, w, j)]; }
  double count(int p, int w, int j) const { return counts_[stat(p, w, j)]; }

  /// Restriction to a subset of person rows (RANSAC hypotheses).
  OrientationWindows subset_persons(const std::vector<int>& person_rows) const;

  /// Gathers windows [start, start+T) for every person of the view.
  static OrientationWindows gather(const ViewTracks& view, const std::vector<int>& starts, int T);

private:
  std::size_t flat(int p, int w, int f, int j) const {
    return ((static_cast<std::size_t>(p) * static_cast<std::size_t>(n_windows()) + static_cast<std::size_t>(w)) *
                static_cast<std::size_t>(T_) +
            static_cast<std::size_t>(f)) *
               static_cast<std::size_t>(n_joints_) +
           static_cast<std::size_t>(j);
  }
  std::size_t stat(int p, int w, int j) const {
    return (static_cast<std::size_t>(p) * static_cast<std::size_t>(n_windows()) + static_cast<std::size_t>(w)) *
               static_cast<std::size_t>(n_joints_) +
           static_cast<std::size_t>(j);
  }

  int n_joints_ = 0;
  int T_ = 0;
  std::vector<int> person_ids_;
  std::vector<int> window_starts_;
  std::vector<Eigen::Vector3d> dirs_;
  std::vector<Eigen::Vector3d> positions_;
  std::vector<std::uint8_t> valid_;
  std::vector<std::uint8_t> pos_valid_;
  std::vector<Eigen::Vector3d> resultant_;
  std::vector<double> counts_;
};

/// Per source-person, per window, per joint vMF components plus the
/// person-level mixing proportions.
struct SourceModel {
  int n_joints = 0;
  int n_windows = 0;
  std::vector<int> person_ids;
  std::vector<VmfComponent> components;     // [p][w][j]
  std::vector<std::uint8_t> component_valid;  // zero where the joint had no data
  Eigen::VectorXd pi;                       // person-level mixing proportions

  int n_persons() const { return static_cast<int>(person_ids.size()); }
  std::size_t at(int p, int w, int j) const {
    return (static_cast<std::size_t>(p) * static_cast<std::size_t>(n_windows) + static_cast<std::size_t>(w)) *
               static_cast<std::size_t>(n_joints) +
           static_cast<std::size_t>(j);
  }
};

/// Fits one vMF per (person, window, joint) from the source windows; mixing
/// proportions start uniform.
SourceModel fit_source_model(const OrientationWindows& source);

struct EmOptions {
  int max_outer = 200;
  double tol_loglik = 1e-7;  // relative improvement threshold
  int max_inner = 50;
  double tol_grad = 1e-8;  // scaled by the total responsibility-kappa weight
  double initial_step = 1.0;
  int max_halvings = 20;
  double theta_match = 0.5;  // association acceptance gate, radians
};

/// Per-pair complete-data log terms: log pi_{p'} + sum over windows, frames
/// and valid joints of log f_vMF(v; R mu, kappa). N_p x N_p'.
Eigen::MatrixXd pair_log_likelihoods(const OrientationWindows& targets, const SourceModel& model,
                                     const Eigen::Matrix3d& R);

/// Row-normalized responsibilities from the log terms (log-sum-exp).
Eigen::MatrixXd responsibility_from_logits(const Eigen::MatrixXd& logits);

/// Soft-assignment responsibilities for the current rotation.
Eigen::MatrixXd compute_responsibility(const OrientationWindows& targets, const SourceModel& model,
                                       const Eigen::Matrix3d& R);

/// Observed-data log-likelihood: sum_p logsumexp_{p'} logits(p, p').
double observed_log_likelihood(const Eigen::MatrixXd& logits);

/// Tangent-space gradient of the soft log-likelihood with respect to a left
/// rotation perturbation, plus the weight that scales the gradient tolerance.
struct RotationGradient {
  Eigen::Vector3d g = Eigen::Vector3d::Zero();
  double total_weight = 0.0;
};
RotationGradient rotation_gradient(const OrientationWindows& targets, const SourceModel& model,
                                   const Eigen::Matrix3d& R, const Eigen::MatrixXd& gamma);

/// One backtracking ascent step on the rotation: R <- exp(step g) R, halving
/// the step until the fixed-gamma objective does not decrease. Returns R
/// unchanged when the gradient is negligible or no step improves.
Eigen::Matrix3d rotation_ascent_step(const OrientationWindows& targets, const SourceModel& model,
                                     const Eigen::Matrix3d& R, const Eigen::MatrixXd& gamma, double step,
                                     const EmOptions& opts = {});

/// Closed-form mixing update: pi_{p'} = sum_p gamma / sum_{p,p'} gamma.
Eigen::VectorXd update_mixing(const Eigen::MatrixXd& gamma);

/// Binary association with its angular cost matrix.
struct AssociationResult {
  Eigen::MatrixXd A;     // N_p x N_p', entries 0/1
  Eigen::MatrixXd cost;  // mean angular cost per pair, radians
  std::vector<std::pair<int, int>> pairs;  // matched (target row, source row)
  double mean_cost = std::numeric_limits<double>::infinity();
  int n_matched = 0;
  /// Candidate-ranking score: mean over min(N_p, N_p') potential pairs with
  /// every unmatched slot charged the gate cost. Infinite when nothing
  /// matched. Unlike mean_cost this cannot reward dropping pairs.
  double score = std::numeric_limits<double>::infinity();
};

/// Minimum-cost bipartite matching on the mean angular costs, with pairs
/// above theta_match dropped.
AssociationResult extract_association(const OrientationWindows& source, const OrientationWindows& targets,
                                      const Eigen::Matrix3d& R, double theta_match = 0.5);

struct RegistrationResult {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::MatrixXd responsibility;
  Eigen::VectorXd pi;
  AssociationResult association;
  double log_likelihood = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::vector<double> loglik_history;  // observed-data log-likelihood per outer iteration
};

/// EM-like alternating optimization of rotation and soft assignment.
/// Throws NoValidData when either side has no usable orientations.
RegistrationResult em_register(const OrientationWindows& source, const OrientationWindows& targets,
                               const Eigen::Matrix3d& init_R, const EmOptions& opts = {});

/// The 12 fixed multi-start rotations: identity, quarter/half turns about the
/// coordinate axes, and two edge half-turns.
std::vector<Eigen::Matrix3d> default_rotation_seeds();

struct RegistrationOptions {
  EmOptions em;
  int window_length = 5;   // T
  int window_stride = 5;   // window start spacing on the source timeline
  int offset_range = 10;   // brute-force search covers [-range, +range]
  bool search_offsets = true;
  bool use_ransac = true;
  int ransac_subset = 2;    // hypothesized shared source persons
  int max_hypotheses = 64;  // subsets evaluated before seeded sampling kicks in
  std::vector<Eigen::Matrix3d> init_rotations = default_rotation_seeds();
  std::uint64_t seed = 1;
};

/// Pairwise registration outcome for one (source, target) view pair at one
/// temporal offset, after multi-start EM.
struct PairRegistration {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  int delta = 0;
  AssociationResult association;           // over windowed person rows
  std::vector<int> source_person_ids;      // row mapping for the association
  std::vector<int> target_person_ids;
  double score = std::numeric_limits<double>::infinity();  // mean matched angular cost
  RegistrationResult em;
  // Matched bearings for the translation stage: (target, source) unit pairs.
  std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> bearing_pairs;
  std::vector<double> bearing_weights;
};

struct OffsetCandidate {
  int delta = 0;
  double score = std::numeric_limits<double>::infinity();
  int n_matched = 0;
};

struct OffsetSearchResult {
  PairRegistration best;
  std::vector<OffsetCandidate> scanned;
};

/// Window starts on the source timeline that keep both views inside their
/// spans when the target is shifted by delta. Empty when no window fits.
std::vector<int> window_starts_for_offset(const ViewTracks& source, const ViewTracks& target, int delta, int T,
                                          int stride);

/// Multi-start EM at one fixed offset.
PairRegistration register_at_offset(const ViewTracks& source, const ViewTracks& target, int delta,
                                    const RegistrationOptions& opts);

/// Brute-force scan of all integer offsets in [-range, +range]; ties prefer
/// smaller |delta|, then smaller delta. Throws InsufficientOverlap when some
/// offset in the range leaves no complete window.
OffsetSearchResult offset_search(const ViewTracks& source, const ViewTracks& target, const RegistrationOptions& opts);

/// RANSAC over source-person subsets with inlier re-registration, for scenes
/// where some persons are visible in only one view.
PairRegistration ransac_register(const ViewTracks& source, const ViewTracks& target, const RegistrationOptions& opts);

/// Full pairwise driver: applies RANSAC and/or offset search per options.
PairRegistration register_pair(const ViewTracks& source, const ViewTracks& target, const RegistrationOptions& opts);

}  // namespace stcal
