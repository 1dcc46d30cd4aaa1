#pragma once

#include <Eigen/Core>
#include <vector>

#include "stcal/rng.hpp"

namespace stcal {

/// Largest concentration the estimator may report; guards the singular limit
/// of the resultant-length formula for near-rigid direction sets.
inline constexpr double kKappaMax = 1e4;

/// One von Mises-Fisher component on S^2: mean direction, concentration and
/// the mixing proportion of the person it belongs to.
struct VmfComponent {
  Eigen::Vector3d mu = Eigen::Vector3d::UnitZ();
  double kappa = 0.0;
  double pi = 1.0;
};

/// Log density of vMF(mu, kappa) on S^2 evaluated at unit vector v.
/// Computed in the log domain so large kappa cannot overflow.
double vmf_log_pdf(const Eigen::Vector3d& v, const Eigen::Vector3d& mu, double kappa);

/// log C(kappa) with C(kappa) = kappa / (4 pi sinh kappa).
double vmf_log_norm(double kappa);

struct VmfFit {
  Eigen::Vector3d mu = Eigen::Vector3d::UnitZ();
  double kappa = 0.0;
  /// Set when the resultant vanished (antipodal cancellation); mu is then an
  /// arbitrary unit vector and kappa is 0.
  bool zero_resultant = false;
};

/// Maximum-likelihood fit from unit vectors: mu is the normalized resultant,
/// kappa the standard resultant-length approximation
/// k = Rbar (3 - Rbar^2) / (1 - Rbar^2) clamped to [0, kKappaMax].
/// Throws EmptyInput when no vectors are given.
VmfFit vmf_fit_mle(const std::vector<Eigen::Vector3d>& vectors);

/// Draw one sample from vMF(mu, kappa) (Wood's rejection scheme).
Eigen::Vector3d sample_vmf(const Eigen::Vector3d& mu, double kappa, Rng& rng);

}  // namespace stcal
