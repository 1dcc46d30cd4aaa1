#include "stcal/vmf.hpp"

#include <Eigen/Geometry>
#include <cmath>

#include "stcal/errors.hpp"
#include "stcal/so3.hpp"

namespace stcal {

namespace {
const double kLog4Pi = std::log(4.0 * M_PI);
const double kLog2Pi = std::log(2.0 * M_PI);
}  // namespace

double vmf_log_norm(double kappa) {
  if (kappa < 1e-8) {
    // C(k) = k / (4 pi sinh k) -> 1/(4 pi) with relative error O(k^2).
    return -kLog4Pi - kappa * kappa / 6.0;
  }
  // log C = log k - log(2 pi) - k - log(1 - exp(-2k))
  return std::log(kappa) - kLog2Pi - kappa - std::log1p(-std::exp(-2.0 * kappa));
}

double vmf_log_pdf(const Eigen::Vector3d& v, const Eigen::Vector3d& mu, double kappa) {
  const double dot = mu.dot(v);
  if (kappa < 1e-8) {
    return -kLog4Pi - kappa * kappa / 6.0 + kappa * dot;
  }
  // log f = log k - log(2 pi) - k (1 - mu.v) - log(1 - exp(-2k))
  return std::log(kappa) - kLog2Pi - kappa * (1.0 - dot) - std::log1p(-std::exp(-2.0 * kappa));
}

VmfFit vmf_fit_mle(const std::vector<Eigen::Vector3d>& vectors) {
  if (vectors.empty()) throw EmptyInput("vmf_fit_mle: no vectors");

  Eigen::Vector3d resultant = Eigen::Vector3d::Zero();
  for (const auto& v : vectors) resultant += v;

  const double n = static_cast<double>(vectors.size());
  const double r = resultant.norm();

  VmfFit fit;
  if (r < 1e-12 * n || r < 1e-300) {
    fit.zero_resultant = true;
    return fit;  // kappa = 0, mu arbitrary
  }

  fit.mu = resultant / r;
  const double rbar = std::min(r / n, 1.0);
  if (rbar >= 1.0 - 1e-12) {
    fit.kappa = kKappaMax;
  } else {
    fit.kappa = std::clamp(rbar * (3.0 - rbar * rbar) / (1.0 - rbar * rbar), 0.0, kKappaMax);
  }
  return fit;
}

Eigen::Vector3d sample_vmf(const Eigen::Vector3d& mu, double kappa, Rng& rng) {
  if (kappa < 1e-12) return rng.direction();

  // Wood (1994) for S^2: the cosine w of the polar angle has density
  // proportional to exp(kappa w); invert its CDF directly.
  const double u = rng.uniform();
  // w = 1 + log(u + (1-u) exp(-2k)) / k, stable for large k.
  const double w = 1.0 + std::log(u + (1.0 - u) * std::exp(-2.0 * kappa)) / kappa;
  const double phi = rng.uniform(0.0, 2.0 * M_PI);
  const double s = std::sqrt(std::max(0.0, 1.0 - w * w));
  const Eigen::Vector3d local(s * std::cos(phi), s * std::sin(phi), w);

  // Rotate the pole onto mu.
  const Eigen::Vector3d z = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d axis = z.cross(mu);
  const double axis_norm = axis.norm();
  if (axis_norm < 1e-12) {
    return mu.z() > 0.0 ? local : Eigen::Vector3d(local.x(), -local.y(), -local.z());
  }
  axis /= axis_norm;
  const double angle = std::acos(std::clamp(z.dot(mu), -1.0, 1.0));
  return exp_map(axis * angle) * local;
}

}  // namespace stcal
