#include "stcal/translation.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "stcal/errors.hpp"

namespace stcal {

namespace {

constexpr double kHuberDelta = 0.01;

Eigen::Vector3d smallest_right_singular(const Eigen::MatrixXd& M) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv.size() < 3 || sv(1) < 1e-8 * sv(0)) {
    throw RankDeficient("coplanarity rows do not determine a unique direction");
  }
  return svd.matrixV().col(2);
}

// Midpoint depths of the two rays: cam i at origin looking along xs, cam j
// with p_j = R p_i + t looking along xt.
std::pair<double, double> ray_depths(const Eigen::Vector3d& xt, const Eigen::Vector3d& xs, const Eigen::Matrix3d& R,
                                     const Eigen::Vector3d& t) {
  // World frame = source camera frame. Rays: a(s) = s * xs from the origin,
  // b(u) = Cj + u * dj with Cj = -R^T t, dj = R^T xt.
  const Eigen::Vector3d cj = -R.transpose() * t;
  const Eigen::Vector3d dj = R.transpose() * xt;
  const double b = xs.dot(dj);
  const double denom = 1.0 - b * b;
  if (std::abs(denom) < 1e-12) return {0.0, 0.0};
  const double c = xs.dot(cj);
  const double d = dj.dot(cj);
  const double s = (c - b * d) / denom;
  const double u = (b * c - d) / denom;
  return {s, u};
}

}  // namespace

TranslationEstimate solve_translation(const EpipolarSystem& sys, const Eigen::Matrix3d& R) {
  const std::size_t n = sys.pairs.size();
  if (n < 2) {
    throw RankDeficient("need >= 2 bearing pairs, got " + std::to_string(n));
  }

  std::vector<double> w(n, 1.0);
  if (!sys.weights.empty()) {
    for (std::size_t i = 0; i < n; ++i) w[i] = sys.weights[i];
  }

  Eigen::MatrixXd M(static_cast<Eigen::Index>(n), 3);
  auto assemble = [&]() {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& [xt, xs] = sys.pairs[i];
      M.row(static_cast<Eigen::Index>(i)) = (w[i] * xt.cross(R * xs)).transpose();
    }
  };

  assemble();
  Eigen::Vector3d t = smallest_right_singular(M);

  // One Huber-style reweighted pass to damp heavy-tailed joint bearings.
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [xt, xs] = sys.pairs[i];
    const double r = std::abs(xt.cross(R * xs).dot(t));
    if (r > kHuberDelta) w[i] *= std::sqrt(kHuberDelta / r);
  }
  assemble();
  t = smallest_right_singular(M);
  t.normalize();

  // Cheirality vote over the matched joints decides the sign.
  int pos = 0;
  int neg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [xt, xs] = sys.pairs[i];
    const auto [ds_p, dt_p] = ray_depths(xt, xs, R, t);
    const auto [ds_n, dt_n] = ray_depths(xt, xs, R, Eigen::Vector3d(-t));
    if (ds_p > 0.0 && dt_p > 0.0) ++pos;
    if (ds_n > 0.0 && dt_n > 0.0) ++neg;
  }
  if (pos == neg) {
    throw CheiralityAmbiguous("cheirality vote tied at " + std::to_string(pos));
  }
  if (neg > pos) t = -t;

  TranslationEstimate est;
  est.direction = t;
  // Residual of the unweighted system: the geometric coplanarity defect.
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [xt, xs] = sys.pairs[i];
    const double r = xt.cross(R * xs).dot(t);
    ss += r * r;
  }
  est.residual = std::sqrt(ss / static_cast<double>(n));
  return est;
}

}  // namespace stcal
