#include <doctest.h>

#include <cmath>

#include "stcal/errors.hpp"
#include "stcal/rng.hpp"
#include "stcal/so3.hpp"
#include "stcal/vmf.hpp"

using namespace stcal;

namespace {

// Spherical quadrature of exp(log_pdf): Gauss-Legendre in cos(theta) crossed
// with a uniform grid in phi. Independent of the log-domain implementation.
double integrate_sphere(const Eigen::Vector3d& mu, double kappa, int n_theta = 512, int n_phi = 256) {
  // Gauss-Legendre nodes/weights on [-1, 1] via Newton iteration.
  std::vector<double> x(static_cast<std::size_t>(n_theta)), w(static_cast<std::size_t>(n_theta));
  for (int i = 0; i < n_theta; ++i) {
    double t = std::cos(M_PI * (i + 0.75) / (n_theta + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 0; k < n_theta; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k + 1.0) * t * p1 - k * p2) / (k + 1.0);
      }
      const double dp = n_theta * (t * p0 - p1) / (t * t - 1.0);
      const double dt = -p0 / dp;
      t += dt;
      if (std::abs(dt) < 1e-15) break;
    }
    double p0 = 1.0, p1 = 0.0;
    for (int k = 0; k < n_theta; ++k) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * k + 1.0) * t * p1 - k * p2) / (k + 1.0);
    }
    const double dp = n_theta * (t * p0 - p1) / (t * t - 1.0);
    x[static_cast<std::size_t>(i)] = t;
    w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - t * t) * dp * dp);
  }

  double total = 0.0;
  for (int i = 0; i < n_theta; ++i) {
    const double ct = x[static_cast<std::size_t>(i)];
    const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
    double ring = 0.0;
    for (int j = 0; j < n_phi; ++j) {
      const double phi = 2.0 * M_PI * j / n_phi;
      const Eigen::Vector3d v(st * std::cos(phi), st * std::sin(phi), ct);
      ring += std::exp(vmf_log_pdf(v, mu, kappa));
    }
    total += w[static_cast<std::size_t>(i)] * (2.0 * M_PI / n_phi) * ring;
  }
  return total;
}

}  // namespace

TEST_CASE("vmf_log_pdf: uniform limit and plug-in value") {
  const Eigen::Vector3d mu = Eigen::Vector3d::UnitZ();
  const double uniform = std::log(1.0 / (4.0 * M_PI));
  CHECK(vmf_log_pdf(Eigen::Vector3d::UnitX(), mu, 0.0) == doctest::Approx(uniform).epsilon(1e-12));
  CHECK(uniform == doctest::Approx(-2.53102).epsilon(1e-5));

  // v = mu, kappa = 1: log(1/(4 pi sinh 1)) + 1.
  const double expected = std::log(1.0 / (4.0 * M_PI * std::sinh(1.0))) + 1.0;
  CHECK(vmf_log_pdf(mu, mu, 1.0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("vmf_log_pdf: huge kappa stays finite") {
  const Eigen::Vector3d mu = Eigen::Vector3d::UnitZ();
  CHECK(std::isfinite(vmf_log_pdf(mu, mu, kKappaMax)));
  CHECK(std::isfinite(vmf_log_pdf(-mu, mu, kKappaMax)));
  CHECK(vmf_log_pdf(mu, mu, kKappaMax) > vmf_log_pdf(-mu, mu, kKappaMax));
}

TEST_CASE("vmf normalization by spherical quadrature") {
  const Eigen::Vector3d mu = Eigen::Vector3d(0.3, -0.5, 1.0).normalized();
  for (double kappa : {0.5, 5.0, 50.0}) {
    CHECK(integrate_sphere(mu, kappa) == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("vmf_fit_mle: rigid and antipodal inputs") {
  const Eigen::Vector3d u = Eigen::Vector3d(1, 2, -1).normalized();
  std::vector<Eigen::Vector3d> same(7, u);
  const VmfFit rigid = vmf_fit_mle(same);
  CHECK((rigid.mu - u).norm() < 1e-12);
  CHECK(rigid.kappa == doctest::Approx(kKappaMax));
  CHECK_FALSE(rigid.zero_resultant);

  const VmfFit anti = vmf_fit_mle({u, -u});
  CHECK(anti.zero_resultant);
  CHECK(anti.kappa == doctest::Approx(0.0));

  CHECK_THROWS_AS(vmf_fit_mle({}), EmptyInput);
}

TEST_CASE("vmf_fit_mle: recovers parameters from Wood-sampled data") {
  Rng rng(2024);
  const Eigen::Vector3d mu0 = Eigen::Vector3d(0.2, 0.9, -0.3).normalized();
  const double kappa0 = 10.0;
  std::vector<Eigen::Vector3d> samples;
  samples.reserve(100000);
  for (int i = 0; i < 100000; ++i) samples.push_back(sample_vmf(mu0, kappa0, rng));
  const VmfFit fit = vmf_fit_mle(samples);
  CHECK(fit.kappa > 9.0);
  CHECK(fit.kappa < 11.0);
  const double angle = std::acos(std::clamp(fit.mu.dot(mu0), -1.0, 1.0));
  CHECK(angle < 2.0 * M_PI / 180.0);
}

TEST_CASE("sample_vmf: respects the mean direction for large kappa") {
  Rng rng(77);
  const Eigen::Vector3d mu = Eigen::Vector3d(-1, 1, 2).normalized();
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (int i = 0; i < 2000; ++i) sum += sample_vmf(mu, 200.0, rng);
  CHECK((sum.normalized() - mu).norm() < 0.02);
}

TEST_CASE("sample_vmf: kappa 0 is uniform on the sphere") {
  Rng rng(78);
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (int i = 0; i < 20000; ++i) sum += sample_vmf(Eigen::Vector3d::UnitZ(), 0.0, rng);
  CHECK(sum.norm() / 20000.0 < 0.02);  // resultant of uniform draws vanishes
}
