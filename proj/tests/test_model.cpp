#include "parastab/model.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"

using namespace parastab;
using Eigen::VectorXd;

namespace {
constexpr double kPi = std::numbers::pi;

// Trapezoid quadrature oracle, independent of the assembly code paths.
double trapezoid(const std::function<double(double)>& f, double a, double b, int points) {
  const double h = (b - a) / (points - 1);
  double s = 0.5 * (f(a) + f(b));
  for (int i = 1; i < points - 1; ++i) s += f(a + i * h);
  return s * h;
}

double hat(double x, double xi, double h) {
  const double d = std::abs(x - xi);
  return d >= h ? 0.0 : 1.0 - d / h;
}
}  // namespace

TEST_CASE("spectral model eigenvalues and basis") {
  SpectralModel m(0.1, 12);
  const VectorXd a = m.eigenvalues();
  for (int j = 0; j < m.n; ++j) {
    CHECK(a[j] > 0.0);
    if (j > 0) CHECK(a[j] > a[j - 1]);
  }
  CHECK(a[0] == doctest::Approx(1.0 + 0.1 * kPi * kPi).epsilon(1e-15));

  // (e_i, e_j) = delta_ij, quadrature check
  for (int i = 1; i <= 6; ++i)
    for (int j = i; j <= 6; ++j) {
      const double ip =
          trapezoid([&](double x) { return m.basis(i, x) * m.basis(j, x); }, 0.0, 1.0, 40001);
      CHECK(std::abs(ip - (i == j ? 1.0 : 0.0)) < 1e-12);
    }
}

TEST_CASE("actuator window admissibility") {
  CHECK_NOTHROW(ActuatorWindow(0.5, 0.04));
  CHECK_NOTHROW(ActuatorWindow(0.02, 0.04));
  CHECK_THROWS_AS(ActuatorWindow(0.01, 0.04), GeometryError);
  CHECK_THROWS_AS(ActuatorWindow(0.99, 0.04), GeometryError);
  CHECK_THROWS_AS(ActuatorWindow(0.5, -0.1), GeometryError);
  const ActuatorWindow w(0.5, 0.04);
  CHECK(w.normalized_height() == doctest::Approx(1.0 / std::sqrt(0.04)));
  // unit L2 norm of the normalized indicator: height^2 * r = 1
  CHECK(w.normalized_height() * w.normalized_height() * w.width() == doctest::Approx(1.0));
}

TEST_CASE("indicator spectral coefficients") {
  SpectralModel m(0.1, 8);

  SUBCASE("centered window is orthogonal to the second mode") {
    const ActuatorWindow w(0.5, 0.04);
    CHECK(std::abs(indicator_coeff(w, 2)) < 1e-14);
  }
  SUBCASE("full-domain window against the first mode") {
    const ActuatorWindow w(0.5, 1.0);
    CHECK(indicator_coeff(w, 1) == doctest::Approx(std::sqrt(2.0) * 2.0 / kPi).epsilon(1e-14));
  }
  SUBCASE("matches brute-force quadrature") {
    const ActuatorWindow w(0.3, 0.04);
    const double oracle = trapezoid([&](double x) { return m.basis(1, x); }, w.lo(), w.hi(), 100001);
    CHECK(std::abs(indicator_coeff(w, 1) - oracle) < 1e-10);
  }
  SUBCASE("normalized variant divides by sqrt(r)") {
    const ActuatorWindow w(0.3, 0.04);
    const VectorXd c = spectral_coeffs_of_indicator(m, w, false);
    const VectorXd cn = spectral_coeffs_of_indicator(m, w, true);
    CHECK((cn * std::sqrt(0.04) - c).norm() < 1e-15);
  }
}

TEST_CASE("fem load vector") {
  const FemGrid grid(1.0 / 16);
  const double h = grid.h();

  SUBCASE("one-element-wide window centered on a node") {
    const int node = 5;
    const ActuatorWindow w(node * h, h);
    const VectorXd load = fem_load_vector(grid, w);
    CHECK(load[node] == doctest::Approx(w.width() - w.width() * w.width() / (4 * h)).epsilon(1e-13));
    CHECK(load[node - 1] == doctest::Approx(h / 8).epsilon(1e-13));
    CHECK(load[node + 1] == doctest::Approx(h / 8).epsilon(1e-13));
    // against quadrature
    for (int i = node - 2; i <= node + 2; ++i) {
      const double oracle =
          trapezoid([&](double x) { return hat(x, i * h, h); }, w.lo(), w.hi(), 1000001);
      CHECK(std::abs(load[i] - oracle) < 1e-10);
    }
  }
  SUBCASE("full-domain window gives the full-mass row sums") {
    const ActuatorWindow w(0.5, 1.0);
    const VectorXd load = fem_load_vector(grid, w);
    // oracle: full mass matrix applied to the all-ones vector
    for (int i = 0; i <= grid.cells(); ++i) {
      const bool boundary = (i == 0 || i == grid.cells());
      CHECK(load[i] == doctest::Approx(boundary ? h / 2 : h).epsilon(1e-13));
    }
  }
  SUBCASE("entries sum to r") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> rdist(0.01, 0.3);
    for (int trial = 0; trial < 25; ++trial) {
      const double r = rdist(rng);
      std::uniform_real_distribution<double> cdist(r / 2, 1 - r / 2);
      const ActuatorWindow w(cdist(rng), r);
      CHECK(fem_load_vector(grid, w).sum() == doctest::Approx(r).epsilon(1e-13));
    }
  }
  SUBCASE("normalized indicator has unit load-based norm") {
    const ActuatorWindow w(0.37, 0.04);
    const VectorXd load = fem_load_vector(grid, w);
    CHECK(std::abs(load.sum() / w.width() - 1.0) < 1e-12);
  }
}

TEST_CASE("fem load derivative") {
  const FemGrid grid(1.0 / 32);
  const double h = grid.h();

  SUBCASE("symmetric window has zero entry at its center node") {
    const int node = 10;
    const ActuatorWindow w(node * h, 3 * h);
    const VectorXd d = fem_load_derivative(grid, w);
    CHECK(d[node] == doctest::Approx(0.0));
  }
  SUBCASE("matches central finite differences") {
    const ActuatorWindow w(0.402, 0.05);
    const VectorXd d = fem_load_derivative(grid, w);
    const double eps = 1e-7;
    const VectorXd fd = (fem_load_vector(grid, ActuatorWindow(w.center + eps, w.width())) -
                         fem_load_vector(grid, ActuatorWindow(w.center - eps, w.width()))) /
                        (2 * eps);
    CHECK((d - fd).lpNorm<Eigen::Infinity>() < 1e-6);
  }
  SUBCASE("entries sum to zero") {
    const ActuatorWindow w(0.402, 0.05);
    CHECK(std::abs(fem_load_derivative(grid, w).sum()) < 1e-13);
  }
  SUBCASE("boundary-touching window is rejected") {
    CHECK_THROWS_AS(fem_load_derivative(grid, ActuatorWindow(0.025, 0.05)), GeometryError);
  }
}

TEST_CASE("clipped load variants extend continuously") {
  const FemGrid grid(1.0 / 32);
  const ActuatorWindow w(0.4, 0.06);
  CHECK((fem_load_vector_clipped(grid, 0.4, 0.06) - fem_load_vector(grid, w)).norm() < 1e-15);
  // window hanging over the right boundary keeps only the inside part
  const VectorXd load = fem_load_vector_clipped(grid, 1.0, 0.06);
  CHECK(load.sum() == doctest::Approx(0.03).epsilon(1e-12));
  // fully outside
  CHECK(fem_load_vector_clipped(grid, 1.2, 0.06).norm() == 0.0);
  CHECK(fem_load_derivative_clipped(grid, 1.2, 0.06).norm() == 0.0);
  // derivative matches finite differences across the clip
  const double eps = 1e-7;
  const VectorXd fd = (fem_load_vector_clipped(grid, 0.985 + eps, 0.06) -
                       fem_load_vector_clipped(grid, 0.985 - eps, 0.06)) /
                      (2 * eps);
  CHECK((fem_load_derivative_clipped(grid, 0.985, 0.06) - fd).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("coefficient field presets and table") {
  const auto a = CoefficientField::preset("-3-2|sin(t+x)|");
  CHECK(a.constant_part() == doctest::Approx(-3.0));
  CHECK(a(0.0, 0.0) == doctest::Approx(-3.0));
  CHECK(a(kPi / 2, 0.0) == doctest::Approx(-5.0));
  const auto b = CoefficientField::preset("|cos(t+x)|");
  CHECK(b(0.0, 0.0) == doctest::Approx(1.0));
  for (double t : {0.0, 0.7, 3.0})
    for (double x : {0.0, 0.5, 1.0}) {
      CHECK(a(t, x) >= -5.0);
      CHECK(a(t, x) <= -3.0);
      CHECK(b(t, x) >= 0.0);
      CHECK(b(t, x) <= 1.0);
    }

  Eigen::VectorXd tg(2), xg(3);
  tg << 0.0, 1.0;
  xg << 0.0, 0.5, 1.0;
  Eigen::MatrixXd vals(2, 3);
  vals << 1.0, 2.0, 3.0, 4.0, 5.0, 6.0;
  const auto tab = CoefficientField::tabulated(tg, xg, vals);
  CHECK(tab(0.0, 0.25) == doctest::Approx(1.5));
  CHECK(tab(0.5, 0.5) == doctest::Approx(3.5));
  // clamped outside the grid range
  CHECK(tab(-5.0, -1.0) == doctest::Approx(1.0));
  CHECK(tab(9.0, 2.0) == doctest::Approx(6.0));
  CHECK_THROWS_AS(CoefficientField::preset("nope"), ConfigError);
}

TEST_CASE("spectral/fem norm consistency at order 2") {
  SpectralModel m(0.1, 4);
  VectorXd coeffs = VectorXd::Zero(4);
  coeffs[0] = 1.0;
  coeffs[2] = 0.3;
  const double exact = coeffs.norm();

  double prev_err = 0.0;
  std::vector<double> errs;
  for (const double h : {1.0 / 64, 1.0 / 128, 1.0 / 256}) {
    const FemGrid grid(h);
    const VectorXd y = grid.interpolate([&](double x) { return m.evaluate(coeffs, x); });
    errs.push_back(std::abs(grid.h_norm(y) - exact));
  }
  (void)prev_err;
  const double order1 = std::log2(errs[0] / errs[1]);
  const double order2 = std::log2(errs[1] / errs[2]);
  CHECK(order1 >= 1.9);
  CHECK(order2 >= 1.9);
}

TEST_CASE("fem eigenvalues converge to the closed form at order 2") {
  const double nu = 0.1;
  SpectralModel m(nu, 8);
  const auto a_one = [](double) { return 1.0; };
  const FemGrid g1(1.0 / 64), g2(1.0 / 128);
  const auto e1 = g1.operator_eigenpairs(nu, a_one);
  const auto e2 = g2.operator_eigenpairs(nu, a_one);
  for (int j = 1; j <= 5; ++j) {
    const double err1 = std::abs(e1.values[j - 1] - m.eigenvalue(j));
    const double err2 = std::abs(e2.values[j - 1] - m.eigenvalue(j));
    CHECK(std::log2(err1 / err2) >= 1.9);
  }
  // discrete M-orthonormality
  const Eigen::MatrixXd gram =
      e1.vectors.transpose() * g1.mass().dense() * e1.vectors;
  CHECK((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).norm() < 1e-10);
}
