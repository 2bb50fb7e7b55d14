#include "parastab/static_feedback.hpp"

#include <cmath>
#include <random>

#include "doctest.h"

using namespace parastab;
using Eigen::VectorXd;

TEST_CASE("actuator bank placement") {
  const ActuatorBank bank(3, 0.04);
  CHECK(bank.center(1) == doctest::Approx(1.0 / 6));
  CHECK(bank.center(2) == doctest::Approx(0.5));
  CHECK(bank.center(3) == doctest::Approx(5.0 / 6));
  // disjoint supports
  for (int i = 0; i + 1 < bank.M; ++i)
    CHECK(bank.windows[i].hi() < bank.windows[i + 1].lo());
  CHECK_THROWS_AS(ActuatorBank(3, 0.4), ConfigError);
}

TEST_CASE("oblique projector invariants") {
  SpectralModel model(0.1, 32);
  const ActuatorBank bank(3, 0.04);
  const ObliqueProjector p = ObliqueProjector::build(model, bank);

  SUBCASE("single actuator reduces to a scalar gram ratio") {
    SpectralModel m1(0.1, 16);
    const ActuatorBank b1(1, 0.04);
    const ObliqueProjector p1 = ObliqueProjector::build(m1, b1);
    VectorXd h = VectorXd::Zero(16);
    h[0] = 1.0;  // e_1
    const VectorXd ph = p1.apply(h);
    const double beta = h[0] / p1.indicator_coeffs()(0, 0);
    CHECK((ph - beta * p1.indicator_coeffs().col(0)).norm() < 1e-14);
  }
  SUBCASE("bank members are fixed points") {
    for (int j = 0; j < bank.M; ++j) {
      const VectorXd w = p.indicator_coeffs().col(j);
      CHECK((p.apply(w) - w).norm() < 1e-12 * w.norm());
    }
  }
  SUBCASE("idempotence, range and kernel conditions on random states") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> dist;
    for (int trial = 0; trial < 50; ++trial) {
      VectorXd h(model.n);
      for (int i = 0; i < model.n; ++i) h[i] = dist(rng);
      const VectorXd ph = p.apply(h);
      CHECK((p.apply(ph) - ph).norm() < 1e-12 * std::max(1.0, ph.norm()));
      // kernel: (h - Ph, e_k) = 0 for k <= M
      for (int kk = 0; kk < bank.M; ++kk) CHECK(std::abs(h[kk] - ph[kk]) < 1e-12 * h.norm());
      // range: Ph lies in the indicator span
      const VectorXd beta = p.gram_solve(ph.head(bank.M));
      CHECK((p.indicator_coeffs() * beta - ph).norm() < 1e-10 * std::max(1.0, ph.norm()));
    }
  }
  SUBCASE("operator norm estimate is finite and sane") {
    CHECK(p.op_norm() > 1.0);
    CHECK(p.op_norm() < 50.0);
  }
}

TEST_CASE("closed-loop feedback evaluator") {
  SpectralModel model(0.1, 16);
  const ActuatorBank bank(3, 0.04);
  const ObliqueProjector proj = ObliqueProjector::build(model, bank);

  SUBCASE("zero state gives zero feedback") {
    Coefficients coeffs;
    const Eigen::MatrixXd arc = spectral_arc_matrix(model, coeffs, 0.0);
    const ClosedLoopFeedback fb(proj, 2.0);
    CHECK(fb.forcing(arc, VectorXd::Zero(16)).norm() == 0.0);
  }
  SUBCASE("constant reaction 1 + lambda cancels") {
    const double lambda = 2.0;
    Coefficients coeffs;
    coeffs.reaction = CoefficientField::constant(1.0 + lambda);
    const Eigen::MatrixXd arc = spectral_arc_matrix(model, coeffs, 0.0);
    const ClosedLoopFeedback fb(proj, lambda);
    std::mt19937_64 rng(17);
    const VectorXd y = random_unit_v_state(model, rng);
    CHECK(fb.forcing(arc, y).norm() < 1e-12);
  }
}

TEST_CASE("closed loop decays for the nonautonomous example at lambda 2") {
  SpectralModel model(0.1, 32);
  Coefficients coeffs;
  coeffs.reaction = CoefficientField::preset("-3-2|sin(t+x)|");
  coeffs.convection = CoefficientField::preset("|cos(t+x)|");
  const ObliqueProjector proj = ObliqueProjector::build(model, ActuatorBank(3, 0.04));
  const ClosedLoopFeedback fb(proj, 2.0);
  const double dt = 1e-3;
  const int steps = 2000;
  const SpectralArcTape tape = SpectralArcTape::build(model, coeffs, 0.0, dt, steps, 512);
  std::mt19937_64 rng(31);
  const Eigen::VectorXd y0 = random_unit_v_state(model, rng);
  const Trajectory traj = simulate_closed_loop(model, coeffs, tape, fb, y0, 0.0, dt, steps);
  // least-squares fit of log |y|_V against t
  double st = 0, sv = 0, stt = 0, stv = 0;
  int n = 0;
  for (int k = 0; k <= steps; k += 50) {
    const double t = traj.time(k), lv = std::log(model.v_norm(traj.states[k]));
    st += t;
    sv += lv;
    stt += t * t;
    stv += t * lv;
    ++n;
  }
  const double mu = -(n * stv - st * sv) / (n * stt - st * st);
  CHECK(mu > 0.0);
}

TEST_CASE("default lambda dominates the reaction strength") {
  Coefficients coeffs;
  coeffs.reaction = CoefficientField::preset("-3-2|sin(t+x)|");
  const double lambda = default_lambda(coeffs);
  CHECK(lambda == doctest::Approx(13.0).epsilon(1e-3));
  Coefficients unit;  // a = 1
  CHECK(default_lambda(unit) == doctest::Approx(1.0));
}

TEST_CASE("constants estimation on the free stable system") {
  // a = 1, b = 0, lambda = 0: the feedback vanishes and the decay rate is alpha_1
  SpectralModel model(0.1, 8);
  Coefficients coeffs;
  const ObliqueProjector proj = ObliqueProjector::build(model, ActuatorBank(3, 0.04));
  const ClosedLoopFeedback fb(proj, 0.0);

  SUBCASE("lambda zero gives no feedback on this system") {
    const Eigen::MatrixXd arc = spectral_arc_matrix(model, coeffs, 0.0);
    std::mt19937_64 rng(2);
    CHECK(fb.forcing(arc, random_unit_v_state(model, rng)).norm() < 1e-14);
  }

  EstimateOptions opts;
  opts.probes = 4;
  opts.squeeze_checks = 6;
  const FeedbackConstants k = estimate_constants(model, coeffs, fb, 0.5, opts);
  CHECK(k.mu == doctest::Approx(model.eigenvalue(1)).epsilon(0.05));
  CHECK(k.C >= 1.0);
  CHECK(k.T > 0.0);
  CHECK(k.C * std::exp(-k.mu * k.T) <= 0.5 + 1e-9);
  CHECK(k.C_rc < 1e-9);  // A_rc = 0 here
}

TEST_CASE("constants estimation on a destabilized nonautonomous system") {
  SpectralModel model(0.1, 16);
  Coefficients coeffs;
  coeffs.reaction = CoefficientField::preset("-1-0.5|sin(t+x)|");
  coeffs.convection = CoefficientField::preset("0.25|cos(t+x)|");
  const ObliqueProjector proj = ObliqueProjector::build(model, ActuatorBank(3, 0.04));
  const double lambda = default_lambda(coeffs);
  const ClosedLoopFeedback fb(proj, lambda);

  EstimateOptions opts;
  opts.probes = 6;
  opts.squeeze_checks = 10;
  opts.quad_panels = 512;
  const double theta = 0.5;
  const FeedbackConstants k = estimate_constants(model, coeffs, fb, theta, opts);
  CHECK(k.mu > 0.0);
  CHECK(k.T > 0.0);
  CHECK(k.K_frak > 0.0);
  CHECK(k.D_Y >= 1.0);
  CHECK(k.C_rc > 0.0);

  // squeeze on fresh states over three consecutive windows
  const double dt = opts.dt;
  const int steps_t = static_cast<int>(std::lround(k.T / dt));
  const SpectralArcTape tape = SpectralArcTape::build(model, coeffs, 0.0, dt, 3 * steps_t, 512);
  std::mt19937_64 rng(99);
  for (int probe = 0; probe < 5; ++probe) {
    const VectorXd y0 = random_unit_v_state(model, rng);
    const Trajectory traj = simulate_closed_loop(model, coeffs, tape, fb, y0, 0.0, dt, 3 * steps_t);
    for (int interval = 0; interval < 3; ++interval) {
      const double before = model.v_norm(traj.states[interval * steps_t]);
      const double after = model.v_norm(traj.states[(interval + 1) * steps_t]);
      CHECK(after <= theta * before * 1.0001);
    }
    // feedback magnitudes stay within the measured bound
    for (int s = 0; s <= steps_t; s += 25) {
      const double mag = fb.magnitudes(tape.at(s), traj.states[s]).norm();
      CHECK(mag <= k.K_frak * model.v_norm(traj.states.front()) * 1.0001);
    }
  }

  // fitted decay rate is positive: the closed loop contracts
  std::mt19937_64 rng2(7);
  const VectorXd y0 = random_unit_v_state(model, rng2);
  const Trajectory traj = simulate_closed_loop(model, coeffs, tape, fb, y0, 0.0, dt, 2 * steps_t);
  CHECK(model.v_norm(traj.back()) < model.v_norm(traj.front()));
}
