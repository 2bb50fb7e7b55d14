#include "parastab/switching.hpp"

#include <cmath>
#include <random>

#include "doctest.h"

using namespace parastab;
using Eigen::VectorXd;

namespace {
// Small nonautonomous setting shared by the pipeline tests.
struct Setup {
  SpectralModel model{0.1, 16};
  Coefficients coeffs;
  ActuatorBank bank{2, 0.04};
  ObliqueProjector projector;
  ClosedLoopFeedback feedback;
  FeedbackConstants constants;

  Setup()
      : projector(ObliqueProjector::build(model, bank)),
        feedback(projector, 0.0),
        constants() {
    coeffs.reaction = CoefficientField::preset("-1-0.5|sin(t+x)|");
    coeffs.convection = CoefficientField::preset("0.25|cos(t+x)|");
    const double lambda = default_lambda(coeffs);
    feedback = ClosedLoopFeedback(projector, lambda);
    EstimateOptions opts;
    opts.probes = 4;
    opts.squeeze_checks = 6;
    opts.quad_panels = 512;
    constants = estimate_constants(model, coeffs, feedback, 0.5, opts);
  }
};

Setup& setup() {
  static Setup s;
  return s;
}

StaticControlSample constant_sample(int m, double t0, double dt, int steps, double value) {
  StaticControlSample s;
  s.t0 = t0;
  s.dt = dt;
  s.values = Eigen::MatrixXd::Constant(m, steps + 1, value);
  return s;
}
}  // namespace

TEST_CASE("static control sample integration") {
  StaticControlSample s;
  s.t0 = 0.0;
  s.dt = 0.25;
  s.values.resize(1, 5);
  s.values << 0.0, 1.0, 2.0, 3.0, 4.0;  // v(t) = 4t on [0,1]
  // exact integral of 4t over [a,b] is 2(b^2 - a^2)
  CHECK(s.integral_component(0, 0.0, 1.0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(s.integral_component(0, 0.1, 0.3) == doctest::Approx(2 * (0.09 - 0.01)).epsilon(1e-12));
  CHECK(s.integral_component(0, 0.2, 0.9) == doctest::Approx(2 * (0.81 - 0.04)).epsilon(1e-13));
}

TEST_CASE("schedule construction") {
  SUBCASE("zero control gives equal slots") {
    const auto v0 = constant_sample(3, 0.0, 0.01, 100, 0.0);  // T = 1, M = 3
    const auto s = build_schedule(v0, 4, 0.01);
    CHECK(s.sigma.cwiseAbs().maxCoeff() == 0.0);
    for (int n = 0; n < 4; ++n)
      for (int j = 1; j <= 6; ++j)
        CHECK(s.raw_times(n, j) - s.raw_times(n, j - 1) ==
              doctest::Approx(1.0 / (4 * 6)).epsilon(1e-12));
  }
  SUBCASE("vartheta worked value") {
    CHECK(vartheta_factor(1.0, 4, 2, 0.01) == doctest::Approx(1.0 / 1.4).epsilon(1e-14));
  }
  SUBCASE("single constant actuator") {
    const auto v0 = constant_sample(1, 0.0, 0.01, 100, 1.0);  // M = 1, T = 1
    const auto s = build_schedule(v0, 5, 0.001);
    for (int n = 0; n < 5; ++n) {
      CHECK(s.sigma[n] == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(s.raw_times(n, 1) - s.raw_times(n, 0) == doctest::Approx(0.1).epsilon(1e-12));
      CHECK(s.raw_times(n, 2) - s.raw_times(n, 1) == doctest::Approx(0.1).epsilon(1e-12));
      CHECK(s.signs(n, 0) == 1.0);
      CHECK(s.signs(n, 1) == 1.0);
    }
  }
  SUBCASE("mass conservation and nondegenerate gaps on a sampled control") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> dist;
    StaticControlSample v0;
    v0.t0 = 0.0;
    v0.dt = 1e-3;
    v0.values = Eigen::MatrixXd::NullaryExpr(3, 201, [&](Eigen::Index, Eigen::Index) {
      return dist(rng);
    });
    const double T = 0.2;
    const auto s = build_schedule(v0, 8, 1e-4);
    for (int n = 0; n < 8; ++n) {
      double total = 0.0;
      for (int j = 1; j <= 6; ++j) total += s.raw_times(n, j) - s.raw_times(n, j - 1);
      CHECK(total == doctest::Approx(T / 8).epsilon(1e-12));
      for (int j = 1; j <= 6; ++j) {
        const double gap = s.eps_times(n, j) - s.eps_times(n, j - 1);
        CHECK(gap >= s.min_gap() * (1.0 - 1e-12));
      }
      CHECK(s.eps_times(n, 0) == s.raw_times(n, 0));
      CHECK(s.eps_times(n, 6) == s.raw_times(n, 6));
    }
  }
}

TEST_CASE("smoothing of actuators") {
  const SpectralModel model(0.1, 16);
  const ActuatorBank bank(2, 0.04);

  SUBCASE("generous budget terminates with the exact tail distance") {
    FeedbackConstants k;
    k.theta = 0.5;
    k.D_Y = 1.0;
    k.T = 1.0;
    k.K_frak = 0.05;  // budget = 0.05/1/1/0.05/2 = 0.5
    k.M = 2;
    const auto sm = smooth_actuators(model, bank, k);
    for (int j = 0; j < 2; ++j) {
      CHECK(sm.coeffs[j].norm() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(sm.h_distance[j] <= 0.5);
    }
    CHECK(sm.da_bound > 0.0);
  }
  SUBCASE("unattainable budget raises a configuration error") {
    FeedbackConstants k;
    k.theta = 0.5;
    k.D_Y = 4.0;
    k.T = 1.0;
    k.K_frak = 100.0;
    k.M = 2;
    CHECK_THROWS_AS(smooth_actuators(model, bank, k, 4096), ConfigError);
  }
  SUBCASE("truncation distance decreases monotonically") {
    const ActuatorWindow w(0.5, 0.04);
    double energy = 0.0;
    double prev = 2.0;
    for (int m = 1; m <= 64; ++m) {
      const double c = indicator_coeff(w, m) / std::sqrt(0.04);
      energy += c * c;
      const double dist = std::sqrt(std::max(0.0, 2.0 - 2.0 * std::sqrt(std::min(1.0, energy))));
      CHECK(dist <= prev + 1e-15);
      prev = dist;
    }
  }
  SUBCASE("normalization chain inequality") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> dist;
    for (int trial = 0; trial < 50; ++trial) {
      VectorXd h(12);
      for (int i = 0; i < 12; ++i) h[i] = dist(rng);
      h.normalize();
      VectorXd hbar = h + 0.05 * VectorXd::NullaryExpr(12, [&](Eigen::Index) { return dist(rng); });
      const double lhs = (hbar / hbar.norm() - h).norm();
      CHECK(lhs <= 2.0 * (hbar - h).norm() + 1e-12);
    }
  }
  SUBCASE("in-model actuators are already smooth") {
    const auto& st = setup();
    const auto sm = smooth_actuators_in_model(st.model, st.projector);
    CHECK(sm.h_distance.cwiseAbs().maxCoeff() == 0.0);
    for (const auto& c : sm.coeffs) CHECK(c.norm() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("theta bound behavior and theoretical parameters") {
  SUBCASE("theta bound decreases towards zero") {
    double prev = theta_bound(1.0, 16, 3, 1e-2);
    for (double eps = 5e-3; eps > 1e-6; eps *= 0.5) {
      const double cur = theta_bound(1.0, 16, 3, eps);
      CHECK(cur < prev);
      prev = cur;
    }
  }
  SUBCASE("theoretical N reproduces the factor product") {
    const auto& st = setup();
    const auto sm = smooth_actuators_in_model(st.model, st.projector);
    const auto p = choose_N_epsilon(st.constants, sm, SwitchMode::Theoretical, st.model);
    const auto& k = st.constants;
    const double expected = std::ceil(std::sqrt(k.D_Y) *
                                      (1.0 + k.C_rc / std::sqrt(st.model.eigenvalue(1))) *
                                      std::pow(k.T, 1.5) * (k.M + 1) * sm.da_bound * k.K_frak *
                                      10.0 / (1.0 - k.theta));
    CHECK(p.N == static_cast<int>(expected));
    CHECK(p.epsilon > 0.0);
    CHECK(p.xi > 0.0);
    CHECK(p.xi < 0.5 * p.epsilon * vartheta_factor(k.T, p.N, k.M, p.epsilon));
    // the reparameterization bound actually meets its target
    const double budget = (1.0 - k.theta) / 10.0;
    const double target =
        budget * budget / (8.0 * k.M * k.M * k.M * k.D_Y * p.N * k.K_frak * k.K_frak);
    CHECK(theta_bound(k.T, p.N, k.M, p.epsilon) <= target * (1.0 + 1e-9));
  }
  SUBCASE("empirical doubling against a synthetic error model") {
    FeedbackConstants k;
    k.theta = 0.5;
    k.T = 1.0;
    k.M = 2;
    k.K_frak = 1.0;
    k.D_Y = 1.0;
    SmoothedActuators sm;
    const SpectralModel model(0.1, 4);
    const auto probe = [](int N, double) { return std::make_pair(0.22 / N, 0.0); };
    const auto p1 = choose_N_epsilon(k, sm, SwitchMode::Empirical, model, probe, 1 << 16, 1.0);
    const auto p2 = choose_N_epsilon(k, sm, SwitchMode::Empirical, model, probe, 1 << 16, 0.5);
    CHECK(p1.N == 8);   // 0.22/8 = 0.0275 <= 0.05
    CHECK(p2.N == 16);  // halved budget doubles N
    CHECK(p2.N >= p1.N);
    CHECK(p2.N <= 4 * p1.N);
    CHECK(p1.epsilon == doctest::Approx(1.0 / (64.0 * 2 * 8)));
  }
}

TEST_CASE("piecewise switch distance") {
  const auto vec = [](double v) { return VectorXd::Constant(1, v); };
  SUBCASE("identical times give zero distance") {
    const std::vector<double> tau = {0.0, 0.4, 1.0};
    const auto res = piecewise_switch_distance(tau, tau, {vec(0.0), vec(1.0)});
    CHECK(res.distance == 0.0);
  }
  SUBCASE("worked instance") {
    const auto res = piecewise_switch_distance({0.0, 0.5, 1.0}, {0.0, 0.6, 1.0},
                                               {vec(0.0), vec(1.0)});
    CHECK(res.distance == doctest::Approx(std::sqrt(0.1)).epsilon(1e-12));
    CHECK(res.bound == doctest::Approx(std::sqrt(2.0) * std::sqrt(0.1)).epsilon(1e-12));
    CHECK(res.distance <= res.bound);
  }
  SUBCASE("bound holds over random instances") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    std::uniform_int_distribution<int> kd(1, 8);
    for (int trial = 0; trial < 200; ++trial) {
      const int K = kd(rng);
      std::vector<double> tau{0.0}, sigma{0.0};
      std::vector<VectorXd> values;
      for (int j = 0; j < K - 1; ++j) {
        tau.push_back(ud(rng));
        sigma.push_back(ud(rng));
      }
      tau.push_back(1.0);
      sigma.push_back(1.0);
      std::sort(tau.begin(), tau.end());
      std::sort(sigma.begin(), sigma.end());
      for (int j = 0; j < K; ++j) values.push_back(VectorXd::Constant(2, ud(rng) * 4 - 2));
      const auto res = piecewise_switch_distance(tau, sigma, values);
      CHECK(res.distance <= res.bound + 1e-12);
    }
  }
  SUBCASE("endpoint mismatch rejected") {
    CHECK_THROWS_AS(piecewise_switch_distance({0.0, 1.0}, {0.0, 2.0}, {vec(1.0)}),
                    PreconditionError);
  }
}

TEST_CASE("moving control geometry") {
  auto& st = setup();
  SwitchingPipeline::Options opts;
  opts.probe_states = 2;
  opts.quad_panels = 512;
  SwitchingPipeline pipeline(st.model, st.coeffs, st.bank, st.feedback, st.constants, opts);
  const auto& params = pipeline.parameters();
  std::mt19937_64 rng(19);
  const VectorXd v = random_unit_v_state(st.model, rng);
  auto v0 = pipeline.sample_static_control(v, 0);
  auto schedule = build_schedule(v0, params.N, params.epsilon);
  const MovingControl moving(&st.model, schedule, st.bank, params.xi);

  SUBCASE("quintic midpoint") {
    CHECK(MovingControl::smoothstep(0.5) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(MovingControl::smoothstep(0.0) == 0.0);
    CHECK(MovingControl::smoothstep(1.0) == doctest::Approx(1.0));
  }
  SUBCASE("transition midpoints blend signs and centers") {
    const double xi = moving.xi();
    for (int n = 0; n < std::min(3, schedule.N); ++n) {
      for (int j = 1; j < 2 * schedule.M; ++j) {
        const double tmid = schedule.eps_times(n, j);
        const ControlPoint p = moving.point(tmid);
        const double sl = schedule.signs(n, j - 1), sr = schedule.signs(n, j);
        CHECK(p.u == doctest::Approx(0.5 * (sl + sr) * schedule.sigma[n]).epsilon(1e-9));
        const int al = SwitchingSchedule::actuator_of_slot(j, schedule.M);
        const int ar = SwitchingSchedule::actuator_of_slot(j + 1, schedule.M);
        const double cmid = 0.5 * (st.bank.center(al) + st.bank.center(ar));
        CHECK(p.center == doctest::Approx(cmid).epsilon(1e-9));
        if (sl == sr && sl != 0.0) {
          // same sign: magnitude constant across the window
          const ControlPoint q = moving.point(tmid - 0.5 * xi);
          CHECK(q.u == doctest::Approx(sl * schedule.sigma[n]).epsilon(1e-12));
        }
        if (sl * sr < 0.0) {
          CHECK(std::abs(p.u) < 1e-12 * std::abs(schedule.sigma[n]));
        }
      }
    }
  }
  SUBCASE("plateau fidelity against the nondegenerate schedule") {
    Eigen::MatrixXd cols(st.model.n, st.bank.M);
    for (int j = 1; j <= st.bank.M; ++j) cols.col(j - 1) = st.projector.unit_actuator(j);
    const ScheduleControl v4(&schedule, cols, ScheduleControl::Times::Nondegenerate);
    std::mt19937_64 prng(5);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    int plateau_hits = 0;
    for (int trial = 0; trial < 400; ++trial) {
      const double t = schedule.t0 + ud(prng) * schedule.T;
      // skip transition windows
      bool transition = false;
      for (int n = 0; n < schedule.N && !transition; ++n)
        for (int j = 1; j < 2 * schedule.M; ++j)
          if (std::abs(t - schedule.eps_times(n, j)) <= moving.xi()) transition = true;
      if (transition) continue;
      ++plateau_hits;
      CHECK((moving.value(t) - v4.value(t)).norm() <= 1e-12);
    }
    CHECK(plateau_hits > 300);
  }
  SUBCASE("unit sphere along the motion") {
    for (double c = 0.1; c <= 0.9; c += 0.05)
      CHECK(moving.unit_window_coeffs(c).norm() == doctest::Approx(1.0).epsilon(1e-13));
  }
  SUBCASE("switching magnitude bounded by the sampled feedback") {
    CHECK(schedule.sigma.maxCoeff() <= st.bank.M * v0.sup_norm() * (1 + 1e-12));
  }
  SUBCASE("center motion respects the derivative bounds") {
    // sample c(.) inside one transition window and bound difference quotients
    const double xi = moving.xi();
    double max_dc = 0.0;
    for (int n = 0; n < schedule.N; ++n)
      for (int j = 1; j < 2 * schedule.M; ++j) {
        const int al = SwitchingSchedule::actuator_of_slot(j, schedule.M);
        const int ar = SwitchingSchedule::actuator_of_slot(j + 1, schedule.M);
        max_dc = std::max(max_dc, std::abs(st.bank.center(ar) - st.bank.center(al)));
      }
    const double bound_v = (1.0 / (2.0 * xi)) * 1.875 * max_dc;  // |phi'|_inf = 15/8
    // |phi''|_inf = 10/sqrt(3) for the quintic smoothstep
    const double bound_a = std::pow(1.0 / (2.0 * xi), 2) * (10.0 / std::sqrt(3.0)) * max_dc;
    const double t_tr = schedule.eps_times(0, 1);
    double worst_v = 0.0, worst_a = 0.0;
    const double h = xi / 200;
    for (double t = t_tr - xi; t + 2 * h <= t_tr + xi; t += h) {
      const double c0 = moving.point(t).center;
      const double c1 = moving.point(t + h).center;
      const double c2 = moving.point(t + 2 * h).center;
      worst_v = std::max(worst_v, std::abs((c1 - c0) / h));
      worst_a = std::max(worst_a, std::abs((c2 - 2 * c1 + c0) / (h * h)));
    }
    CHECK(worst_v <= bound_v * 1.05);
    CHECK(worst_a <= bound_a * 1.05);
  }
}

TEST_CASE("relaxation metric") {
  auto& st = setup();
  SwitchingPipeline::Options opts;
  opts.probe_states = 2;
  opts.quad_panels = 512;
  SwitchingPipeline pipeline(st.model, st.coeffs, st.bank, st.feedback, st.constants, opts);
  const auto& params = pipeline.parameters();
  std::mt19937_64 rng(21);
  const VectorXd v = random_unit_v_state(st.model, rng);
  auto v0_sample = pipeline.sample_static_control(v, 0);
  auto schedule = build_schedule(v0_sample, params.N, params.epsilon);

  Eigen::MatrixXd cols(st.model.n, st.bank.M);
  for (int j = 1; j <= st.bank.M; ++j) cols.col(j - 1) = st.projector.unit_actuator(j);
  const SampledBankControl v1(&v0_sample, cols);
  const ScheduleControl v2(&schedule, cols, ScheduleControl::Times::Raw);

  SUBCASE("identical controls have zero distance") {
    CHECK(relaxation_distance(v1, v1, st.model) == 0.0);
  }
  SUBCASE("schedule stays within the relaxation bound") {
    const auto sm = smooth_actuators_in_model(st.model, st.projector);
    const double dist = relaxation_distance(v2, v1, st.model);
    const double k_emp = std::max(st.constants.K_frak, v0_sample.sup_norm());
    const double bound = (st.constants.T / params.N) * (st.bank.M + 1) * sm.da_bound * k_emp;
    CHECK(dist <= bound);
    CHECK(dist > 0.0);
  }
  SUBCASE("primitive vanishes at subinterval boundaries") {
    const double scale = std::max(1.0, schedule.sigma.maxCoeff()) * st.constants.T;
    for (int n = 1; n <= schedule.N; ++n) {
      const double t = schedule.t0 + n * schedule.subinterval_length();
      const VectorXd primitive = relaxation_primitive(v2, v1, schedule.t0, t);
      CHECK(st.model.da_norm(primitive) <=
            1e-12 * scale * smooth_actuators_in_model(st.model, st.projector).da_bound);
    }
  }
}

TEST_CASE("pipeline verification and concatenation") {
  auto& st = setup();
  SwitchingPipeline::Options opts;
  opts.probe_states = 2;
  opts.quad_panels = 512;
  SwitchingPipeline pipeline(st.model, st.coeffs, st.bank, st.feedback, st.constants, opts);

  SUBCASE("zero initial state gives zero errors") {
    const auto report = pipeline.verify_pipeline(VectorXd::Zero(st.model.n), 0);
    for (const double e : report.stage_errors) CHECK(e == 0.0);
    CHECK(report.pass(st.constants.theta));
  }
  SUBCASE("random states satisfy the stage budgets and contraction") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 3; ++trial) {
      const VectorXd v = random_unit_v_state(st.model, rng);
      const auto report = pipeline.verify_pipeline(v, 0);
      const double budget = (1.0 - st.constants.theta) / 10.0 * report.v_norm;
      CHECK(report.stage_errors[0] <= 1e-12);  // in-model smoothing is exact
      CHECK(report.stage_errors[2] <= 1e-12);
      for (const double e : report.stage_errors) CHECK(e <= budget * (1 + 1e-9));
      CHECK(report.contraction <= 0.5 * (st.constants.theta + 1.0) + 1e-9);
      // triangle inequality for the whole chain
      double total = 0.0;
      for (const double e : report.stage_errors) total += e;
      CHECK(total <= 5.0 * budget * (1 + 1e-9));
    }
  }
  SUBCASE("concatenation decays geometrically") {
    std::mt19937_64 rng(13);
    const VectorXd y0 = random_unit_v_state(st.model, rng);
    const auto result = pipeline.concatenate_intervals(y0, 2);
    REQUIRE(result.v_norms.size() == 3);
    const double factor = 0.5 * (st.constants.theta + 1.0);
    CHECK(result.v_norms[1] <= factor * result.v_norms[0] * (1 + 1e-9));
    CHECK(result.v_norms[2] <= factor * result.v_norms[1] * (1 + 1e-9));
    // the control samples exist and the actuator starts and ends at the first bank center
    CHECK(result.c_samples.front() == doctest::Approx(st.bank.center(1)));
    CHECK(result.c_samples.back() == doctest::Approx(st.bank.center(1)));
  }
}

TEST_CASE("halving the empirical budget keeps the subinterval count stable") {
  // stricter budgets never decrease N, and the doubling mechanism keeps the
  // growth within one extra doubling here
  auto& st = setup();
  SwitchingPipeline::Options opts;
  opts.probe_states = 2;
  opts.quad_panels = 512;
  SwitchingPipeline full(st.model, st.coeffs, st.bank, st.feedback, st.constants, opts);
  opts.budget_scale *= 0.5;
  SwitchingPipeline half(st.model, st.coeffs, st.bank, st.feedback, st.constants, opts);
  const int n_full = full.parameters().N;
  const int n_half = half.parameters().N;
  CHECK(n_half >= n_full);
  CHECK(n_half <= 4 * n_full);
}

TEST_CASE("initial approach path") {
  CHECK(initial_approach_path(0.3, 0.7, 0.0) == doctest::Approx(0.3));
  CHECK(initial_approach_path(0.3, 0.7, 1.0) == doctest::Approx(0.7));
  const double h = 1e-6;
  const double dend =
      (initial_approach_path(0.3, 0.7, 1.0) - initial_approach_path(0.3, 0.7, 1.0 - h)) / h;
  CHECK(std::abs(dend) < 1e-4);
}
