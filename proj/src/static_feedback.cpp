#include "parastab/static_feedback.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>

namespace parastab {

ActuatorBank::ActuatorBank(int M_, double r_) : M(M_), r(r_) {
  if (M < 1) throw ConfigError("ActuatorBank: M must be positive");
  if (!(r > 0.0) || r >= 1.0 / M)
    throw ConfigError("ActuatorBank: width " + std::to_string(r) +
                      " breaks disjointness for M = " + std::to_string(M));
  windows.reserve(M);
  for (int i = 1; i <= M; ++i) windows.emplace_back((2.0 * i - 1.0) / (2.0 * M), r);
}

ObliqueProjector ObliqueProjector::build(const SpectralModel& model, const ActuatorBank& bank,
                                         double max_condition) {
  ObliqueProjector p;
  const int n = model.n, m = bank.M;
  if (n < m) throw ConfigError("ObliqueProjector: need at least M spectral modes");
  p.indicator_coeffs_.resize(n, m);
  for (int j = 0; j < m; ++j)
    p.indicator_coeffs_.col(j) = spectral_coeffs_of_indicator(model, bank.windows[j], false);
  p.indicator_norms_ = p.indicator_coeffs_.colwise().norm();
  p.gram_ = p.indicator_coeffs_.topRows(m);

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(p.gram_);
  p.gram_condition_ = svd.singularValues()(0) / svd.singularValues()(m - 1);
  if (!(p.gram_condition_ < max_condition))
    throw ConfigError("ObliqueProjector: ill-conditioned Gram matrix (M = " + std::to_string(m) +
                      ", r = " + std::to_string(bank.r) + ")");
  p.gram_lu_ = Eigen::PartialPivLU<Eigen::MatrixXd>(p.gram_);

  // power iteration on P*P for the H operator norm
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(n, 1.0, 2.0).normalized();
  double norm_sq = 0.0;
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd px = p.indicator_coeffs_ * p.gram_lu_.solve(x.head(m));
    Eigen::VectorXd ptpx = Eigen::VectorXd::Zero(n);
    ptpx.head(m) = p.gram_lu_.transpose().solve(p.indicator_coeffs_.transpose() * px);
    norm_sq = ptpx.norm();
    if (norm_sq == 0.0) break;
    x = ptpx / norm_sq;
  }
  p.op_norm_ = std::sqrt(norm_sq);
  return p;
}

Eigen::VectorXd ObliqueProjector::gram_solve(const Eigen::VectorXd& head) const {
  return gram_lu_.solve(head);
}

Eigen::VectorXd ObliqueProjector::apply(const Eigen::VectorXd& h) const {
  return indicator_coeffs_ * gram_solve(h.head(M()));
}

Eigen::VectorXd ObliqueProjector::unit_magnitudes(const Eigen::VectorXd& beta) const {
  return beta.cwiseProduct(indicator_norms_);
}

Eigen::VectorXd ClosedLoopFeedback::beta(const Eigen::MatrixXd& arc,
                                         const Eigen::VectorXd& y) const {
  const int m = projector_.M();
  Eigen::VectorXd head = (arc * y).head(m) - lambda_ * y.head(m);
  return projector_.gram_solve(head);
}

Eigen::VectorXd ClosedLoopFeedback::forcing(const Eigen::MatrixXd& arc,
                                            const Eigen::VectorXd& y) const {
  return projector_.indicator_coeffs() * beta(arc, y);
}

Eigen::VectorXd ClosedLoopFeedback::magnitudes(const Eigen::MatrixXd& arc,
                                               const Eigen::VectorXd& y) const {
  return projector_.unit_magnitudes(beta(arc, y));
}

double default_lambda(const Coefficients& coeffs, double t_max) {
  double min_shift = std::numeric_limits<double>::infinity();
  const int nt = 64, nx = 129;
  for (int it = 0; it <= nt; ++it)
    for (int ix = 0; ix <= nx; ++ix) {
      const double v = coeffs.reaction(t_max * it / nt, static_cast<double>(ix) / nx) - 1.0;
      min_shift = std::min(min_shift, v);
    }
  return 2.0 * std::abs(min_shift) + 1.0;
}

Trajectory simulate_closed_loop(const SpectralModel& model, const Coefficients& coeffs,
                                const SpectralArcTape& tape, const ClosedLoopFeedback& feedback,
                                const Eigen::VectorXd& y0, double t0, double dt, int steps) {
  SpectralCnab stepper = SpectralCnab::for_model(model, coeffs, &tape, t0, dt);
  const SpectralCnab::Feedback fb = [&](double, const Eigen::VectorXd& y, int k) {
    return feedback.forcing(tape.at(k), y);
  };
  return stepper.run(y0, steps, nullptr, &fb);
}

Eigen::VectorXd random_unit_v_state(const SpectralModel& model, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  Eigen::VectorXd y(model.n);
  for (int i = 0; i < model.n; ++i) y[i] = dist(rng);
  return y / model.v_norm(y);
}

namespace {

struct TransitionSample {
  double tau;
  double v_norm;
};

// Propagates the n basis states of the closed loop from grid index s_idx and
// samples the V operator norm of the transition map. The steppers run without
// a bound tape (their step counter starts at zero mid-tape); the arc term and
// the feedback both enter through the callback, indexed by s_idx + k.
void sample_transition_norms(const SpectralModel& model, const Coefficients& coeffs,
                             const SpectralArcTape& tape, const ClosedLoopFeedback& feedback,
                             int s_idx, int end_idx, double dt, int stride,
                             std::vector<TransitionSample>& out) {
  const int n = model.n;
  const Eigen::VectorXd dv = model.eigenvalues().cwiseSqrt();
  const double shift = coeffs.reaction.constant_part() - 1.0;
  const SpectralCnab::Feedback fb = [&](double, const Eigen::VectorXd& y, int k) {
    const Eigen::MatrixXd& arc = tape.at(s_idx + k);
    Eigen::VectorXd g = feedback.forcing(arc, y);
    g.noalias() -= arc * y;
    g += shift * y;
    return g;
  };
  std::vector<SpectralCnab> steppers;
  steppers.reserve(n);
  Eigen::MatrixXd y(n, n);
  for (int c = 0; c < n; ++c) {
    steppers.push_back(SpectralCnab::for_model(model, coeffs, nullptr, s_idx * dt, dt));
    steppers[c].reset(Eigen::VectorXd::Unit(n, c));
  }
  const int total = end_idx - s_idx;
  for (int k = 1; k <= total; ++k) {
    for (int c = 0; c < n; ++c) y.col(c) = steppers[c].step(nullptr, &fb);
    if (k % stride == 0 || k == total) {
      const Eigen::MatrixXd yv = dv.asDiagonal() * y * dv.cwiseInverse().asDiagonal();
      out.push_back({k * dt, yv.operatorNorm()});
    }
  }
}

}  // namespace

FeedbackConstants estimate_constants(const SpectralModel& model, const Coefficients& coeffs,
                                     const ClosedLoopFeedback& feedback, double theta,
                                     const EstimateOptions& opts) {
  if (!(theta > 0.0 && theta < 1.0)) throw ConfigError("estimate_constants: theta in (0,1)");
  std::mt19937_64 rng(opts.seed);
  const double dt = opts.dt;

  FeedbackConstants k;
  k.theta = theta;
  k.lambda = feedback.lambda();
  k.M = feedback.projector().M();

  double horizon = 2.0;
  SpectralArcTape tape;
  for (int attempt = 0;; ++attempt) {
    const int steps = static_cast<int>(std::lround(horizon / dt));
    tape = SpectralArcTape::build(model, coeffs, 0.0, dt, steps, opts.quad_panels);
    std::vector<TransitionSample> samples;
    for (const int s_idx : {0, steps / 3, 2 * steps / 3})
      sample_transition_norms(model, coeffs, tape, feedback, s_idx, steps, dt, opts.norm_stride,
                              samples);
    // least-squares line through log(norm) vs tau
    double st = 0, sv = 0, stt = 0, stv = 0;
    for (const auto& s : samples) {
      const double lv = std::log(s.v_norm);
      st += s.tau;
      sv += lv;
      stt += s.tau * s.tau;
      stv += s.tau * lv;
    }
    const int m = static_cast<int>(samples.size());
    const double slope = (m * stv - st * sv) / (m * stt - st * st);
    k.mu = -slope;
    if (!(k.mu > 0.0))
      throw StabilizationError(
          "estimate_constants: no closed-loop decay detected; increase M or lambda");
    double c = 1.0;
    for (const auto& s : samples) c = std::max(c, s.v_norm * std::exp(k.mu * s.tau));
    k.C = c;
    k.T = std::log(k.C / theta) / k.mu;
    if (k.T <= horizon || attempt >= opts.max_enlargements) break;
    horizon = 1.25 * k.T;
  }
  if (!(k.T > 0.0)) k.T = dt;

  // theta-squeeze re-verification over three consecutive intervals;
  // on failure enlarge T and retry
  for (;;) {
    const int steps_t = static_cast<int>(std::ceil(k.T / dt));
    k.T = steps_t * dt;  // align the horizon with the step grid
    const int total = 3 * steps_t;
    tape = SpectralArcTape::build(model, coeffs, 0.0, dt, total, opts.quad_panels);
    bool ok = true;
    std::mt19937_64 check_rng(opts.seed + 1);
    for (int probe = 0; probe < opts.squeeze_checks && ok; ++probe) {
      const Eigen::VectorXd y0 = random_unit_v_state(model, check_rng);
      const Trajectory traj = simulate_closed_loop(model, coeffs, tape, feedback, y0, 0.0, dt, total);
      for (int interval = 0; interval < 3; ++interval) {
        const double before = model.v_norm(traj.states[interval * steps_t]);
        const double after = model.v_norm(traj.states[(interval + 1) * steps_t]);
        if (after > theta * before) {
          ok = false;
          break;
        }
      }
    }
    if (ok) break;
    if (k.t_enlargements >= opts.max_enlargements)
      throw StabilizationError("estimate_constants: theta-squeeze keeps failing; increase M or lambda");
    k.T *= 1.25;
    ++k.t_enlargements;
  }

  // feedback magnitude bound K on [0, T]
  const int steps_t = static_cast<int>(std::lround(k.T / dt));
  double kappa = 0.0;
  for (int probe = 0; probe < opts.probes; ++probe) {
    const Eigen::VectorXd y0 = random_unit_v_state(model, rng);
    const Trajectory traj = simulate_closed_loop(model, coeffs, tape, feedback, y0, 0.0, dt, steps_t);
    for (int s = 0; s <= steps_t; ++s)
      kappa = std::max(kappa, feedback.magnitudes(tape.at(s), traj.states[s]).norm());
  }
  k.K_frak = opts.kappa_safety * kappa;

  // input-to-state constant D_Y on the free system with forcing
  double dy = 1.0;
  std::uniform_real_distribution<double> omega_dist(0.2, 3.0), phase_dist(0.0, 6.28);
  std::normal_distribution<double> amp_dist;
  for (int probe = 0; probe < opts.probes; ++probe) {
    const Eigen::VectorXd y0 = random_unit_v_state(model, rng);
    const int mmax = std::min(8, model.n);
    Eigen::VectorXd amp(mmax), omega(mmax), phase(mmax);
    for (int i = 0; i < mmax; ++i) {
      amp[i] = amp_dist(rng);
      omega[i] = omega_dist(rng);
      phase[i] = phase_dist(rng);
    }
    LambdaForcing f(model.n, [&](double t) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(model.n);
      for (int i = 0; i < mmax; ++i) v[i] = amp[i] * std::sin(omega[i] * t + phase[i]);
      return v;
    });
    SpectralCnab stepper = SpectralCnab::for_model(model, coeffs, &tape, 0.0, dt);
    const Trajectory traj = stepper.run(y0, steps_t, &f);
    // squared L2(0,T; H) norm of the forcing by the trapezoid rule
    double f_sq = 0.0;
    for (int s = 0; s <= steps_t; ++s) {
      const double w = (s == 0 || s == steps_t) ? 0.5 : 1.0;
      f_sq += w * dt * f.value(s * dt).squaredNorm();
    }
    for (int s = 0; s <= steps_t; ++s) {
      const double num = std::pow(model.v_norm(traj.states[s]), 2);
      dy = std::max(dy, num / (1.0 + f_sq));
    }
  }
  k.D_Y = opts.dy_safety * dy;

  // C_rc = sup_t |A_rc(t)| as an operator V -> H
  const Eigen::VectorXd dv_inv = model.eigenvalues().cwiseSqrt().cwiseInverse();
  double crc = 0.0;
  const int samples = tape.time_invariant() ? 1 : tape.samples();
  for (int s = 0; s < samples; s += std::max(1, samples / 40)) {
    const Eigen::MatrixXd m = tape.at(s) * dv_inv.asDiagonal();
    crc = std::max(crc, m.operatorNorm());
  }
  k.C_rc = crc;
  return k;
}

}  // namespace parastab
