#include "parastab/switching.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace parastab {

namespace {
constexpr double kPi = std::numbers::pi;

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// 8-point Gauss-Legendre rule on [-1, 1].
constexpr std::array<double, 8> kGaussX = {
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
    0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
constexpr std::array<double, 8> kGaussW = {
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
    0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};

std::vector<double> merged_grid(std::vector<double> a, const std::vector<double>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  std::vector<double> out;
  out.reserve(a.size());
  for (const double t : a)
    if (out.empty() || t - out.back() > 1e-15 * std::max(1.0, std::abs(t))) out.push_back(t);
  return out;
}
}  // namespace

Eigen::VectorXd StaticControlSample::at(double t) const {
  const int k = steps();
  double s = (t - t0) / dt;
  s = std::clamp(s, 0.0, static_cast<double>(k));
  const int i = std::min(static_cast<int>(s), k - 1);
  const double w = s - i;
  return (1.0 - w) * values.col(i) + w * values.col(i + 1);
}

double StaticControlSample::integral_component(int j, double a, double b) const {
  if (b <= a) return 0.0;
  const int k = steps();
  const double lo = std::clamp((a - t0) / dt, 0.0, static_cast<double>(k));
  const double hi = std::clamp((b - t0) / dt, 0.0, static_cast<double>(k));
  const auto value_at = [&](double s) {
    const int i = std::min(static_cast<int>(s), k - 1);
    const double w = s - i;
    return (1.0 - w) * values(j, i) + w * values(j, i + 1);
  };
  const int first_full = static_cast<int>(std::ceil(lo));
  const int last_full = static_cast<int>(std::floor(hi));
  double acc = 0.0;
  if (first_full > last_full) {
    // inside one step
    acc = 0.5 * (value_at(lo) + value_at(hi)) * (hi - lo);
  } else {
    if (lo < first_full) acc += 0.5 * (value_at(lo) + values(j, first_full)) * (first_full - lo);
    for (int i = first_full; i < last_full; ++i) acc += 0.5 * (values(j, i) + values(j, i + 1));
    if (hi > last_full) acc += 0.5 * (values(j, last_full) + value_at(hi)) * (hi - last_full);
  }
  return acc * dt;
}

Eigen::VectorXd StaticControlSample::integral(double a, double b) const {
  Eigen::VectorXd out(values.rows());
  for (int j = 0; j < values.rows(); ++j) out[j] = integral_component(j, a, b);
  return out;
}

double StaticControlSample::sup_norm() const {
  double best = 0.0;
  for (int i = 0; i < values.cols(); ++i) best = std::max(best, values.col(i).norm());
  return best;
}

SmoothedActuators smooth_actuators(const SpectralModel& model, const ActuatorBank& bank,
                                   const FeedbackConstants& constants, int max_order) {
  const double budget = (1.0 - constants.theta) / 10.0 / std::sqrt(constants.D_Y) /
                        std::sqrt(constants.T) / std::max(constants.K_frak, 1e-12) / bank.M;
  SmoothedActuators out;
  out.h_distance.resize(bank.M);
  double da_bound = 0.0;
  for (int j = 0; j < bank.M; ++j) {
    const ActuatorWindow& w = bank.windows[j];
    const double inv_sqrt_r = 1.0 / std::sqrt(w.width());
    std::vector<double> coeffs;
    coeffs.reserve(256);
    double energy = 0.0;
    int order = -1;
    for (int m = 1; m <= max_order; ++m) {
      const double c = indicator_coeff(w, m) * inv_sqrt_r;
      coeffs.push_back(c);
      energy += c * c;
      const double s = std::sqrt(std::min(energy, 1.0));
      const double distance = std::sqrt(std::max(0.0, 2.0 - 2.0 * s));
      if (distance <= budget) {
        order = m;
        out.h_distance[j] = distance;
        break;
      }
    }
    if (order < 0)
      throw ConfigError("smooth_actuators: H-distance budget " + std::to_string(budget) +
                        " unattainable within truncation order " + std::to_string(max_order));
    Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(coeffs.data(), order) / std::sqrt(energy);
    double da_sq = 0.0;
    for (int m = 1; m <= order; ++m) {
      const double alpha = 1.0 + model.nu * m * m * kPi * kPi;
      da_sq += alpha * alpha * v[m - 1] * v[m - 1];
    }
    da_bound = std::max(da_bound, std::sqrt(da_sq));
    out.coeffs.push_back(std::move(v));
    out.orders.push_back(order);
  }
  out.da_bound = da_bound;
  return out;
}

SmoothedActuators smooth_actuators_in_model(const SpectralModel& model,
                                            const ObliqueProjector& projector) {
  SmoothedActuators out;
  const int m = projector.M();
  out.h_distance = Eigen::VectorXd::Zero(m);
  double da_bound = 0.0;
  for (int j = 1; j <= m; ++j) {
    Eigen::VectorXd v = projector.unit_actuator(j);
    da_bound = std::max(da_bound, model.da_norm(v));
    out.coeffs.push_back(std::move(v));
    out.orders.push_back(model.n);
  }
  out.da_bound = da_bound;
  return out;
}

double vartheta_factor(double T, int N, int M, double epsilon) {
  return T / (T + N * (2.0 * M + 1.0) * M * epsilon);
}

double theta_bound(double T, int N, int M, double epsilon) {
  const double q = (2.0 * M + 1.0) * M * epsilon;
  return 2.0 * T * q / (T + N * q);
}

SwitchingSchedule build_schedule(const StaticControlSample& v0, int N, double epsilon) {
  if (N < 1) throw PreconditionError("build_schedule: N must be at least 1");
  if (N > (1 << 26))
    throw PreconditionError("build_schedule: subinterval count too large to materialize");
  if (!(epsilon > 0.0)) throw PreconditionError("build_schedule: epsilon must be positive");
  const int M = static_cast<int>(v0.values.rows());
  SwitchingSchedule s;
  s.t0 = v0.t0;
  s.T = v0.span();
  s.N = N;
  s.M = M;
  s.epsilon = epsilon;
  s.vartheta = vartheta_factor(s.T, N, M, epsilon);
  s.sigma.resize(N);
  s.raw_times.resize(N, 2 * M + 1);
  s.eps_times.resize(N, 2 * M + 1);
  s.signs.resize(N, 2 * M);

  const double sub = s.T / N;
  for (int n = 0; n < N; ++n) {
    const double a = s.t0 + n * sub;
    const double b = (n + 1 == N) ? s.t0 + s.T : s.t0 + (n + 1) * sub;
    Eigen::VectorXd ints(M);
    for (int j = 0; j < M; ++j) ints[j] = v0.integral_component(j, a, b);
    const double sigma_n = (N / s.T) * ints.cwiseAbs().sum();
    s.sigma[n] = sigma_n;

    s.raw_times(n, 0) = a;
    if (sigma_n > 0.0) {
      // mirrored lengths l_j = l_{2M+1-j} = ints_j / (2 sigma_n)
      double cursor = a;
      for (int j = 1; j <= 2 * M; ++j) {
        const int src = (j <= M) ? j : 2 * M + 1 - j;
        const double l = ints[src - 1] / (2.0 * sigma_n);
        s.signs(n, j - 1) = sign_of(l);
        cursor += std::abs(l);
        s.raw_times(n, j) = cursor;
      }
      s.raw_times(n, 2 * M) = b;  // lengths sum to the subinterval exactly
    } else {
      for (int j = 1; j <= 2 * M; ++j) {
        s.signs(n, j - 1) = 0.0;
        s.raw_times(n, j) = a + j * sub / (2.0 * M);
      }
      s.raw_times(n, 2 * M) = b;
    }
    // nondegenerate reparameterization
    s.eps_times(n, 0) = a;
    for (int j = 1; j <= 2 * M; ++j) {
      const double shift = 0.5 * (j + 1.0) * j * epsilon;
      s.eps_times(n, j) = a + s.vartheta * (s.raw_times(n, j) - a + shift);
    }
    s.eps_times(n, 2 * M) = b;
  }
  return s;
}

SampledBankControl::SampledBankControl(const StaticControlSample* sample,
                                       Eigen::MatrixXd actuator_coeffs)
    : sample_(sample), actuators_(std::move(actuator_coeffs)) {
  if (actuators_.cols() != sample_->values.rows())
    throw PreconditionError("SampledBankControl: actuator count mismatch");
}

std::vector<double> SampledBankControl::breakpoints() const {
  std::vector<double> out;
  out.reserve(sample_->steps() + 1);
  for (int k = 0; k <= sample_->steps(); ++k) out.push_back(sample_->t0 + k * sample_->dt);
  return out;
}

ScheduleControl::ScheduleControl(const SwitchingSchedule* schedule, Eigen::MatrixXd actuator_coeffs,
                                 Times times)
    : schedule_(schedule), actuators_(std::move(actuator_coeffs)),
      use_eps_(times == Times::Nondegenerate) {
  if (actuators_.cols() != schedule_->M)
    throw PreconditionError("ScheduleControl: actuator count mismatch");
}

std::pair<int, int> ScheduleControl::locate(double t) const {
  const auto& tm = times();
  const double sub = schedule_->subinterval_length();
  int n = static_cast<int>(std::floor((t - schedule_->t0) / sub));
  n = std::clamp(n, 0, schedule_->N - 1);
  // left limit at the final instant
  int j = 2 * schedule_->M;
  for (int jj = 1; jj <= 2 * schedule_->M; ++jj) {
    if (t < tm(n, jj)) {
      j = jj;
      break;
    }
  }
  return {n, j};
}

Eigen::VectorXd ScheduleControl::value(double t) const {
  const auto [n, j] = locate(t);
  const double mag = schedule_->signs(n, j - 1) * schedule_->sigma[n];
  const int act = SwitchingSchedule::actuator_of_slot(j, schedule_->M);
  return mag * actuators_.col(act - 1);
}

Eigen::VectorXd ScheduleControl::integral(double a, double b) const {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(actuators_.rows());
  if (b <= a) return acc;
  const auto& tm = times();
  const double sub = schedule_->subinterval_length();
  const int n_lo =
      std::clamp(static_cast<int>(std::floor((a - schedule_->t0) / sub)), 0, schedule_->N - 1);
  const int n_hi =
      std::clamp(static_cast<int>(std::floor((b - schedule_->t0) / sub)), 0, schedule_->N - 1);
  for (int n = n_lo; n <= n_hi; ++n) {
    for (int j = 1; j <= 2 * schedule_->M; ++j) {
      const double lo = std::max(a, tm(n, j - 1));
      const double hi = std::min(b, tm(n, j));
      if (hi <= lo) continue;
      const double mag = schedule_->signs(n, j - 1) * schedule_->sigma[n];
      if (mag == 0.0) continue;
      const int act = SwitchingSchedule::actuator_of_slot(j, schedule_->M);
      acc += (hi - lo) * mag * actuators_.col(act - 1);
    }
  }
  return acc;
}

std::vector<double> ScheduleControl::breakpoints() const {
  const auto& tm = times();
  std::vector<double> out;
  out.reserve(schedule_->N * 2 * schedule_->M + 1);
  out.push_back(tm(0, 0));
  for (int n = 0; n < schedule_->N; ++n)
    for (int j = 1; j <= 2 * schedule_->M; ++j) out.push_back(tm(n, j));
  return out;
}

MovingControl::MovingControl(const SpectralModel* model, SwitchingSchedule schedule,
                             const ActuatorBank& bank, double xi)
    : model_(model), schedule_(std::move(schedule)), r_(bank.r), xi_(xi) {
  const double gap = schedule_.min_gap();
  if (!(xi > 0.0) || !(xi < 0.5 * gap))
    throw PreconditionError("MovingControl: xi must lie in (0, eps vartheta / 2)");
  for (const auto& w : bank.windows) centers_.push_back(w.center);
  for (int j = 1; j <= schedule_.M; ++j)
    plateau_coeffs_.push_back(unit_window_coeffs(centers_[j - 1]));

  const int M = schedule_.M;
  segments_.reserve(schedule_.N * (4 * M - 1));
  for (int n = 0; n < schedule_.N; ++n) {
    for (int j = 1; j <= 2 * M; ++j) {
      const double start = (j == 1) ? schedule_.eps_times(n, 0) : schedule_.eps_times(n, j - 1) + xi_;
      const double end =
          (j == 2 * M) ? schedule_.eps_times(n, 2 * M) : schedule_.eps_times(n, j) - xi_;
      segments_.push_back({start, end, n, j, false});
      if (j < 2 * M)
        segments_.push_back(
            {schedule_.eps_times(n, j) - xi_, schedule_.eps_times(n, j) + xi_, n, j, true});
    }
  }
}

double MovingControl::slot_center(int slot) const {
  return centers_[SwitchingSchedule::actuator_of_slot(slot, schedule_.M) - 1];
}

Eigen::VectorXd MovingControl::unit_window_coeffs(double c) const {
  const ActuatorWindow w(c, r_);
  Eigen::VectorXd v = spectral_coeffs_of_indicator(*model_, w, false);
  return v / v.norm();
}

const MovingControl::Segment& MovingControl::segment_at(double t) const {
  int lo = 0, hi = static_cast<int>(segments_.size()) - 1;
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (t < segments_[mid].t1)
      hi = mid;
    else
      lo = mid + 1;
  }
  return segments_[lo];
}

ControlPoint MovingControl::point_in(const Segment& seg, double t) const {
  const double sigma = schedule_.sigma[seg.n];
  if (!seg.transition) {
    const double sign = schedule_.signs(seg.n, seg.slot - 1);
    return {sign * sigma, slot_center(seg.slot)};
  }
  const double s = std::clamp((t - seg.t0) / (seg.t1 - seg.t0), 0.0, 1.0);
  const double sign_l = schedule_.signs(seg.n, seg.slot - 1);
  const double sign_r = schedule_.signs(seg.n, seg.slot);
  const double blend = (1.0 - s) * sign_l + s * sign_r;
  const double c_l = slot_center(seg.slot), c_r = slot_center(seg.slot + 1);
  return {blend * sigma, c_l + smoothstep(s) * (c_r - c_l)};
}

ControlPoint MovingControl::point(double t) const { return point_in(segment_at(t), t); }

Eigen::VectorXd MovingControl::value(double t) const {
  const Segment& seg = segment_at(t);
  const ControlPoint p = point_in(seg, t);
  if (!seg.transition) {
    const int act = SwitchingSchedule::actuator_of_slot(seg.slot, schedule_.M);
    return p.u * plateau_coeffs_[act - 1];
  }
  return p.u * unit_window_coeffs(p.center);
}

Eigen::VectorXd MovingControl::integral(double a, double b) const {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(model_->n);
  if (b <= a) return acc;
  const auto first = std::lower_bound(
      segments_.begin(), segments_.end(), a,
      [](const Segment& seg, double t) { return seg.t1 <= t; });
  for (auto it = first; it != segments_.end() && it->t0 < b; ++it) {
    const Segment& seg = *it;
    const double lo = std::max(a, seg.t0);
    const double hi = std::min(b, seg.t1);
    if (hi <= lo) continue;
    if (!seg.transition) {
      const ControlPoint p = point_in(seg, lo);
      const int act = SwitchingSchedule::actuator_of_slot(seg.slot, schedule_.M);
      acc += (hi - lo) * p.u * plateau_coeffs_[act - 1];
    } else {
      const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
      for (int q = 0; q < 8; ++q) {
        const double tq = mid + half * kGaussX[q];
        acc += half * kGaussW[q] * value(tq);
      }
    }
  }
  return acc;
}

std::vector<double> MovingControl::breakpoints() const {
  std::vector<double> out;
  out.reserve(segments_.size() + 1);
  out.push_back(segments_.front().t0);
  for (const auto& seg : segments_) out.push_back(seg.t1);
  return out;
}

Eigen::VectorXd relaxation_primitive(const CoefficientControl& f, const CoefficientControl& g,
                                     double from, double to) {
  return f.integral(from, to) - g.integral(from, to);
}

double relaxation_distance(const CoefficientControl& f, const CoefficientControl& g,
                           const SpectralModel& model) {
  const std::vector<double> grid = merged_grid(f.breakpoints(), g.breakpoints());
  if (grid.size() < 2) return 0.0;
  Eigen::VectorXd primitive = Eigen::VectorXd::Zero(f.dim());
  double best = 0.0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    primitive += f.integral(grid[i], grid[i + 1]) - g.integral(grid[i], grid[i + 1]);
    best = std::max(best, model.da_norm(primitive));
  }
  return best;
}

SwitchDistanceResult piecewise_switch_distance(const std::vector<double>& tau,
                                               const std::vector<double>& sigma,
                                               const std::vector<Eigen::VectorXd>& values) {
  const int K = static_cast<int>(values.size());
  if (K < 1) throw PreconditionError("piecewise_switch_distance: empty value sequence");
  if (static_cast<int>(tau.size()) != K + 1 || static_cast<int>(sigma.size()) != K + 1)
    throw PreconditionError("piecewise_switch_distance: need K+1 switching times");
  if (tau.front() != sigma.front() || tau.back() != sigma.back())
    throw PreconditionError("piecewise_switch_distance: endpoint mismatch");
  for (int j = 0; j < K; ++j)
    if (tau[j + 1] < tau[j] || sigma[j + 1] < sigma[j])
      throw PreconditionError("piecewise_switch_distance: times must be nondecreasing");

  std::vector<double> events(tau);
  events.insert(events.end(), sigma.begin(), sigma.end());
  std::sort(events.begin(), events.end());
  const auto index_at = [K](const std::vector<double>& times, double t) {
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    return std::clamp(static_cast<int>(it - times.begin()), 1, K);
  };
  double dist_sq = 0.0;
  for (std::size_t i = 0; i + 1 < events.size(); ++i) {
    const double lo = events[i], hi = events[i + 1];
    if (hi <= lo) continue;
    const double mid = 0.5 * (lo + hi);
    const int ja = index_at(tau, mid), jb = index_at(sigma, mid);
    if (ja != jb) dist_sq += (hi - lo) * (values[ja - 1] - values[jb - 1]).squaredNorm();
  }
  SwitchDistanceResult out;
  out.distance = std::sqrt(dist_sq);
  double r_max = 0.0;
  for (int j = 0; j <= K; ++j) r_max = std::max(r_max, std::abs(tau[j] - sigma[j]));
  double x_max = 0.0;
  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j) x_max = std::max(x_max, (values[i] - values[j]).norm());
  out.bound = std::sqrt(static_cast<double>(K)) * std::sqrt(r_max) * x_max;
  return out;
}

SwitchParams choose_N_epsilon(const FeedbackConstants& constants,
                              const SmoothedActuators& smoothed, SwitchMode mode,
                              const SpectralModel& model,
                              const std::function<std::pair<double, double>(int, double)>& probe,
                              int max_n, double budget_scale) {
  const double T = constants.T;
  const int M = constants.M;
  const double theta = constants.theta;
  const double kf = std::max(constants.K_frak, 1e-12);
  SwitchParams p;
  p.mode = mode;

  if (mode == SwitchMode::Theoretical) {
    const double id_da_to_v = 1.0 / std::sqrt(model.eigenvalue(1));
    const double n_real = std::sqrt(constants.D_Y) * (1.0 + constants.C_rc * id_da_to_v) *
                          std::pow(T, 1.5) * (M + 1) * smoothed.da_bound * kf * 10.0 /
                          (1.0 - theta);
    p.N_real = std::max(1.0, std::ceil(n_real));
    p.N = static_cast<int>(std::min(p.N_real, 2147483647.0));
    const double budget = (1.0 - theta) / 10.0;
    const double target =
        budget * budget / (8.0 * M * M * M * constants.D_Y * p.N_real * kf * kf);
    const double sup = 2.0 * T / p.N_real;
    if (target >= sup) {
      p.epsilon = T / (64.0 * M * p.N_real);
    } else {
      const double q = target * T / (2.0 * T - target * p.N_real);
      p.epsilon = 0.995 * q / ((2.0 * M + 1.0) * M);
    }
    const double vt = T / (T + p.N_real * (2.0 * M + 1.0) * M * p.epsilon);
    const double xi_budget =
        budget * budget / (2.0 * constants.D_Y * p.N_real * (2.0 * M - 1.0) * M * M * kf * kf);
    p.xi = std::min(0.45 * p.epsilon * vt, xi_budget);
    return p;
  }

  if (!probe)
    throw PreconditionError("choose_N_epsilon: empirical mode needs a probe callback");
  const double budget = budget_scale * (1.0 - theta) / 10.0;
  // phase 1: the subinterval count, gated on the relaxation-stage error
  // (which does not involve epsilon)
  int N = 8;
  double eps = T / (64.0 * M * N);
  for (;;) {
    eps = T / (64.0 * M * N);
    const auto [e2, e4] = probe(N, eps);
    (void)e4;
    if (e2 <= budget) break;
    N *= 2;
    if (N > max_n)
      throw ConvergenceError("choose_N_epsilon: stage errors do not fit the budget by N = " +
                             std::to_string(max_n));
  }
  // phase 2: the reparameterization scale, halved at fixed N until the
  // nondegenerate-times stage fits (the coupled  eps ~ T/N  scaling keeps the
  // time-dilation factor bounded away from one, so this phase is separate)
  for (int halvings = 0;; ++halvings) {
    const auto [e2, e4] = probe(N, eps);
    (void)e2;
    if (e4 <= budget) break;
    if (halvings >= 60)
      throw ConvergenceError("choose_N_epsilon: epsilon refinement failed to meet the budget");
    eps *= 0.5;
  }
  p.N = N;
  p.N_real = N;
  p.epsilon = eps;
  p.xi = 0.45 * eps * vartheta_factor(T, N, M, eps);
  return p;
}

bool StageReport::pass(double theta) const {
  const double budget = (1.0 - theta) / 10.0 * v_norm;
  for (const double e : stage_errors)
    if (e > budget * (1.0 + 1e-9)) return false;
  return contraction <= 0.5 * (theta + 1.0) * (1.0 + 1e-9);
}

double initial_approach_path(double c0, double c1, double t) {
  const double s = std::clamp(t, 0.0, 1.0);
  const double w = s * s * (2.0 - s) * (2.0 - s);
  return c0 + w * (c1 - c0);
}

SwitchingPipeline::SwitchingPipeline(const SpectralModel& model, const Coefficients& coeffs,
                                     const ActuatorBank& bank, const ClosedLoopFeedback& feedback,
                                     const FeedbackConstants& constants, Options opts)
    : model_(model), coeffs_(coeffs), bank_(bank), feedback_(feedback), constants_(constants),
      opts_(opts) {
  // align T with the step grid
  const int steps = std::max(1, static_cast<int>(std::lround(constants_.T / opts_.dt)));
  constants_.T = steps * opts_.dt;
  smoothed_ = smooth_actuators_in_model(model_, feedback_.projector());
  bank_unit_coeffs_.resize(model_.n, bank_.M);
  for (int j = 1; j <= bank_.M; ++j)
    bank_unit_coeffs_.col(j - 1) = feedback_.projector().unit_actuator(j);
}

const SpectralArcTape& SwitchingPipeline::interval_tape(int k) {
  auto it = tapes_.find(k);
  if (it == tapes_.end()) {
    const int steps = static_cast<int>(std::lround(constants_.T / opts_.dt));
    it = tapes_
             .emplace(k, SpectralArcTape::build(model_, coeffs_, k * constants_.T, opts_.dt, steps,
                                                opts_.quad_panels))
             .first;
  }
  return it->second;
}

StaticControlSample SwitchingPipeline::sample_static_control(const Eigen::VectorXd& v, int k) {
  const SpectralArcTape& tape = interval_tape(k);
  const int steps = static_cast<int>(std::lround(constants_.T / opts_.dt));
  const Trajectory traj =
      simulate_closed_loop(model_, coeffs_, tape, feedback_, v, k * constants_.T, opts_.dt, steps);
  StaticControlSample sample;
  sample.t0 = k * constants_.T;
  sample.dt = opts_.dt;
  sample.values.resize(bank_.M, steps + 1);
  for (int s = 0; s <= steps; ++s)
    sample.values.col(s) = feedback_.magnitudes(tape.at(s), traj.states[s]);
  return sample;
}

Trajectory SwitchingPipeline::simulate_with(const Forcing& forcing, const Eigen::VectorXd& v,
                                            int k) {
  const SpectralArcTape& tape = interval_tape(k);
  const int steps = static_cast<int>(std::lround(constants_.T / opts_.dt));
  SpectralCnab stepper = SpectralCnab::for_model(model_, coeffs_, &tape, k * constants_.T, opts_.dt);
  return stepper.run(v, steps, &forcing);
}

const SwitchParams& SwitchingPipeline::parameters() {
  if (params_) return *params_;
  if (opts_.mode == SwitchMode::Theoretical) {
    params_ = choose_N_epsilon(constants_, smoothed_, SwitchMode::Theoretical, model_);
    return *params_;
  }

  // probe states spread over the first few intervals (the coefficients are
  // nonautonomous, so the stage sensitivities vary with the interval phase);
  // interval-independent pieces are cached across candidate (N, epsilon)
  std::mt19937_64 rng(opts_.seed);
  struct Probe {
    int k;
    Eigen::VectorXd v;
    StaticControlSample v0;
    Eigen::VectorXd y1_end;
  };
  std::vector<Probe> probes;
  Eigen::MatrixXd smooth_cols(model_.n, bank_.M);
  for (int j = 0; j < bank_.M; ++j) smooth_cols.col(j) = smoothed_.coeffs[j].head(model_.n);
  // states concentrated on the lowest modes carry the largest feedback per
  // unit V norm and dominate after one contraction, so probe them explicitly
  // alongside random states, on each probed interval
  for (int k = 0; k < std::max(1, opts_.probe_intervals); ++k) {
    for (int i = 0; i < opts_.probe_states; ++i) {
      Probe p;
      p.k = k;
      if (i < 2) {
        p.v = Eigen::VectorXd::Zero(model_.n);
        p.v[i] = 1.0 / std::sqrt(model_.eigenvalue(i + 1));
      } else {
        p.v = random_unit_v_state(model_, rng);
      }
      p.v0 = sample_static_control(p.v, p.k);
      const SampledBankControl v1(&p.v0, smooth_cols);
      p.y1_end = simulate_with(v1, p.v, p.k).back();
      probes.push_back(std::move(p));
    }
  }

  const auto stage_probe = [&](int N, double eps) -> std::pair<double, double> {
    double e2 = 0.0, e4 = 0.0;
    for (const Probe& p : probes) {
      const SwitchingSchedule schedule = build_schedule(p.v0, N, eps);
      const ScheduleControl v2(&schedule, smooth_cols, ScheduleControl::Times::Raw);
      const ScheduleControl v3(&schedule, bank_unit_coeffs_, ScheduleControl::Times::Raw);
      const ScheduleControl v4(&schedule, bank_unit_coeffs_, ScheduleControl::Times::Nondegenerate);
      const Eigen::VectorXd y2 = simulate_with(v2, p.v, p.k).back();
      const Eigen::VectorXd y3 = simulate_with(v3, p.v, p.k).back();
      const Eigen::VectorXd y4 = simulate_with(v4, p.v, p.k).back();
      e2 = std::max(e2, model_.v_norm(y2 - p.y1_end) / model_.v_norm(p.v));
      e4 = std::max(e4, model_.v_norm(y4 - y3) / model_.v_norm(p.v));
    }
    return {e2, e4};
  };
  SwitchParams params = choose_N_epsilon(constants_, smoothed_, SwitchMode::Empirical, model_,
                                         stage_probe, opts_.max_n, opts_.budget_scale);

  // xi: halve until the stage-5 budget holds on the probes
  const double budget = opts_.budget_scale * (1.0 - constants_.theta) / 10.0;
  for (int attempt = 0;; ++attempt) {
    double e5 = 0.0;
    for (const Probe& p : probes) {
      SwitchingSchedule schedule = build_schedule(p.v0, params.N, params.epsilon);
      const ScheduleControl v4(&schedule, bank_unit_coeffs_, ScheduleControl::Times::Nondegenerate);
      const Eigen::VectorXd y4 = simulate_with(v4, p.v, p.k).back();
      const MovingControl v5(&model_, std::move(schedule), bank_, params.xi);
      const Eigen::VectorXd y5 = simulate_with(v5, p.v, p.k).back();
      e5 = std::max(e5, model_.v_norm(y5 - y4) / model_.v_norm(p.v));
    }
    if (e5 <= budget) break;
    if (attempt >= 50)
      throw ConvergenceError("SwitchingPipeline: road half-width xi failed to satisfy the budget");
    params.xi *= 0.5;
  }
  params_ = params;
  return *params_;
}

IntervalResult SwitchingPipeline::run_interval(const Eigen::VectorXd& v, int k) {
  const SwitchParams& params = parameters();
  IntervalResult out;
  StaticControlSample v0_sample = sample_static_control(v, k);

  Eigen::MatrixXd smooth_cols(model_.n, bank_.M);
  for (int j = 0; j < bank_.M; ++j) smooth_cols.col(j) = smoothed_.coeffs[j].head(model_.n);

  out.schedule = build_schedule(v0_sample, params.N, params.epsilon);
  const SampledBankControl v0(&v0_sample, bank_unit_coeffs_);
  const SampledBankControl v1(&v0_sample, smooth_cols);
  const ScheduleControl v2(&out.schedule, smooth_cols, ScheduleControl::Times::Raw);
  const ScheduleControl v3(&out.schedule, bank_unit_coeffs_, ScheduleControl::Times::Raw);
  const ScheduleControl v4(&out.schedule, bank_unit_coeffs_, ScheduleControl::Times::Nondegenerate);
  out.moving = std::make_shared<MovingControl>(&model_, out.schedule, bank_, params.xi);

  const Eigen::VectorXd y0 = simulate_with(v0, v, k).back();
  const Eigen::VectorXd y1 = simulate_with(v1, v, k).back();
  const Eigen::VectorXd y2 = simulate_with(v2, v, k).back();
  const Eigen::VectorXd y3 = simulate_with(v3, v, k).back();
  const Eigen::VectorXd y4 = simulate_with(v4, v, k).back();
  out.trajectory = simulate_with(*out.moving, v, k);

  out.report.v_norm = model_.v_norm(v);
  out.report.stage_errors = {model_.v_norm(y1 - y0), model_.v_norm(y2 - y1),
                             model_.v_norm(y3 - y2), model_.v_norm(y4 - y3),
                             model_.v_norm(out.trajectory.back() - y4)};
  out.report.contraction =
      out.report.v_norm > 0.0 ? model_.v_norm(out.trajectory.back()) / out.report.v_norm : 0.0;
  return out;
}

StageReport SwitchingPipeline::verify_pipeline(const Eigen::VectorXd& v, int k) {
  return run_interval(v, k).report;
}

ConcatenationResult SwitchingPipeline::concatenate_intervals(const Eigen::VectorXd& y0, int k_max) {
  ConcatenationResult out;
  Eigen::VectorXd v = y0;
  out.v_norms.push_back(model_.v_norm(v));
  out.trajectory.t0 = 0.0;
  out.trajectory.dt = opts_.dt;
  out.trajectory.states.push_back(y0);
  for (int k = 0; k < k_max; ++k) {
    IntervalResult res = run_interval(v, k);
    if (!res.report.pass(constants_.theta))
      throw ConvergenceError("concatenate_intervals: stage budget failed on interval " +
                             std::to_string(k));
    for (int s = 0; s <= res.trajectory.steps(); ++s) {
      const double t = res.trajectory.time(s);
      if (s > 0) out.trajectory.states.push_back(res.trajectory.states[s]);
      if (s < res.trajectory.steps() || k + 1 == k_max) {
        const ControlPoint p = res.moving->point(t);
        out.t_samples.push_back(t);
        out.u_samples.push_back(p.u);
        out.c_samples.push_back(p.center);
      }
    }
    v = res.trajectory.back();
    out.v_norms.push_back(model_.v_norm(v));
  }
  return out;
}

}  // namespace parastab
