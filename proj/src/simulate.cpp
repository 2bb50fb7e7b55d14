#include "parastab/simulate.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <string>

namespace parastab {

namespace {
constexpr double kPi = std::numbers::pi;

// Composite-Simpson moments of w(t, .) against cos(m pi x) and sin(m pi x),
// m = 0..mmax, using the Chebyshev recurrence instead of per-(m,q)
// transcendentals.
void field_moments(const CoefficientField& w, double t, int mmax, int panels,
                   Eigen::VectorXd& cos_m, Eigen::VectorXd& sin_m) {
  cos_m = Eigen::VectorXd::Zero(mmax + 1);
  sin_m = Eigen::VectorXd::Zero(mmax + 1);
  const int q_count = panels + 1;
  const double hx = 1.0 / panels;
  for (int q = 0; q < q_count; ++q) {
    const double x = q * hx;
    const double weight =
        (hx / 3.0) * ((q == 0 || q == panels) ? 1.0 : (q % 2 == 1 ? 4.0 : 2.0));
    const double wv = w(t, x) * weight;
    const double c1 = std::cos(kPi * x), s1 = std::sin(kPi * x);
    double c_prev = 1.0, s_prev = 0.0;  // m = 0
    cos_m[0] += wv;
    for (int m = 1; m <= mmax; ++m) {
      const double c = c_prev * c1 - s_prev * s1;
      const double s = s_prev * c1 + c_prev * s1;
      cos_m[m] += wv * c;
      sin_m[m] += wv * s;
      c_prev = c;
      s_prev = s;
    }
  }
}
}  // namespace

Eigen::MatrixXd spectral_arc_matrix(const SpectralModel& model, const Coefficients& coeffs,
                                    double t, int quad_panels) {
  const int n = model.n;
  Eigen::MatrixXd arc = Eigen::MatrixXd::Zero(n, n);
  const bool const_reaction = coeffs.reaction.is_constant();
  const bool zero_convection =
      coeffs.convection.is_constant() && coeffs.convection.constant_part() == 0.0;
  if (const_reaction && zero_convection) {
    arc.diagonal().setConstant(coeffs.reaction.constant_part() - 1.0);
    return arc;
  }
  if (quad_panels % 2 != 0) ++quad_panels;
  Eigen::VectorXd gc, gs;
  if (!const_reaction) {
    field_moments(coeffs.reaction, t, 2 * n, quad_panels, gc, gs);
    // (a - 1): shift the m = 0 moment, the only one a constant contributes to
    gc[0] -= 1.0;
    for (int i = 1; i <= n; ++i)
      for (int j = 1; j <= n; ++j) arc(i - 1, j - 1) += gc[std::abs(i - j)] - gc[i + j];
  } else {
    arc.diagonal().setConstant(coeffs.reaction.constant_part() - 1.0);
  }
  if (!zero_convection) {
    Eigen::VectorXd hc, hs;
    field_moments(coeffs.convection, t, 2 * n, quad_panels, hc, hs);
    for (int i = 1; i <= n; ++i)
      for (int j = 1; j <= n; ++j) {
        double v = hs[i + j];
        if (i > j)
          v += hs[i - j];
        else if (i < j)
          v -= hs[j - i];
        arc(i - 1, j - 1) += j * kPi * v;
      }
  }
  return arc;
}

SpectralArcTape SpectralArcTape::build(const SpectralModel& model, const Coefficients& coeffs,
                                       double t0, double dt, int steps, int quad_panels) {
  SpectralArcTape tape;
  tape.t0_ = t0;
  tape.dt_ = dt;
  const bool invariant = coeffs.reaction.is_constant() && coeffs.convection.is_constant();
  tape.time_invariant_ = invariant;
  const int count = invariant ? 1 : steps + 1;
  tape.mats_.reserve(count);
  for (int k = 0; k < count; ++k)
    tape.mats_.push_back(spectral_arc_matrix(model, coeffs, t0 + k * dt, quad_panels));
  return tape;
}

FemArcTape FemArcTape::build(const FemGrid& grid, const Coefficients& coeffs, double t0, double dt,
                             int steps) {
  FemArcTape tape;
  const double a_const = coeffs.reaction.constant_part();
  const bool const_reaction = coeffs.reaction.is_constant();
  const bool const_convection = coeffs.convection.is_constant();
  const bool zero_convection = const_convection && coeffs.convection.constant_part() == 0.0;
  if (const_reaction && zero_convection) return tape;  // nothing varying
  tape.time_invariant_ = const_reaction && const_convection;
  const int count = tape.time_invariant_ ? 1 : steps + 1;
  tape.mats_.reserve(count);
  for (int k = 0; k < count; ++k) {
    const double t = t0 + k * dt;
    Tridiagonal m(grid.interior());
    if (!const_reaction) {
      m.axpy(1.0, grid.weighted_mass(
                      [&](double x) { return coeffs.reaction(t, x) - a_const; }));
    }
    if (!zero_convection) {
      m.axpy(1.0, grid.convection_matrix([&](double x) { return coeffs.convection(t, x); }));
    }
    tape.mats_.push_back(std::move(m));
  }
  return tape;
}

SpectralCnab::SpectralCnab(Eigen::VectorXd implicit_diag, const SpectralArcTape* tape,
                           double arc_diag_shift, double t0, double dt)
    : kappa_(std::move(implicit_diag)), tape_(tape), shift_(arc_diag_shift), t0_(t0), dt_(dt) {
  if (dt_ <= 0.0) throw PreconditionError("SpectralCnab: dt must be positive");
  const int n = static_cast<int>(kappa_.size());
  cn_solve_.resize(n);
  cn_mul_.resize(n);
  for (int i = 0; i < n; ++i) {
    cn_solve_[i] = 1.0 / (1.0 + 0.5 * dt_ * kappa_[i]);
    cn_mul_[i] = 1.0 - 0.5 * dt_ * kappa_[i];
  }
}

SpectralCnab SpectralCnab::for_model(const SpectralModel& model, const Coefficients& coeffs,
                                     const SpectralArcTape* tape, double t0, double dt) {
  const double shift = coeffs.reaction.constant_part() - 1.0;
  Eigen::VectorXd kappa = model.eigenvalues().array() + shift;
  return SpectralCnab(std::move(kappa), tape, shift, t0, dt);
}

void SpectralCnab::reset(const Eigen::VectorXd& y0) {
  y_ = y0;
  k_ = 0;
  have_prev_ = false;
}

Eigen::VectorXd SpectralCnab::explicit_part(const Feedback* fb) {
  const double t = time();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(y_.size());
  if (tape_ && !tape_->empty()) {
    g.noalias() -= tape_->at(k_) * y_;
    g += shift_ * y_;  // remove the implicitly handled constant reaction
  }
  if (fb && *fb) g += (*fb)(t, y_, k_);
  return g;
}

const Eigen::VectorXd& SpectralCnab::step(const Forcing* f, const Feedback* fb) {
  // state-coupled explicit terms through AB2; the external forcing enters by
  // its exact step average (sub-step switching structure stays resolved)
  Eigen::VectorXd g = explicit_part(fb);
  Eigen::VectorXd rhs;
  if (have_prev_)
    rhs = 1.5 * g - 0.5 * g_prev_;
  else
    rhs = g;
  if (f) rhs += f->average(time(), time() + dt_);
  y_ = (cn_mul_.array() * y_.array() + dt_ * rhs.array()) * cn_solve_.array();
  g_prev_ = std::move(g);
  have_prev_ = true;
  ++k_;
  return y_;
}

Trajectory SpectralCnab::run(const Eigen::VectorXd& y0, int steps, const Forcing* f,
                             const Feedback* fb) {
  reset(y0);
  Trajectory traj;
  traj.t0 = t0_;
  traj.dt = dt_;
  traj.states.reserve(steps + 1);
  traj.states.push_back(y0);
  for (int k = 0; k < steps; ++k) traj.states.push_back(step(f, fb));
  return traj;
}

FemCnab::FemCnab(const FemGrid& grid, double nu, double a_const, const FemArcTape* tape, double t0,
                 double dt)
    : grid_(&grid), tape_(tape), t0_(t0), dt_(dt) {
  if (dt_ <= 0.0) throw PreconditionError("FemCnab: dt must be positive");
  Tridiagonal k_impl = grid.stiffness().scaled(nu);
  k_impl.axpy(a_const, grid.mass());
  Tridiagonal e = Tridiagonal::combine(1.0, grid.mass(), 0.5 * dt_, k_impl);
  f_mat_ = Tridiagonal::combine(1.0, grid.mass(), -0.5 * dt_, k_impl);
  e_factor_ = std::make_unique<TridiagonalFactor>(e);
}

void FemCnab::reset(const Eigen::VectorXd& y0) {
  y_ = y0;
  k_ = 0;
  have_prev_ = false;
}

Eigen::VectorXd FemCnab::explicit_part() {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(y_.size());
  if (tape_ && !tape_->zero()) g -= tape_->at(k_).apply(y_);
  return g;
}

const Eigen::VectorXd& FemCnab::step(const Forcing* load) {
  // state-coupled explicit terms through AB2; the load enters by its exact
  // step average
  Eigen::VectorXd g = explicit_part();
  Eigen::VectorXd rhs = f_mat_.apply(y_);
  if (have_prev_)
    rhs += dt_ * (1.5 * g - 0.5 * g_prev_);
  else
    rhs += dt_ * g;
  if (load) rhs += dt_ * load->average(time(), time() + dt_);
  y_ = e_factor_->solve(rhs);
  g_prev_ = std::move(g);
  have_prev_ = true;
  ++k_;
  return y_;
}

Trajectory FemCnab::run(const Eigen::VectorXd& y0, int steps, const Forcing* load) {
  reset(y0);
  Trajectory traj;
  traj.t0 = t0_;
  traj.dt = dt_;
  traj.states.reserve(steps + 1);
  traj.states.push_back(y0);
  for (int k = 0; k < steps; ++k) traj.states.push_back(step(load));
  return traj;
}

ActuatorOde::ActuatorOde(double varsigma, double epsilon, double dt) {
  Eigen::Matrix2d b;
  b << 0.0, 1.0, -epsilon, -varsigma;
  const Eigen::Matrix2d lhs = Eigen::Matrix2d::Identity() - 0.5 * dt * b;
  const Eigen::Matrix2d inv = lhs.inverse();
  propagator = inv * (Eigen::Matrix2d::Identity() + 0.5 * dt * b);
  input = inv * Eigen::Vector2d(0.0, dt);
}

std::pair<double, double> step_actuator_ode(double c, double cdot, double eta, double varsigma,
                                            double epsilon, double dt) {
  if (dt <= 0.0) throw PreconditionError("step_actuator_ode: dt must be positive");
  const ActuatorOde ode(varsigma, epsilon, dt);
  const Eigen::Vector2d z = ode.step(Eigen::Vector2d(c, cdot), eta);
  return {z[0], z[1]};
}

namespace {
class WindowForcingSpectral final : public Forcing {
 public:
  WindowForcingSpectral(const SpectralModel& model, const WindowControl& control, double r,
                        bool normalized)
      : model_(model), control_(control), r_(r), normalized_(normalized) {}
  int dim() const override { return model_.n; }
  Eigen::VectorXd value(double t) const override {
    const ControlPoint p = control_(t);
    if (!ActuatorWindow::admissible(p.center, r_))
      throw GeometryError("controlled simulation: inadmissible actuator at t = " +
                          std::to_string(t));
    return p.u * spectral_coeffs_of_indicator(model_, ActuatorWindow(p.center, r_), normalized_);
  }

 private:
  const SpectralModel& model_;
  const WindowControl& control_;
  double r_;
  bool normalized_;
};

class WindowForcingFem final : public Forcing {
 public:
  WindowForcingFem(const FemGrid& grid, const WindowControl& control, double r, bool normalized)
      : grid_(grid), control_(control), r_(r), normalized_(normalized) {}
  int dim() const override { return grid_.interior(); }
  Eigen::VectorXd value(double t) const override {
    const ControlPoint p = control_(t);
    if (!ActuatorWindow::admissible(p.center, r_))
      throw GeometryError("controlled simulation: inadmissible actuator at t = " +
                          std::to_string(t));
    double scale = p.u;
    if (normalized_) scale /= std::sqrt(r_);
    return scale * grid_.interior_part(fem_load_vector(grid_, ActuatorWindow(p.center, r_)));
  }

 private:
  const FemGrid& grid_;
  const WindowControl& control_;
  double r_;
  bool normalized_;
};
}  // namespace

Trajectory simulate_controlled_spectral(const SpectralModel& model, const Coefficients& coeffs,
                                        const SpectralArcTape* tape, const Eigen::VectorXd& y0,
                                        const WindowControl& control, double r, bool normalized,
                                        double t0, double dt, int steps) {
  WindowForcingSpectral f(model, control, r, normalized);
  SpectralCnab stepper = SpectralCnab::for_model(model, coeffs, tape, t0, dt);
  return stepper.run(y0, steps, &f);
}

Trajectory simulate_controlled_fem(const FemGrid& grid, double nu, const Coefficients& coeffs,
                                   const FemArcTape* tape, const Eigen::VectorXd& y0,
                                   const WindowControl& control, double r, bool normalized,
                                   double t0, double dt, int steps) {
  WindowForcingFem f(grid, control, r, normalized);
  FemCnab stepper(grid, nu, coeffs.reaction.constant_part(), tape, t0, dt);
  return stepper.run(y0, steps, &f);
}

}  // namespace parastab
