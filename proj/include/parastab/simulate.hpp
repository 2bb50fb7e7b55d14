#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "parastab/model.hpp"
#include "parastab/tridiag.hpp"

namespace parastab {

/// Uniform-grid trajectory of state snapshots.
struct Trajectory {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<Eigen::VectorXd> states;

  int steps() const { return static_cast<int>(states.size()) - 1; }
  double time(int k) const { return t0 + k * dt; }
  const Eigen::VectorXd& front() const { return states.front(); }
  const Eigen::VectorXd& back() const { return states.back(); }
};

/// External forcing in the active state representation (spectral coefficient
/// vectors, or FEM load vectors on interior nodes). `average` returns the
/// mean over a step; the default is the endpoint trapezoid, exact-integral
/// implementations override it for sub-step switching structure.
class Forcing {
 public:
  virtual ~Forcing() = default;
  virtual int dim() const = 0;
  virtual Eigen::VectorXd value(double t) const = 0;
  virtual Eigen::VectorXd average(double t0, double t1) const {
    return 0.5 * (value(t0) + value(t1));
  }
};

class ZeroForcing final : public Forcing {
 public:
  explicit ZeroForcing(int dim) : dim_(dim) {}
  int dim() const override { return dim_; }
  Eigen::VectorXd value(double) const override { return Eigen::VectorXd::Zero(dim_); }
  Eigen::VectorXd average(double, double) const override { return Eigen::VectorXd::Zero(dim_); }

 private:
  int dim_;
};

class LambdaForcing final : public Forcing {
 public:
  LambdaForcing(int dim, std::function<Eigen::VectorXd(double)> fn)
      : dim_(dim), fn_(std::move(fn)) {}
  int dim() const override { return dim_; }
  Eigen::VectorXd value(double t) const override { return fn_(t); }

 private:
  int dim_;
  std::function<Eigen::VectorXd(double)> fn_;
};

/// Galerkin matrix of A_rc(t) = (a(t,.)-1) I + b(t,.) d/dx in the sine basis,
/// assembled from cosine/sine moments of the coefficient fields.
Eigen::MatrixXd spectral_arc_matrix(const SpectralModel& model, const Coefficients& coeffs,
                                    double t, int quad_panels = 2048);

/// Precomputed A_rc matrices on a uniform time grid (control independent).
class SpectralArcTape {
 public:
  SpectralArcTape() = default;
  static SpectralArcTape build(const SpectralModel& model, const Coefficients& coeffs, double t0,
                               double dt, int steps, int quad_panels = 2048);

  bool empty() const { return mats_.empty(); }
  bool time_invariant() const { return time_invariant_; }
  const Eigen::MatrixXd& at(int k) const {
    if (time_invariant_) return mats_[0];
    if (k < 0 || k >= static_cast<int>(mats_.size()))
      throw PreconditionError("SpectralArcTape: step outside the taped grid");
    return mats_[k];
  }
  double t0() const { return t0_; }
  double dt() const { return dt_; }
  int samples() const { return static_cast<int>(mats_.size()); }

 private:
  double t0_ = 0.0, dt_ = 0.0;
  bool time_invariant_ = true;
  std::vector<Eigen::MatrixXd> mats_;
};

/// Varying part of A_rc in the FEM representation: mass-type matrix of
/// a(t,.) - a_const plus the convection matrix of b(t,.), per grid time.
class FemArcTape {
 public:
  FemArcTape() = default;
  static FemArcTape build(const FemGrid& grid, const Coefficients& coeffs, double t0, double dt,
                          int steps);

  bool zero() const { return mats_.empty(); }
  bool time_invariant() const { return time_invariant_; }
  const Tridiagonal& at(int k) const {
    if (time_invariant_) return mats_[0];
    if (k < 0 || k >= static_cast<int>(mats_.size()))
      throw PreconditionError("FemArcTape: step outside the taped grid");
    return mats_[k];
  }

 private:
  bool time_invariant_ = true;
  std::vector<Tridiagonal> mats_;
};

/// Crank-Nicolson / Adams-Bashforth-2 stepper for
///   dy/dt + diag(kappa) y + arc_var(t) y = f(t) + feedback(t, y)
/// in coefficient space. The stiff diagonal goes through CN, everything else
/// through AB2 with a forward-Euler bootstrap on the first step.
class SpectralCnab {
 public:
  using Feedback = std::function<Eigen::VectorXd(double t, const Eigen::VectorXd& y, int k)>;

  SpectralCnab(Eigen::VectorXd implicit_diag, const SpectralArcTape* tape, double arc_diag_shift,
               double t0, double dt);
  /// Splitting for the model operator: kappa_j = alpha_j + (a_const - 1) goes
  /// implicit; tape matrices minus that constant reaction shift go explicit.
  static SpectralCnab for_model(const SpectralModel& model, const Coefficients& coeffs,
                                const SpectralArcTape* tape, double t0, double dt);

  void reset(const Eigen::VectorXd& y0);
  const Eigen::VectorXd& state() const { return y_; }
  double time() const { return t0_ + k_ * dt_; }

  /// Advances one step and returns the new state.
  const Eigen::VectorXd& step(const Forcing* f = nullptr, const Feedback* fb = nullptr);

  Trajectory run(const Eigen::VectorXd& y0, int steps, const Forcing* f = nullptr,
                 const Feedback* fb = nullptr);

 private:
  Eigen::VectorXd explicit_part(const Feedback* fb);

  Eigen::VectorXd kappa_, cn_solve_, cn_mul_;
  const SpectralArcTape* tape_ = nullptr;
  double shift_ = 0.0;
  double t0_ = 0.0, dt_ = 0.0;
  int k_ = 0;
  Eigen::VectorXd y_, g_prev_;
  bool have_prev_ = false;
};

/// FEM counterpart:  M dy/dt + (nu S + a_const M) y + arc_var(t) y = load(t).
class FemCnab {
 public:
  FemCnab(const FemGrid& grid, double nu, double a_const, const FemArcTape* tape, double t0,
          double dt);

  void reset(const Eigen::VectorXd& y0);
  const Eigen::VectorXd& state() const { return y_; }
  double time() const { return t0_ + k_ * dt_; }

  const Eigen::VectorXd& step(const Forcing* load = nullptr);
  Trajectory run(const Eigen::VectorXd& y0, int steps, const Forcing* load = nullptr);

 private:
  Eigen::VectorXd explicit_part();

  const FemGrid* grid_;
  const FemArcTape* tape_;
  Tridiagonal f_mat_;
  std::unique_ptr<TridiagonalFactor> e_factor_;
  double t0_, dt_;
  int k_ = 0;
  Eigen::VectorXd y_, g_prev_;
  bool have_prev_ = false;
};

/// One CN step of  c'' + varsigma c' + epsilon c = eta  as a first-order
/// system in (c, c'); eta is held constant over the step.
std::pair<double, double> step_actuator_ode(double c, double cdot, double eta, double varsigma,
                                            double epsilon, double dt);

/// Precomputed CN propagator for the actuator ODE: z_{k+1} = P z_k + q eta_k.
struct ActuatorOde {
  Eigen::Matrix2d propagator;
  Eigen::Vector2d input;

  ActuatorOde(double varsigma, double epsilon, double dt);
  Eigen::Vector2d step(const Eigen::Vector2d& z, double eta) const {
    return propagator * z + input * eta;
  }
};

/// Control evaluated pointwise in time: magnitude + actuator center.
struct ControlPoint {
  double u = 0.0;
  double center = 0.5;
};
using WindowControl = std::function<ControlPoint(double t)>;

/// Simulates the controlled equation with forcing u(t) 1_{omega(c(t))}
/// (normalized variant scales by r^{-1/2}). Every visited actuator position
/// must be admissible.
Trajectory simulate_controlled_spectral(const SpectralModel& model, const Coefficients& coeffs,
                                        const SpectralArcTape* tape, const Eigen::VectorXd& y0,
                                        const WindowControl& control, double r, bool normalized,
                                        double t0, double dt, int steps);

Trajectory simulate_controlled_fem(const FemGrid& grid, double nu, const Coefficients& coeffs,
                                   const FemArcTape* tape, const Eigen::VectorXd& y0,
                                   const WindowControl& control, double r, bool normalized,
                                   double t0, double dt, int steps);

}  // namespace parastab
