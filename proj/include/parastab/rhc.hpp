#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "parastab/model.hpp"
#include "parastab/simulate.hpp"

namespace parastab {

/// Projected Barzilai-Borwein with a nonmonotone (Grippo-type) line search.
struct BBOptions {
  int max_iter = 2000;
  double tol_rel = 1e-4;   // on the projected-gradient norm, relative to start
  double tol_abs = 1e-12;  // absolute floor
  int memory = 10;
  double armijo = 1e-4;
  double step_min = 1e-8;
  double step_max = 1e8;
};

struct BBResult {
  Eigen::VectorXd x;
  double cost = 0.0;
  double pg0 = 0.0;
  double pg = 0.0;
  int iterations = 0;
  bool converged = false;
};

double bb1_step(const Eigen::VectorXd& s, const Eigen::VectorXd& g_diff);
double bb2_step(const Eigen::VectorXd& s, const Eigen::VectorXd& g_diff);

/// Minimizes f over the convex set given by `project` (identity when empty).
BBResult projected_bb(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>& objective,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& project,
    const Eigen::VectorXd& x0, const BBOptions& opts);

/// Receding-horizon solver configuration (solver parameters only; the grid,
/// the diffusion coefficient and the coefficient fields are passed alongside).
struct RhcConfig {
  double T = 1.25;       // prediction horizon
  double delta = 0.5;    // sampling time
  double beta = 0.1;     // control weight
  double K = 500.0;      // force box |eta| <= K
  double varsigma = 1.0; // ODE damping
  double eps_ode = 0.0;  // ODE stiffness
  double mu_my = 1e-5;   // Moreau-Yosida weight
  double dt = 1e-3;
  double r = 0.04;
  double eta_init = 0.0;  // first-window initial guess for eta
  BBOptions optimizer;

  void validate() const;
};

struct OpenLoopInit {
  double t0 = 0.0;
  Eigen::VectorXd y0;  // interior nodal values
  double c0 = 0.5;
  double cdot0 = 0.0;
};

struct OpenLoopSolution {
  Eigen::VectorXd u;            // one value per step
  Eigen::VectorXd eta;          // one value per step, inside the box
  std::vector<Eigen::VectorXd> y;
  Eigen::VectorXd c, cdot;      // per grid node
  double cost = 0.0;
  double pg0_norm = 0.0;
  double pg_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  double max_overshoot = 0.0;  // constraint violation of omega(c) beyond (0,1)
};

/// Reduced finite-horizon problem for the moving actuator: forward CN/AB
/// solve, exact discrete adjoint, cost with the Moreau-Yosida penalty.
class OpenLoopProblem {
 public:
  OpenLoopProblem(const FemGrid& grid, double nu, const Coefficients& coeffs,
                  const RhcConfig& cfg, OpenLoopInit init);

  int steps() const { return steps_; }
  const OpenLoopInit& init() const { return init_; }

  /// Cost at (u, eta); gradients optional. Also exposes the trajectories of
  /// the last evaluation for inspection.
  double evaluate(const Eigen::VectorXd& u, const Eigen::VectorXd& eta, Eigen::VectorXd* grad_u,
                  Eigen::VectorXd* grad_eta) const;

  /// Trajectories under (u, eta) without cost machinery.
  void forward(const Eigen::VectorXd& u, const Eigen::VectorXd& eta,
               std::vector<Eigen::VectorXd>& y, Eigen::VectorXd& c, Eigen::VectorXd& cdot) const;

  OpenLoopSolution solve(const Eigen::VectorXd& u0, const Eigen::VectorXd& eta0) const;

 private:
  double my_hinge_hi(double c) const;
  double my_hinge_lo(double c) const;

  const FemGrid& grid_;
  double nu_;
  const Coefficients& coeffs_;
  RhcConfig cfg_;
  OpenLoopInit init_;
  int steps_ = 0;
  FemArcTape tape_;
  Tridiagonal f_mat_;
  std::unique_ptr<TridiagonalFactor> e_factor_;
  ActuatorOde ode_;
};

struct WindowStats {
  double t0 = 0.0;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
  double pg_norm = 0.0;
};

struct RhcResult {
  double dt = 0.0;
  std::vector<Eigen::VectorXd> y;  // committed states on the dt grid
  Eigen::VectorXd u, eta;          // committed controls per step
  Eigen::VectorXd c;               // committed centers per grid node
  std::vector<WindowStats> windows;
};

/// Algorithm: solve on (t0, t0+T), commit [t0, t0+delta), shift, warm start.
RhcResult receding_horizon(const FemGrid& grid, double nu, const Coefficients& coeffs,
                           const RhcConfig& cfg, const Eigen::VectorXd& y0, double c0,
                           double t_final);

/// Static-bank variant: M fixed actuators, control in R^M per step, no
/// actuator dynamics and no state constraint.
class StaticOpenLoopProblem {
 public:
  StaticOpenLoopProblem(const FemGrid& grid, double nu, const Coefficients& coeffs,
                        const RhcConfig& cfg, const std::vector<ActuatorWindow>& bank, double t0,
                        Eigen::VectorXd y0);

  int steps() const { return steps_; }
  int bank_size() const { return static_cast<int>(loads_.cols()); }
  double evaluate(const Eigen::VectorXd& u_flat, Eigen::VectorXd* grad) const;
  void forward(const Eigen::VectorXd& u_flat, std::vector<Eigen::VectorXd>& y) const;

 private:
  const FemGrid& grid_;
  double nu_;
  const Coefficients& coeffs_;
  RhcConfig cfg_;
  double t0_;
  Eigen::VectorXd y0_;
  int steps_ = 0;
  Eigen::MatrixXd loads_;  // interior loads per actuator
  FemArcTape tape_;
  Tridiagonal f_mat_;
  std::unique_ptr<TridiagonalFactor> e_factor_;
};

struct StaticRhcResult {
  double dt = 0.0;
  std::vector<Eigen::VectorXd> y;
  Eigen::MatrixXd u;  // M x committed steps
  std::vector<WindowStats> windows;
};

StaticRhcResult static_bank_rhc(const FemGrid& grid, double nu, const Coefficients& coeffs,
                                const RhcConfig& cfg, const std::vector<ActuatorWindow>& bank,
                                const Eigen::VectorXd& y0, double t_final);

}  // namespace parastab
