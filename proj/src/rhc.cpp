#include "parastab/rhc.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

namespace parastab {

double bb1_step(const Eigen::VectorXd& s, const Eigen::VectorXd& g_diff) {
  const double sg = s.dot(g_diff);
  if (sg <= 0.0) return 1.0;
  return s.squaredNorm() / sg;
}

double bb2_step(const Eigen::VectorXd& s, const Eigen::VectorXd& g_diff) {
  const double sg = s.dot(g_diff);
  const double gg = g_diff.squaredNorm();
  if (sg <= 0.0 || gg == 0.0) return 1.0;
  return sg / gg;
}

BBResult projected_bb(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>& objective,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& project,
    const Eigen::VectorXd& x0, const BBOptions& opts) {
  const auto proj = [&](const Eigen::VectorXd& x) { return project ? project(x) : x; };

  BBResult res;
  Eigen::VectorXd x = proj(x0);
  Eigen::VectorXd g(x.size());
  double fx = objective(x, &g);
  if (!std::isfinite(fx)) throw OptimizerError("projected_bb: objective not finite at the start");
  Eigen::VectorXd pg = x - proj(x - g);
  res.pg0 = pg.norm();
  const double tol = std::max(opts.tol_rel * res.pg0, opts.tol_abs);

  std::deque<double> history{fx};
  double step = 1.0;
  int it = 0;
  for (; it < opts.max_iter; ++it) {
    if (pg.norm() <= tol) {
      res.converged = true;
      break;
    }
    const double fmax = *std::max_element(history.begin(), history.end());
    const double pg_sq = pg.squaredNorm();
    Eigen::VectorXd x_new, g_new(x.size());
    double f_new = 0.0;
    double trial = step;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      x_new = proj(x - trial * g);
      f_new = objective(x_new, &g_new);
      if (std::isfinite(f_new) && f_new <= fmax - opts.armijo * trial * pg_sq) {
        accepted = true;
        break;
      }
      trial *= 0.5;
      if (trial < 1e-16) break;
    }
    if (!accepted) {
      if (!std::isfinite(f_new))
        throw OptimizerError("projected_bb: non-finite objective in the line search");
      // no acceptable step; treat the current iterate as stationary
      break;
    }
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd g_diff = g_new - g;
    step = (it % 2 == 0) ? bb1_step(s, g_diff) : bb2_step(s, g_diff);
    step = std::clamp(step, opts.step_min, opts.step_max);
    x = std::move(x_new);
    g = std::move(g_new);
    fx = f_new;
    history.push_back(fx);
    if (static_cast<int>(history.size()) > opts.memory) history.pop_front();
    pg = x - proj(x - g);
  }
  res.x = std::move(x);
  res.cost = fx;
  res.pg = pg.norm();
  res.iterations = it;
  if (pg.norm() <= tol) res.converged = true;
  return res;
}

void RhcConfig::validate() const {
  if (!(T > 0.0) || !(delta > 0.0) || !(delta < T + 1e-15))
    throw ConfigError("RhcConfig: need T > delta > 0");
  if (!(beta > 0.0)) throw ConfigError("RhcConfig: control weight must be positive");
  if (!(K > 0.0)) throw ConfigError("RhcConfig: force box must be positive");
  if (!(mu_my > 0.0)) throw ConfigError("RhcConfig: Moreau-Yosida weight must be positive");
  if (!(dt > 0.0) || !(r > 0.0)) throw ConfigError("RhcConfig: dt and r must be positive");
  if (varsigma < 0.0 || eps_ode < 0.0) throw ConfigError("RhcConfig: ODE parameters must be >= 0");
}

OpenLoopProblem::OpenLoopProblem(const FemGrid& grid, double nu, const Coefficients& coeffs,
                                 const RhcConfig& cfg, OpenLoopInit init)
    : grid_(grid), nu_(nu), coeffs_(coeffs), cfg_(cfg), init_(std::move(init)),
      ode_(cfg.varsigma, cfg.eps_ode, cfg.dt) {
  cfg_.validate();
  steps_ = static_cast<int>(std::lround(cfg_.T / cfg_.dt));
  tape_ = FemArcTape::build(grid_, coeffs_, init_.t0, cfg_.dt, steps_);
  const double a_const = coeffs_.reaction.constant_part();
  Tridiagonal k_impl = grid_.stiffness().scaled(nu_);
  k_impl.axpy(a_const, grid_.mass());
  const Tridiagonal e = Tridiagonal::combine(1.0, grid_.mass(), 0.5 * cfg_.dt, k_impl);
  f_mat_ = Tridiagonal::combine(1.0, grid_.mass(), -0.5 * cfg_.dt, k_impl);
  e_factor_ = std::make_unique<TridiagonalFactor>(e);
}

double OpenLoopProblem::my_hinge_hi(double c) const { return std::max(0.0, c + 0.5 * cfg_.r - 1.0); }
double OpenLoopProblem::my_hinge_lo(double c) const { return std::max(0.0, 0.5 * cfg_.r - c); }

void OpenLoopProblem::forward(const Eigen::VectorXd& u, const Eigen::VectorXd& eta,
                              std::vector<Eigen::VectorXd>& y, Eigen::VectorXd& c,
                              Eigen::VectorXd& cdot) const {
  const int n = steps_;
  const double dt = cfg_.dt;
  y.assign(n + 1, Eigen::VectorXd());
  c.resize(n + 1);
  cdot.resize(n + 1);
  y[0] = init_.y0;
  c[0] = init_.c0;
  cdot[0] = init_.cdot0;
  for (int k = 0; k < n; ++k) {
    const Eigen::Vector2d z = ode_.step(Eigen::Vector2d(c[k], cdot[k]), eta[k]);
    c[k + 1] = z[0];
    cdot[k + 1] = z[1];
  }
  Eigen::VectorXd g_prev;
  for (int k = 0; k < n; ++k) {
    Eigen::VectorXd g =
        u[k] * grid_.interior_part(fem_load_vector_clipped(grid_, c[k], cfg_.r));
    if (!tape_.zero()) g -= tape_.at(k).apply(y[k]);
    Eigen::VectorXd rhs = f_mat_.apply(y[k]);
    if (k == 0)
      rhs += dt * g;
    else
      rhs += dt * (1.5 * g - 0.5 * g_prev);
    y[k + 1] = e_factor_->solve(rhs);
    g_prev = std::move(g);
  }
}

double OpenLoopProblem::evaluate(const Eigen::VectorXd& u, const Eigen::VectorXd& eta,
                                 Eigen::VectorXd* grad_u, Eigen::VectorXd* grad_eta) const {
  const int n = steps_;
  const double dt = cfg_.dt;
  std::vector<Eigen::VectorXd> y;
  Eigen::VectorXd c, cdot;
  forward(u, eta, y, c, cdot);

  const auto weight = [n](int k) { return (k == 0 || k == n) ? 0.5 : 1.0; };
  double cost = 0.0;
  for (int k = 0; k <= n; ++k)
    cost += 0.5 * dt * weight(k) * grid_.stiffness().quadratic_form(y[k]);
  cost += 0.5 * cfg_.beta * dt * u.squaredNorm();
  for (int k = 0; k <= n; ++k) {
    const double hi = my_hinge_hi(c[k]), lo = my_hinge_lo(c[k]);
    cost += dt * weight(k) * (hi * hi + lo * lo) / (2.0 * cfg_.mu_my);
  }
  if (!grad_u && !grad_eta) return cost;

  // discrete adjoint of the CN/AB scheme; E is symmetric, so the transpose
  // solve reuses the factorization
  if (grad_u) grad_u->resize(n);
  if (grad_eta) grad_eta->resize(n);
  Eigen::VectorXd p_next2 = Eigen::VectorXd::Zero(y[0].size());  // p_{j+2}
  Eigen::VectorXd p_next =
      e_factor_->solve(-dt * weight(n) * grid_.stiffness().apply(y[n]));  // p_{j+1}, j = n-1
  Eigen::Vector2d lam_next(-dt * weight(n) * (my_hinge_hi(c[n]) - my_hinge_lo(c[n])) / cfg_.mu_my,
                           0.0);
  for (int j = n - 1; j >= 0; --j) {
    const double c1 = (j == 0) ? 1.0 : 1.5;
    const double c2 = (j + 1 <= n - 1) ? -0.5 : 0.0;
    const Eigen::VectorXd m_j = dt * (c1 * p_next + c2 * p_next2);
    const Eigen::VectorXd load_j = grid_.interior_part(fem_load_vector_clipped(grid_, c[j], cfg_.r));
    if (grad_u) (*grad_u)[j] = cfg_.beta * dt * u[j] - load_j.dot(m_j);
    if (grad_eta) (*grad_eta)[j] = -ode_.input.dot(lam_next);
    if (j >= 1) {
      Eigen::VectorXd rhs = f_mat_.apply(p_next);
      if (!tape_.zero()) rhs -= tape_.at(j).apply_transpose(m_j);
      rhs -= dt * weight(j) * grid_.stiffness().apply(y[j]);
      Eigen::VectorXd p_j = e_factor_->solve(rhs);
      const Eigen::VectorXd dload_j =
          grid_.interior_part(fem_load_derivative_clipped(grid_, c[j], cfg_.r));
      Eigen::Vector2d lam_j = ode_.propagator.transpose() * lam_next;
      lam_j[0] += u[j] * dload_j.dot(m_j);
      lam_j[0] -= dt * weight(j) * (my_hinge_hi(c[j]) - my_hinge_lo(c[j])) / cfg_.mu_my;
      p_next2 = std::move(p_next);
      p_next = std::move(p_j);
      lam_next = lam_j;
    }
  }
  return cost;
}

OpenLoopSolution OpenLoopProblem::solve(const Eigen::VectorXd& u0,
                                        const Eigen::VectorXd& eta0) const {
  const int n = steps_;
  Eigen::VectorXd x0(2 * n);
  x0.head(n) = u0;
  x0.tail(n) = eta0;
  const double box = cfg_.K;
  const auto project = [n, box](const Eigen::VectorXd& x) {
    Eigen::VectorXd out = x;
    out.tail(n) = out.tail(n).cwiseMax(-box).cwiseMin(box);
    return out;
  };
  const auto objective = [this, n](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    Eigen::VectorXd gu, ge;
    const double cost = evaluate(x.head(n), x.tail(n), grad ? &gu : nullptr, grad ? &ge : nullptr);
    if (grad) {
      grad->resize(2 * n);
      grad->head(n) = gu;
      grad->tail(n) = ge;
    }
    return cost;
  };
  const BBResult res = projected_bb(objective, project, x0, cfg_.optimizer);

  OpenLoopSolution sol;
  sol.u = res.x.head(n);
  sol.eta = res.x.tail(n);
  forward(sol.u, sol.eta, sol.y, sol.c, sol.cdot);
  sol.cost = res.cost;
  sol.pg0_norm = res.pg0;
  sol.pg_norm = res.pg;
  sol.iterations = res.iterations;
  sol.converged = res.converged;
  for (int k = 0; k <= n; ++k)
    sol.max_overshoot = std::max({sol.max_overshoot, my_hinge_hi(sol.c[k]), my_hinge_lo(sol.c[k])});
  return sol;
}

RhcResult receding_horizon(const FemGrid& grid, double nu, const Coefficients& coeffs,
                           const RhcConfig& cfg, const Eigen::VectorXd& y0, double c0,
                           double t_final) {
  cfg.validate();
  const double dt = cfg.dt;
  const int delta_steps = static_cast<int>(std::lround(cfg.delta / dt));
  const int total_windows = static_cast<int>(std::lround(t_final / cfg.delta));
  if (std::abs(total_windows * cfg.delta - t_final) > 1e-9 * std::max(1.0, t_final))
    throw ConfigError("receding_horizon: t_final must be a multiple of delta");
  const int horizon_steps = static_cast<int>(std::lround(cfg.T / dt));

  RhcResult out;
  out.dt = dt;
  out.y.push_back(y0);
  out.u.resize(total_windows * delta_steps);
  out.eta.resize(total_windows * delta_steps);
  out.c.resize(total_windows * delta_steps + 1);
  out.c[0] = c0;

  OpenLoopInit init{0.0, y0, c0, 0.0};
  Eigen::VectorXd u_guess = Eigen::VectorXd::Zero(horizon_steps);
  Eigen::VectorXd eta_guess = Eigen::VectorXd::Constant(horizon_steps, cfg.eta_init);
  for (int w = 0; w < total_windows; ++w) {
    const OpenLoopProblem problem(grid, nu, coeffs, cfg, init);
    const OpenLoopSolution sol = problem.solve(u_guess, eta_guess);
    out.windows.push_back({init.t0, sol.cost, sol.iterations, sol.converged, sol.pg_norm});
    for (int k = 0; k < delta_steps; ++k) {
      const int idx = w * delta_steps + k;
      out.u[idx] = sol.u[k];
      out.eta[idx] = sol.eta[k];
      out.c[idx + 1] = sol.c[k + 1];
      out.y.push_back(sol.y[k + 1]);
    }
    // advance and warm start with the shifted tail
    init.t0 += cfg.delta;
    init.y0 = sol.y[delta_steps];
    init.c0 = sol.c[delta_steps];
    init.cdot0 = sol.cdot[delta_steps];
    u_guess.setZero();
    eta_guess.setZero();
    u_guess.head(horizon_steps - delta_steps) = sol.u.tail(horizon_steps - delta_steps);
    eta_guess.head(horizon_steps - delta_steps) = sol.eta.tail(horizon_steps - delta_steps);
  }
  return out;
}

StaticOpenLoopProblem::StaticOpenLoopProblem(const FemGrid& grid, double nu,
                                             const Coefficients& coeffs, const RhcConfig& cfg,
                                             const std::vector<ActuatorWindow>& bank, double t0,
                                             Eigen::VectorXd y0)
    : grid_(grid), nu_(nu), coeffs_(coeffs), cfg_(cfg), t0_(t0), y0_(std::move(y0)) {
  cfg_.validate();
  if (bank.empty()) throw PreconditionError("StaticOpenLoopProblem: empty actuator bank");
  steps_ = static_cast<int>(std::lround(cfg_.T / cfg_.dt));
  loads_.resize(grid_.interior(), static_cast<int>(bank.size()));
  for (std::size_t j = 0; j < bank.size(); ++j)
    loads_.col(j) = grid_.interior_part(fem_load_vector(grid_, bank[j]));
  tape_ = FemArcTape::build(grid_, coeffs_, t0_, cfg_.dt, steps_);
  const double a_const = coeffs_.reaction.constant_part();
  Tridiagonal k_impl = grid_.stiffness().scaled(nu_);
  k_impl.axpy(a_const, grid_.mass());
  const Tridiagonal e = Tridiagonal::combine(1.0, grid_.mass(), 0.5 * cfg_.dt, k_impl);
  f_mat_ = Tridiagonal::combine(1.0, grid_.mass(), -0.5 * cfg_.dt, k_impl);
  e_factor_ = std::make_unique<TridiagonalFactor>(e);
}

void StaticOpenLoopProblem::forward(const Eigen::VectorXd& u_flat,
                                    std::vector<Eigen::VectorXd>& y) const {
  const int n = steps_, m = bank_size();
  const double dt = cfg_.dt;
  y.assign(n + 1, Eigen::VectorXd());
  y[0] = y0_;
  Eigen::VectorXd g_prev;
  for (int k = 0; k < n; ++k) {
    Eigen::VectorXd g = loads_ * u_flat.segment(k * m, m);
    if (!tape_.zero()) g -= tape_.at(k).apply(y[k]);
    Eigen::VectorXd rhs = f_mat_.apply(y[k]);
    if (k == 0)
      rhs += dt * g;
    else
      rhs += dt * (1.5 * g - 0.5 * g_prev);
    y[k + 1] = e_factor_->solve(rhs);
    g_prev = std::move(g);
  }
}

double StaticOpenLoopProblem::evaluate(const Eigen::VectorXd& u_flat, Eigen::VectorXd* grad) const {
  const int n = steps_, m = bank_size();
  const double dt = cfg_.dt;
  std::vector<Eigen::VectorXd> y;
  forward(u_flat, y);
  const auto weight = [n](int k) { return (k == 0 || k == n) ? 0.5 : 1.0; };
  double cost = 0.0;
  for (int k = 0; k <= n; ++k)
    cost += 0.5 * dt * weight(k) * grid_.stiffness().quadratic_form(y[k]);
  cost += 0.5 * cfg_.beta * dt * u_flat.squaredNorm();
  if (!grad) return cost;

  grad->resize(n * m);
  Eigen::VectorXd p_next2 = Eigen::VectorXd::Zero(y[0].size());
  Eigen::VectorXd p_next = e_factor_->solve(-dt * weight(n) * grid_.stiffness().apply(y[n]));
  for (int j = n - 1; j >= 0; --j) {
    const double c1 = (j == 0) ? 1.0 : 1.5;
    const double c2 = (j + 1 <= n - 1) ? -0.5 : 0.0;
    const Eigen::VectorXd m_j = dt * (c1 * p_next + c2 * p_next2);
    grad->segment(j * m, m) =
        cfg_.beta * dt * u_flat.segment(j * m, m) - loads_.transpose() * m_j;
    if (j >= 1) {
      Eigen::VectorXd rhs = f_mat_.apply(p_next);
      if (!tape_.zero()) rhs -= tape_.at(j).apply_transpose(m_j);
      rhs -= dt * weight(j) * grid_.stiffness().apply(y[j]);
      Eigen::VectorXd p_j = e_factor_->solve(rhs);
      p_next2 = std::move(p_next);
      p_next = std::move(p_j);
    }
  }
  return cost;
}

StaticRhcResult static_bank_rhc(const FemGrid& grid, double nu, const Coefficients& coeffs,
                                const RhcConfig& cfg, const std::vector<ActuatorWindow>& bank,
                                const Eigen::VectorXd& y0, double t_final) {
  cfg.validate();
  const double dt = cfg.dt;
  const int m = static_cast<int>(bank.size());
  const int delta_steps = static_cast<int>(std::lround(cfg.delta / dt));
  const int total_windows = static_cast<int>(std::lround(t_final / cfg.delta));
  if (std::abs(total_windows * cfg.delta - t_final) > 1e-9 * std::max(1.0, t_final))
    throw ConfigError("static_bank_rhc: t_final must be a multiple of delta");
  const int horizon_steps = static_cast<int>(std::lround(cfg.T / dt));

  StaticRhcResult out;
  out.dt = dt;
  out.y.push_back(y0);
  out.u.resize(m, total_windows * delta_steps);

  double t0 = 0.0;
  Eigen::VectorXd state = y0;
  Eigen::VectorXd guess = Eigen::VectorXd::Zero(horizon_steps * m);
  for (int w = 0; w < total_windows; ++w) {
    const StaticOpenLoopProblem problem(grid, nu, coeffs, cfg, bank, t0, state);
    const auto objective = [&problem](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
      return problem.evaluate(x, g);
    };
    const BBResult res = projected_bb(objective, nullptr, guess, cfg.optimizer);
    out.windows.push_back({t0, res.cost, res.iterations, res.converged, res.pg});
    std::vector<Eigen::VectorXd> y;
    problem.forward(res.x, y);
    for (int k = 0; k < delta_steps; ++k) {
      out.u.col(w * delta_steps + k) = res.x.segment(k * m, m);
      out.y.push_back(y[k + 1]);
    }
    t0 += cfg.delta;
    state = y[delta_steps];
    guess.setZero();
    guess.head((horizon_steps - delta_steps) * m) =
        res.x.tail((horizon_steps - delta_steps) * m);
  }
  return out;
}

}  // namespace parastab
