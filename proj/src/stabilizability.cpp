#include "parastab/stabilizability.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>

namespace parastab {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kExactTol = 1e-10;
constexpr double kClearTol = 1e-6;
}  // namespace

EigenAnalysis EigenAnalysis::from_constant_reaction(double nu, double a, int count) {
  if (count < 1) throw PreconditionError("EigenAnalysis: need at least one mode");
  EigenAnalysis out;
  out.nu_ = nu;
  out.values_.resize(count);
  for (int j = 1; j <= count; ++j) out.values_[j - 1] = nu * j * j * kPi * kPi + a;
  out.vectors_ = Eigen::MatrixXd::Identity(count, count);
  return out;
}

EigenAnalysis EigenAnalysis::from_fem(const FemGrid& grid, double nu,
                                      const std::function<double(double)>& a, int count) {
  if (count < 1 || count > grid.interior())
    throw PreconditionError("EigenAnalysis: mode count exceeds the mesh resolution");
  const auto pairs = grid.operator_eigenpairs(nu, a);
  EigenAnalysis out;
  out.nu_ = nu;
  out.grid_ = std::make_shared<FemGrid>(grid);
  out.values_ = pairs.values.head(count);
  out.vectors_ = pairs.vectors.leftCols(count);
  return out;
}

EigenAnalysis EigenAnalysis::synthetic(Eigen::VectorXd values) {
  EigenAnalysis out;
  const int n = static_cast<int>(values.size());
  out.values_ = std::move(values);
  out.vectors_ = Eigen::MatrixXd::Identity(n, n);
  return out;
}

Eigen::VectorXd EigenAnalysis::eigenfunction(int j) const {
  if (j < 1 || j > count()) throw PreconditionError("EigenAnalysis: eigenfunction index");
  return vectors_.col(j - 1);
}

int EigenAnalysis::first_positive_index() const {
  for (int j = 1; j <= count(); ++j)
    if (values_[j - 1] > 0.0) return j;
  throw PreconditionError(
      "EigenAnalysis: all computed eigenvalues are nonpositive; raise the mode count");
}

std::vector<std::pair<int, int>> EigenAnalysis::clusters(double rel_gap) const {
  std::vector<std::pair<int, int>> out;
  const double scale = std::max(1.0, values_.cwiseAbs().maxCoeff());
  int begin = 1;
  for (int j = 2; j <= count() + 1; ++j) {
    const bool split =
        j > count() || std::abs(values_[j - 1] - values_[j - 2]) > rel_gap * scale;
    if (split) {
      out.emplace_back(begin, j);
      begin = j;
    }
  }
  return out;
}

EigenAnalysis::Psi EigenAnalysis::make_psi(const ActuatorWindow& window) const {
  Psi psi;
  psi.h_norm = std::sqrt(window.width());
  if (grid_) {
    psi.pairing = grid_->interior_part(fem_load_vector(*grid_, window));
  } else {
    // sine-basis coefficients of the unnormalized indicator
    psi.pairing.resize(count());
    for (int j = 1; j <= count(); ++j) psi.pairing[j - 1] = indicator_coeff(window, j);
  }
  return psi;
}

EigenAnalysis::Psi EigenAnalysis::make_psi_from_state(const Eigen::VectorXd& state) const {
  Psi psi;
  if (grid_) {
    psi.pairing = grid_->mass().apply(state);
    psi.h_norm = grid_->h_norm(state);
  } else {
    psi.pairing = state;
    psi.h_norm = state.norm();
  }
  return psi;
}

Eigen::VectorXd EigenAnalysis::eigen_coordinates(const Eigen::VectorXd& state) const {
  if (grid_) return vectors_.transpose() * grid_->mass().apply(state);
  return vectors_.transpose() * state;
}

double EigenAnalysis::h_norm(const Eigen::VectorXd& state) const {
  return grid_ ? grid_->h_norm(state) : state.norm();
}

Eigen::VectorXd find_orthogonal_eigenfunction(const EigenAnalysis& analysis,
                                              const EigenAnalysis::Psi& psi, int j) {
  // j and j+1 must share an eigenvalue cluster
  bool multiple = false;
  for (const auto& [begin, end] : analysis.clusters())
    if (begin <= j && j + 1 < end) multiple = true;
  if (!multiple)
    throw PreconditionError("find_orthogonal_eigenfunction: eigenvalue " + std::to_string(j) +
                            " is simple");
  const double bj = analysis.beta(j, psi);
  const double bj1 = analysis.beta(j + 1, psi);
  const double scale = std::max(psi.h_norm, 1e-300);
  if (std::abs(bj) <= kExactTol * scale) return analysis.eigenfunction(j);
  if (std::abs(bj1) <= kExactTol * scale) return analysis.eigenfunction(j + 1);
  Eigen::VectorXd bar = bj1 * analysis.eigenfunction(j) - bj * analysis.eigenfunction(j + 1);
  return bar / std::sqrt(bj * bj + bj1 * bj1);
}

StabilizabilityVerdict static_stabilizability_verdict(const EigenAnalysis& analysis,
                                                      const EigenAnalysis::Psi& psi) {
  const int j0 = analysis.first_positive_index();
  if (analysis.count() < j0 + 2)
    throw PreconditionError(
        "static_stabilizability_verdict: need all nonpositive eigenvalues plus a margin of 3");

  StabilizabilityVerdict verdict;
  if (j0 == 1) {
    verdict.kind = StabilizabilityKind::Stabilizable;
    verdict.orthogonality = 1.0;
    verdict.reason = "free dynamics already stable (no nonpositive eigenvalues)";
    return verdict;
  }
  const double scale = std::max(psi.h_norm, 1e-300);

  // nonsimple nonpositive eigenvalue: explicit witness by the two-mode combination
  for (const auto& [begin, end] : analysis.clusters()) {
    if (begin >= j0) break;
    if (end - begin >= 2) {
      verdict.kind = StabilizabilityKind::NotStabilizable;
      verdict.witness = find_orthogonal_eigenfunction(analysis, psi, begin);
      verdict.index = begin;
      verdict.eigenvalue = analysis.value(begin);
      verdict.orthogonality = std::abs(verdict.witness->dot(psi.pairing)) / scale;
      verdict.reason = "nonsimple nonpositive eigenvalue";
      return verdict;
    }
  }

  // simple spectrum: scan orthogonality of the nonpositive modes
  double min_orth = std::numeric_limits<double>::infinity();
  int min_idx = 0;
  for (int j = 1; j < j0; ++j) {
    const double orth = std::abs(analysis.beta(j, psi)) / scale;
    if (orth < min_orth) {
      min_orth = orth;
      min_idx = j;
    }
  }
  verdict.orthogonality = min_orth;
  verdict.index = min_idx;
  verdict.eigenvalue = analysis.value(min_idx);
  if (min_orth <= kExactTol) {
    verdict.kind = StabilizabilityKind::NotStabilizable;
    verdict.witness = analysis.eigenfunction(min_idx);
    verdict.reason = "a nonpositive eigenfunction is orthogonal to the actuator";
  } else if (min_orth >= kClearTol) {
    verdict.kind = StabilizabilityKind::Stabilizable;
    verdict.reason = "all nonpositive eigenvalues simple and visibly coupled to the actuator";
  } else {
    verdict.kind = StabilizabilityKind::Inconclusive;
    verdict.reason = "orthogonality falls inside the floating-point tolerance band";
  }
  return verdict;
}

KalmanResult kalman_controllability(const Eigen::VectorXd& eigenvalues,
                                    const Eigen::VectorXd& psi_coeffs) {
  const int d = static_cast<int>(eigenvalues.size());
  if (d < 1) throw PreconditionError("kalman_controllability: empty system");
  if (psi_coeffs.size() != d)
    throw PreconditionError("kalman_controllability: dimension mismatch");
  const double scale = std::max(1.0, eigenvalues.cwiseAbs().maxCoeff());
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      if (std::abs(eigenvalues[i] - eigenvalues[j]) <= 1e-12 * scale)
        throw PreconditionError("kalman_controllability: repeated eigenvalues");

  Eigen::MatrixXd kalman(d, d);
  Eigen::VectorXd col = psi_coeffs;
  for (int c = 0; c < d; ++c) {
    kalman.col(c) = col;
    col = eigenvalues.cwiseProduct(col);
  }
  KalmanResult out;
  out.det_direct = kalman.determinant();
  double closed = psi_coeffs.prod();
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) closed *= eigenvalues[j] - eigenvalues[i];
  out.det_closed_form = closed;
  out.controllable = closed != 0.0;
  return out;
}

std::vector<double> verify_lower_bound(const EigenAnalysis& analysis,
                                       const Eigen::VectorXd& witness,
                                       const EigenAnalysis::Psi& psi,
                                       const std::function<double(double)>& control,
                                       double horizon, double dt) {
  const Eigen::VectorXd w = analysis.eigen_coordinates(witness);
  const double wnorm = w.norm();
  if (std::abs(wnorm - 1.0) > 1e-6)
    throw PreconditionError("verify_lower_bound: witness must have unit H norm");
  Eigen::Index j = 0;
  w.cwiseAbs().maxCoeff(&j);
  const double alpha_j = analysis.values()[j];
  // eigen-residual of the witness
  double resid = 0.0;
  for (int i = 0; i < analysis.count(); ++i) {
    const double r = (analysis.values()[i] - alpha_j) * w[i];
    resid += r * r;
  }
  if (std::sqrt(resid) > 1e-8 * std::max(1.0, std::abs(alpha_j)))
    throw PreconditionError("verify_lower_bound: witness is not an eigenfunction");
  const double scale = std::max(psi.h_norm, 1e-300);
  if (std::abs(witness.dot(psi.pairing)) / scale > 1e-8)
    throw PreconditionError("verify_lower_bound: witness is not orthogonal to the actuator");

  // modal forcing coefficients b_i = (e_i, psi)
  Eigen::VectorXd b(analysis.count());
  for (int i = 1; i <= analysis.count(); ++i) b[i - 1] = analysis.beta(i, psi);

  const int steps = static_cast<int>(std::lround(horizon / dt));
  SpectralCnab stepper(analysis.values(), nullptr, 0.0, 0.0, dt);
  LambdaForcing f(analysis.count(), [&](double t) -> Eigen::VectorXd { return control(t) * b; });
  const Trajectory traj = stepper.run(w, steps, &f);

  std::vector<double> ratios;
  ratios.reserve(steps + 1);
  for (int k = 0; k <= steps; ++k)
    ratios.push_back(traj.states[k].norm() / std::exp(-alpha_j * traj.time(k)));
  return ratios;
}

}  // namespace parastab
