#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "parastab/model.hpp"
#include "parastab/simulate.hpp"

namespace parastab {

/// Spectrum of the autonomous diffusion-reaction operator
/// cal A = -nu Lap + a(x), with eigenvector coefficients in either the sine
/// basis (constant a, closed form) or the FEM nodal basis (x-dependent a).
class EigenAnalysis {
 public:
  static EigenAnalysis from_constant_reaction(double nu, double a, int count);
  static EigenAnalysis from_fem(const FemGrid& grid, double nu,
                                const std::function<double(double)>& a, int count);
  /// Synthetic diagonal system with prescribed eigenvalues (used to exercise
  /// the nonsimple branch, which the 1D operator never produces).
  static EigenAnalysis synthetic(Eigen::VectorXd values);

  int count() const { return static_cast<int>(values_.size()); }
  double value(int j) const { return values_[j - 1]; }  // 1-indexed
  const Eigen::VectorXd& values() const { return values_; }
  /// Eigenfunction j in the working representation (unit H norm).
  Eigen::VectorXd eigenfunction(int j) const;

  /// Smallest index with a positive eigenvalue; throws PreconditionError when
  /// every computed eigenvalue is nonpositive (insufficient coverage).
  int first_positive_index() const;

  /// Index ranges [begin, end) of eigenvalue clusters under the given
  /// relative gap (multiplicity detection).
  std::vector<std::pair<int, int>> clusters(double rel_gap = 1e-8) const;

  /// H-pairing functional of an actuator profile or state:
  /// (v, psi)_H = v . pairing for v in the working representation.
  struct Psi {
    Eigen::VectorXd pairing;
    double h_norm = 0.0;
  };
  Psi make_psi(const ActuatorWindow& window) const;
  Psi make_psi_from_state(const Eigen::VectorXd& state) const;

  /// (e_j, psi)_H.
  double beta(int j, const Psi& psi) const { return eigenfunction(j).dot(psi.pairing); }
  /// Coordinates of a representation vector in the eigenbasis.
  Eigen::VectorXd eigen_coordinates(const Eigen::VectorXd& state) const;
  double h_norm(const Eigen::VectorXd& state) const;

  bool fem_representation() const { return static_cast<bool>(grid_); }
  const FemGrid* grid() const { return grid_.get(); }
  double nu() const { return nu_; }

 private:
  Eigen::VectorXd values_;
  Eigen::MatrixXd vectors_;  // columns; orthonormal in the discrete H product
  std::shared_ptr<const FemGrid> grid_;
  double nu_ = 0.0;
};

/// Eigenfunction of a multiple eigenvalue orthogonal to psi:
/// beta_{j+1} e_j - beta_j e_{j+1}, normalized; requires multiplicity >= 2.
Eigen::VectorXd find_orthogonal_eigenfunction(const EigenAnalysis& analysis,
                                              const EigenAnalysis::Psi& psi, int j);

enum class StabilizabilityKind { NotStabilizable, Stabilizable, Inconclusive };

struct StabilizabilityVerdict {
  StabilizabilityKind kind = StabilizabilityKind::Inconclusive;
  std::optional<Eigen::VectorXd> witness;  // unit eigenfunction, when not stabilizable
  double eigenvalue = 0.0;                 // the relevant (nonpositive) eigenvalue
  int index = 0;                           // its 1-based index
  double orthogonality = 0.0;              // min_j |(e_j, psi)| / |psi| over nonpositive modes
  std::string reason;
};

/// Props 2.1 / 2.2 dichotomy with a floating-point INCONCLUSIVE band:
/// relative orthogonality below 1e-10 counts as exact, above 1e-6 as
/// definitely nonorthogonal.
StabilizabilityVerdict static_stabilizability_verdict(const EigenAnalysis& analysis,
                                                      const EigenAnalysis::Psi& psi);

struct KalmanResult {
  double det_direct = 0.0;
  double det_closed_form = 0.0;
  bool controllable = false;
};

/// Determinant of [B AB ... A^{d-1}B] for A = diag(eigenvalues), B = psi
/// coefficients, computed directly and via the Vandermonde product form.
KalmanResult kalman_controllability(const Eigen::VectorXd& eigenvalues,
                                    const Eigen::VectorXd& psi_coeffs);

/// Simulates the autonomous system under the supplied magnitude control and
/// reports |y(t)| / (e^{-alpha_j t} |y0|) on the time grid. The witness must
/// be a unit eigenfunction orthogonal to psi within 1e-8.
std::vector<double> verify_lower_bound(const EigenAnalysis& analysis,
                                       const Eigen::VectorXd& witness,
                                       const EigenAnalysis::Psi& psi,
                                       const std::function<double(double)>& control,
                                       double horizon, double dt = 1e-3);

}  // namespace parastab
