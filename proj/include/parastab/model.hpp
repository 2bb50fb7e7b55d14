#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "parastab/errors.hpp"
#include "parastab/tridiag.hpp"

namespace parastab {

/// Eigenpairs of A = -nu*Laplacian + 1 on (0,1) with homogeneous Dirichlet
/// conditions, truncated at n modes. Hosts the H, V and D(A) norms on
/// coefficient vectors.
struct SpectralModel {
  double nu = 0.1;
  int n = 32;

  SpectralModel() = default;
  SpectralModel(double nu_, int n_);

  /// alpha_j = 1 + nu j^2 pi^2 (1-indexed).
  double eigenvalue(int j) const;
  Eigen::VectorXd eigenvalues() const;
  /// e_j(x) = sqrt(2) sin(j pi x).
  double basis(int j, double x) const;
  Eigen::VectorXd basis_at(double x) const;

  /// Point evaluation of the state with coefficient vector y.
  double evaluate(const Eigen::VectorXd& y, double x) const;

  double h_norm(const Eigen::VectorXd& y) const { return y.norm(); }
  double v_norm(const Eigen::VectorXd& y) const;
  double da_norm(const Eigen::VectorXd& y) const;
};

/// Scalar coefficient field w(t,x) given as a named analytic preset or a
/// tabulated grid (clamped bilinear interpolation). The additive constant of
/// the preset is split off so time steppers can treat it implicitly.
class CoefficientField {
 public:
  CoefficientField();  // zero field

  static CoefficientField constant(double value);
  /// Accepted names: "zero", "one", "const:<v>", "-3-2|sin(t+x)|",
  /// "-1-0.5|sin(t+x)|", "|cos(t+x)|", "0.25|cos(t+x)|".
  static CoefficientField preset(const std::string& name);
  static CoefficientField tabulated(Eigen::VectorXd t_grid, Eigen::VectorXd x_grid,
                                    Eigen::MatrixXd values);

  double operator()(double t, double x) const;
  double constant_part() const { return constant_part_; }
  bool is_constant() const { return kind_ == Kind::Constant; }
  const std::string& name() const { return name_; }

 private:
  enum class Kind { Constant, AbsSinShift, AbsCosShift, Table };
  Kind kind_ = Kind::Constant;
  double constant_part_ = 0.0;
  double scale_ = 0.0;  // multiplies |sin(t+x)| or |cos(t+x)|
  std::string name_ = "zero";
  // table data
  std::shared_ptr<const Eigen::VectorXd> tab_t_, tab_x_;
  std::shared_ptr<const Eigen::MatrixXd> tab_v_;
};

/// Reaction a(t,x) and convection b(t,x) of A_rc(t) = (a-1) + b d/dx.
struct Coefficients {
  CoefficientField reaction = CoefficientField::preset("one");
  CoefficientField convection;  // zero
};

/// Width-r interval actuator omega(c) = (c - r/2, c + r/2) inside (0,1).
struct ActuatorWindow {
  double center = 0.5;
  double half_width = 0.02;

  ActuatorWindow() = default;
  /// Throws GeometryError unless r/2 <= c <= 1 - r/2 and 0 < r <= 1.
  ActuatorWindow(double c, double r);

  static bool admissible(double c, double r);

  double width() const { return 2.0 * half_width; }
  double lo() const { return center - half_width; }
  double hi() const { return center + half_width; }
  /// Value of the normalized indicator on its support, r^{-1/2}.
  double normalized_height() const;
};

/// j-th sine coefficient of the (unnormalized) indicator of act:
/// sqrt(2) (cos(j pi a) - cos(j pi b)) / (j pi).
double indicator_coeff(const ActuatorWindow& act, int j);
/// First n coefficients; normalized divides by sqrt(r).
Eigen::VectorXd spectral_coeffs_of_indicator(const SpectralModel& model, const ActuatorWindow& act,
                                             bool normalized = false);

/// Uniform piecewise-linear mesh on (0,1) with exact element integrals.
class FemGrid {
 public:
  explicit FemGrid(double h);

  double h() const { return h_; }
  int cells() const { return cells_; }
  int nodes() const { return cells_ + 1; }      // including boundary
  int interior() const { return cells_ - 1; }   // Dirichlet-eliminated size
  double node(int i) const { return i * h_; }
  Eigen::VectorXd interior_nodes() const;

  const Tridiagonal& mass() const { return mass_; }            // interior
  const Tridiagonal& stiffness() const { return stiffness_; }  // pure -Laplacian, interior

  /// Restriction of a full nodal vector to interior nodes.
  Eigen::VectorXd interior_part(const Eigen::VectorXd& full) const;

  double h_norm(const Eigen::VectorXd& y_int) const;
  /// A-induced V-norm: sqrt(nu y'S y + y'M y).
  double v_norm(const Eigen::VectorXd& y_int, double nu) const;

  /// Nodal interpolation of f at interior nodes.
  Eigen::VectorXd interpolate(const std::function<double(double)>& f) const;

  /// Generalized eigenproblem (nu S + R[a]) v = lambda M v on interior nodes,
  /// where R[a] is the mass-type matrix of the reaction a(x).
  /// Returns eigenvalues ascending and M-orthonormal eigenvectors.
  struct EigenPairs {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
  };
  EigenPairs operator_eigenpairs(double nu, const std::function<double(double)>& a) const;

  /// Mass-type matrix of a scalar field w(x) at fixed time (interior), 2-pt Gauss.
  Tridiagonal weighted_mass(const std::function<double(double)>& w) const;
  /// Convection matrix C_ij = int b(x) phi_j'(x) phi_i(x) dx (interior), 2-pt Gauss.
  Tridiagonal convection_matrix(const std::function<double(double)>& b) const;

 private:
  double h_ = 0.0;
  int cells_ = 0;
  Tridiagonal mass_, stiffness_;
};

/// Exact integrals (1_{omega(c)}, phi_i) over all nodes, i = 0..cells.
/// Entries sum to r exactly.
Eigen::VectorXd fem_load_vector(const FemGrid& grid, const ActuatorWindow& act);
/// Derivative of fem_load_vector w.r.t. the center: phi_i(c+r/2) - phi_i(c-r/2).
/// Requires a strictly interior actuator.
Eigen::VectorXd fem_load_derivative(const FemGrid& grid, const ActuatorWindow& act);

/// Clipped variants used by the optimizer: the window is intersected with
/// (0,1) instead of raising a geometry error, and the derivative drops
/// contributions from clipped endpoints.
Eigen::VectorXd fem_load_vector_clipped(const FemGrid& grid, double center, double r);
Eigen::VectorXd fem_load_derivative_clipped(const FemGrid& grid, double center, double r);

}  // namespace parastab
