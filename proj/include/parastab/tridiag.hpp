#pragma once

#include <Eigen/Core>

#include "parastab/errors.hpp"

namespace parastab {

/// Tridiagonal matrix stored as three bands (lower/diag/upper).
struct Tridiagonal {
  Eigen::VectorXd lower;  // size n-1
  Eigen::VectorXd diag;   // size n
  Eigen::VectorXd upper;  // size n-1

  Tridiagonal() = default;
  explicit Tridiagonal(int n)
      : lower(Eigen::VectorXd::Zero(n > 0 ? n - 1 : 0)),
        diag(Eigen::VectorXd::Zero(n)),
        upper(Eigen::VectorXd::Zero(n > 0 ? n - 1 : 0)) {}

  int size() const { return static_cast<int>(diag.size()); }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& x) const;
  double quadratic_form(const Eigen::VectorXd& x) const { return x.dot(apply(x)); }

  Tridiagonal& axpy(double a, const Tridiagonal& other);
  Tridiagonal scaled(double a) const;
  static Tridiagonal combine(double a, const Tridiagonal& x, double b, const Tridiagonal& y);

  Eigen::MatrixXd dense() const;
};

/// Thomas factorization; no pivoting, intended for diagonally dominant systems.
class TridiagonalFactor {
 public:
  explicit TridiagonalFactor(const Tridiagonal& m);

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  // Solves with the transpose of the factored matrix.
  Eigen::VectorXd solve_transpose(const Eigen::VectorXd& rhs) const;

 private:
  Eigen::VectorXd lower_, pivot_, upper_;
};

}  // namespace parastab
