#include "parastab/tridiag.hpp"

#include <cmath>

namespace parastab {

Eigen::VectorXd Tridiagonal::apply(const Eigen::VectorXd& x) const {
  const int n = size();
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    double v = diag[i] * x[i];
    if (i > 0) v += lower[i - 1] * x[i - 1];
    if (i + 1 < n) v += upper[i] * x[i + 1];
    y[i] = v;
  }
  return y;
}

Eigen::VectorXd Tridiagonal::apply_transpose(const Eigen::VectorXd& x) const {
  const int n = size();
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    double v = diag[i] * x[i];
    if (i > 0) v += upper[i - 1] * x[i - 1];
    if (i + 1 < n) v += lower[i] * x[i + 1];
    y[i] = v;
  }
  return y;
}

Tridiagonal& Tridiagonal::axpy(double a, const Tridiagonal& other) {
  lower += a * other.lower;
  diag += a * other.diag;
  upper += a * other.upper;
  return *this;
}

Tridiagonal Tridiagonal::scaled(double a) const {
  Tridiagonal out = *this;
  out.lower *= a;
  out.diag *= a;
  out.upper *= a;
  return out;
}

Tridiagonal Tridiagonal::combine(double a, const Tridiagonal& x, double b, const Tridiagonal& y) {
  Tridiagonal out = x.scaled(a);
  out.axpy(b, y);
  return out;
}

Eigen::MatrixXd Tridiagonal::dense() const {
  const int n = size();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    m(i, i) = diag[i];
    if (i + 1 < n) {
      m(i + 1, i) = lower[i];
      m(i, i + 1) = upper[i];
    }
  }
  return m;
}

TridiagonalFactor::TridiagonalFactor(const Tridiagonal& m)
    : lower_(m.lower.size()), pivot_(m.diag.size()), upper_(m.upper) {
  const int n = m.size();
  pivot_[0] = m.diag[0];
  for (int i = 1; i < n; ++i) {
    if (pivot_[i - 1] == 0.0) throw PreconditionError("tridiagonal factorization: zero pivot");
    lower_[i - 1] = m.lower[i - 1] / pivot_[i - 1];
    pivot_[i] = m.diag[i] - lower_[i - 1] * m.upper[i - 1];
  }
  if (pivot_[n - 1] == 0.0) throw PreconditionError("tridiagonal factorization: zero pivot");
}

Eigen::VectorXd TridiagonalFactor::solve(const Eigen::VectorXd& rhs) const {
  const int n = static_cast<int>(pivot_.size());
  Eigen::VectorXd x = rhs;
  for (int i = 1; i < n; ++i) x[i] -= lower_[i - 1] * x[i - 1];
  x[n - 1] /= pivot_[n - 1];
  for (int i = n - 2; i >= 0; --i) x[i] = (x[i] - upper_[i] * x[i + 1]) / pivot_[i];
  return x;
}

Eigen::VectorXd TridiagonalFactor::solve_transpose(const Eigen::VectorXd& rhs) const {
  // A = L U  =>  A^T = U^T L^T: forward sweep with U^T, back substitution with L^T.
  const int n = static_cast<int>(pivot_.size());
  Eigen::VectorXd x = rhs;
  x[0] /= pivot_[0];
  for (int i = 1; i < n; ++i) x[i] = (x[i] - upper_[i - 1] * x[i - 1]) / pivot_[i];
  for (int i = n - 2; i >= 0; --i) x[i] -= lower_[i] * x[i + 1];
  return x;
}

}  // namespace parastab
