#include "parastab/model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

namespace parastab {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kSqrt2 = std::numbers::sqrt2;
}  // namespace

SpectralModel::SpectralModel(double nu_, int n_) : nu(nu_), n(n_) {
  if (nu <= 0.0) throw ConfigError("SpectralModel: nu must be positive");
  if (n < 1) throw ConfigError("SpectralModel: need at least one mode");
}

double SpectralModel::eigenvalue(int j) const { return 1.0 + nu * j * j * kPi * kPi; }

Eigen::VectorXd SpectralModel::eigenvalues() const {
  Eigen::VectorXd a(n);
  for (int j = 1; j <= n; ++j) a[j - 1] = eigenvalue(j);
  return a;
}

double SpectralModel::basis(int j, double x) const { return kSqrt2 * std::sin(j * kPi * x); }

Eigen::VectorXd SpectralModel::basis_at(double x) const {
  Eigen::VectorXd e(n);
  for (int j = 1; j <= n; ++j) e[j - 1] = basis(j, x);
  return e;
}

double SpectralModel::evaluate(const Eigen::VectorXd& y, double x) const {
  double v = 0.0;
  for (int j = 1; j <= static_cast<int>(y.size()); ++j) v += y[j - 1] * basis(j, x);
  return v;
}

double SpectralModel::v_norm(const Eigen::VectorXd& y) const {
  double s = 0.0;
  for (int j = 1; j <= static_cast<int>(y.size()); ++j) s += eigenvalue(j) * y[j - 1] * y[j - 1];
  return std::sqrt(s);
}

double SpectralModel::da_norm(const Eigen::VectorXd& y) const {
  double s = 0.0;
  for (int j = 1; j <= static_cast<int>(y.size()); ++j) {
    const double a = eigenvalue(j);
    s += a * a * y[j - 1] * y[j - 1];
  }
  return std::sqrt(s);
}

CoefficientField::CoefficientField() = default;

CoefficientField CoefficientField::constant(double value) {
  CoefficientField f;
  f.kind_ = Kind::Constant;
  f.constant_part_ = value;
  f.name_ = "const:" + std::to_string(value);
  return f;
}

CoefficientField CoefficientField::preset(const std::string& name) {
  CoefficientField f;
  f.name_ = name;
  if (name == "zero") {
    f.kind_ = Kind::Constant;
    f.constant_part_ = 0.0;
  } else if (name == "one") {
    f.kind_ = Kind::Constant;
    f.constant_part_ = 1.0;
  } else if (name.rfind("const:", 0) == 0) {
    f.kind_ = Kind::Constant;
    f.constant_part_ = std::stod(name.substr(6));
  } else if (name == "-3-2|sin(t+x)|") {
    f.kind_ = Kind::AbsSinShift;
    f.constant_part_ = -3.0;
    f.scale_ = -2.0;
  } else if (name == "-1-0.5|sin(t+x)|") {
    f.kind_ = Kind::AbsSinShift;
    f.constant_part_ = -1.0;
    f.scale_ = -0.5;
  } else if (name == "|cos(t+x)|") {
    f.kind_ = Kind::AbsCosShift;
    f.constant_part_ = 0.0;
    f.scale_ = 1.0;
  } else if (name == "0.25|cos(t+x)|") {
    f.kind_ = Kind::AbsCosShift;
    f.constant_part_ = 0.0;
    f.scale_ = 0.25;
  } else {
    throw ConfigError("unknown coefficient preset: " + name);
  }
  return f;
}

CoefficientField CoefficientField::tabulated(Eigen::VectorXd t_grid, Eigen::VectorXd x_grid,
                                             Eigen::MatrixXd values) {
  if (t_grid.size() < 2 || x_grid.size() < 2) throw ConfigError("tabulated field: need a 2x2 grid at least");
  if (values.rows() != t_grid.size() || values.cols() != x_grid.size())
    throw ConfigError("tabulated field: value shape does not match grids");
  CoefficientField f;
  f.kind_ = Kind::Table;
  f.name_ = "table";
  f.tab_t_ = std::make_shared<Eigen::VectorXd>(std::move(t_grid));
  f.tab_x_ = std::make_shared<Eigen::VectorXd>(std::move(x_grid));
  f.tab_v_ = std::make_shared<Eigen::MatrixXd>(std::move(values));
  return f;
}

namespace {
// Clamped index + weight for linear interpolation on an increasing grid.
std::pair<int, double> bracket(const Eigen::VectorXd& g, double v) {
  const int n = static_cast<int>(g.size());
  if (v <= g[0]) return {0, 0.0};
  if (v >= g[n - 1]) return {n - 2, 1.0};
  int lo = 0, hi = n - 1;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    (g[mid] <= v ? lo : hi) = mid;
  }
  return {lo, (v - g[lo]) / (g[lo + 1] - g[lo])};
}
}  // namespace

double CoefficientField::operator()(double t, double x) const {
  switch (kind_) {
    case Kind::Constant:
      return constant_part_;
    case Kind::AbsSinShift:
      return constant_part_ + scale_ * std::abs(std::sin(t + x));
    case Kind::AbsCosShift:
      return constant_part_ + scale_ * std::abs(std::cos(t + x));
    case Kind::Table: {
      const auto [it, wt] = bracket(*tab_t_, t);
      const auto [ix, wx] = bracket(*tab_x_, x);
      const auto& v = *tab_v_;
      return (1 - wt) * ((1 - wx) * v(it, ix) + wx * v(it, ix + 1)) +
             wt * ((1 - wx) * v(it + 1, ix) + wx * v(it + 1, ix + 1));
    }
  }
  return 0.0;
}

ActuatorWindow::ActuatorWindow(double c, double r) : center(c), half_width(0.5 * r) {
  if (!(r > 0.0) || r > 1.0) throw GeometryError("actuator width must lie in (0, 1]");
  if (!admissible(c, r))
    throw GeometryError("actuator window (" + std::to_string(c - 0.5 * r) + ", " +
                        std::to_string(c + 0.5 * r) + ") leaves the domain (0,1)");
}

bool ActuatorWindow::admissible(double c, double r) {
  return r > 0.0 && r <= 1.0 && c >= 0.5 * r && c <= 1.0 - 0.5 * r;
}

double ActuatorWindow::normalized_height() const { return 1.0 / std::sqrt(width()); }

double indicator_coeff(const ActuatorWindow& act, int j) {
  const double a = act.lo(), b = act.hi();
  return kSqrt2 * (std::cos(j * kPi * a) - std::cos(j * kPi * b)) / (j * kPi);
}

Eigen::VectorXd spectral_coeffs_of_indicator(const SpectralModel& model, const ActuatorWindow& act,
                                             bool normalized) {
  Eigen::VectorXd c(model.n);
  const double scale = normalized ? 1.0 / std::sqrt(act.width()) : 1.0;
  for (int j = 1; j <= model.n; ++j) c[j - 1] = scale * indicator_coeff(act, j);
  return c;
}

FemGrid::FemGrid(double h) {
  if (!(h > 0.0) || h >= 0.5) throw ConfigError("FemGrid: mesh size must lie in (0, 0.5)");
  cells_ = static_cast<int>(std::lround(1.0 / h));
  if (std::abs(cells_ * h - 1.0) > 1e-9 * cells_)
    throw ConfigError("FemGrid: 1/h must be an integer number of cells");
  h_ = 1.0 / cells_;
  const int m = interior();
  mass_ = Tridiagonal(m);
  stiffness_ = Tridiagonal(m);
  mass_.diag.setConstant(2.0 * h_ / 3.0);
  mass_.lower.setConstant(h_ / 6.0);
  mass_.upper.setConstant(h_ / 6.0);
  stiffness_.diag.setConstant(2.0 / h_);
  stiffness_.lower.setConstant(-1.0 / h_);
  stiffness_.upper.setConstant(-1.0 / h_);
}

Eigen::VectorXd FemGrid::interior_nodes() const {
  Eigen::VectorXd x(interior());
  for (int i = 0; i < interior(); ++i) x[i] = (i + 1) * h_;
  return x;
}

Eigen::VectorXd FemGrid::interior_part(const Eigen::VectorXd& full) const {
  if (full.size() != nodes()) throw PreconditionError("interior_part: size mismatch");
  return full.segment(1, interior());
}

double FemGrid::h_norm(const Eigen::VectorXd& y) const { return std::sqrt(mass_.quadratic_form(y)); }

double FemGrid::v_norm(const Eigen::VectorXd& y, double nu) const {
  return std::sqrt(nu * stiffness_.quadratic_form(y) + mass_.quadratic_form(y));
}

Eigen::VectorXd FemGrid::interpolate(const std::function<double(double)>& f) const {
  Eigen::VectorXd y(interior());
  for (int i = 0; i < interior(); ++i) y[i] = f((i + 1) * h_);
  return y;
}

namespace {
// 2-point Gauss nodes on the reference element [0,1].
constexpr double kG0 = 0.5 - 0.28867513459481288225;  // 0.5 - 1/(2 sqrt 3)
constexpr double kG1 = 0.5 + 0.28867513459481288225;
}  // namespace

Tridiagonal FemGrid::weighted_mass(const std::function<double(double)>& w) const {
  const int m = interior();
  Tridiagonal out(m);
  for (int e = 0; e < cells_; ++e) {
    const double x0 = e * h_;
    const double xq0 = x0 + kG0 * h_, xq1 = x0 + kG1 * h_;
    const double w0 = 0.5 * h_ * w(xq0), w1 = 0.5 * h_ * w(xq1);
    // local shapes: N_left = 1-s, N_right = s at s = kG0, kG1
    const double ll = w0 * (1 - kG0) * (1 - kG0) + w1 * (1 - kG1) * (1 - kG1);
    const double lr = w0 * (1 - kG0) * kG0 + w1 * (1 - kG1) * kG1;
    const double rr = w0 * kG0 * kG0 + w1 * kG1 * kG1;
    const int il = e - 1, ir = e;  // interior indices of the element's nodes
    if (il >= 0) out.diag[il] += ll;
    if (ir < m) out.diag[ir] += rr;
    if (il >= 0 && ir < m) {
      out.upper[il] += lr;
      out.lower[il] += lr;
    }
  }
  return out;
}

Tridiagonal FemGrid::convection_matrix(const std::function<double(double)>& b) const {
  const int m = interior();
  Tridiagonal out(m);
  for (int e = 0; e < cells_; ++e) {
    const double x0 = e * h_;
    const double xq0 = x0 + kG0 * h_, xq1 = x0 + kG1 * h_;
    const double w0 = 0.5 * h_ * b(xq0), w1 = 0.5 * h_ * b(xq1);
    // d/dx of left shape is -1/h, of right shape is +1/h.
    const double ll = (w0 * (1 - kG0) + w1 * (1 - kG1)) * (-1.0 / h_);
    const double lr = (w0 * (1 - kG0) + w1 * (1 - kG1)) * (1.0 / h_);
    const double rl = (w0 * kG0 + w1 * kG1) * (-1.0 / h_);
    const double rr = (w0 * kG0 + w1 * kG1) * (1.0 / h_);
    const int il = e - 1, ir = e;
    if (il >= 0) out.diag[il] += ll;
    if (ir < m) out.diag[ir] += rr;
    if (il >= 0 && ir < m) {
      out.upper[il] += lr;  // row il, col ir
      out.lower[il] += rl;  // row ir, col il
    }
  }
  return out;
}

FemGrid::EigenPairs FemGrid::operator_eigenpairs(double nu, const std::function<double(double)>& a) const {
  Tridiagonal op = stiffness_.scaled(nu);
  op.axpy(1.0, weighted_mass(a));
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(op.dense(), mass_.dense());
  if (es.info() != Eigen::Success) throw PreconditionError("generalized eigensolver failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

namespace {
// Integral of the hat function centered at node i over [a, b] intersected
// with its support; a, b are assumed inside [0, 1].
double hat_integral(double h, int cells, int i, double a, double b) {
  const double xi = i * h;
  double total = 0.0;
  // rising part on [xi - h, xi], phi(x) = (x - (xi - h))/h
  if (i >= 1) {
    const double lo = std::max(a, xi - h), hi = std::min(b, xi);
    if (hi > lo) {
      const double u1 = (hi - (xi - h)) / h, u0 = (lo - (xi - h)) / h;
      total += 0.5 * h * (u1 * u1 - u0 * u0);
    }
  }
  // falling part on [xi, xi + h]
  if (i <= cells - 1) {
    const double lo = std::max(a, xi), hi = std::min(b, xi + h);
    if (hi > lo) {
      const double u1 = ((xi + h) - lo) / h, u0 = ((xi + h) - hi) / h;
      total += 0.5 * h * (u1 * u1 - u0 * u0);
    }
  }
  return total;
}

double hat_value(double h, int cells, int i, double x) {
  const double xi = i * h;
  const double d = std::abs(x - xi);
  if (d >= h) return 0.0;
  if (x < 0.0 || x > 1.0) return 0.0;
  (void)cells;
  return 1.0 - d / h;
}

Eigen::VectorXd load_on_span(const FemGrid& grid, double a, double b) {
  const double h = grid.h();
  const int cells = grid.cells();
  Eigen::VectorXd load = Eigen::VectorXd::Zero(grid.nodes());
  if (b <= a) return load;
  const int first = std::max(0, static_cast<int>(std::floor(a / h)) - 1);
  const int last = std::min(cells, static_cast<int>(std::ceil(b / h)) + 1);
  for (int i = first; i <= last; ++i) load[i] = hat_integral(h, cells, i, a, b);
  return load;
}
}  // namespace

Eigen::VectorXd fem_load_vector(const FemGrid& grid, const ActuatorWindow& act) {
  return load_on_span(grid, act.lo(), act.hi());
}

Eigen::VectorXd fem_load_derivative(const FemGrid& grid, const ActuatorWindow& act) {
  if (!(act.lo() > 0.0 && act.hi() < 1.0))
    throw GeometryError("fem_load_derivative: actuator must be strictly interior");
  Eigen::VectorXd d(grid.nodes());
  for (int i = 0; i <= grid.cells(); ++i)
    d[i] = hat_value(grid.h(), grid.cells(), i, act.hi()) - hat_value(grid.h(), grid.cells(), i, act.lo());
  return d;
}

Eigen::VectorXd fem_load_vector_clipped(const FemGrid& grid, double center, double r) {
  const double a = std::clamp(center - 0.5 * r, 0.0, 1.0);
  const double b = std::clamp(center + 0.5 * r, 0.0, 1.0);
  return load_on_span(grid, a, b);
}

Eigen::VectorXd fem_load_derivative_clipped(const FemGrid& grid, double center, double r) {
  const double a = center - 0.5 * r, b = center + 0.5 * r;
  Eigen::VectorXd d = Eigen::VectorXd::Zero(grid.nodes());
  if (b <= 0.0 || a >= 1.0) return d;
  for (int i = 0; i <= grid.cells(); ++i) {
    double v = 0.0;
    if (b < 1.0) v += hat_value(grid.h(), grid.cells(), i, b);
    if (a > 0.0) v -= hat_value(grid.h(), grid.cells(), i, a);
    d[i] = v;
  }
  return d;
}

}  // namespace parastab
