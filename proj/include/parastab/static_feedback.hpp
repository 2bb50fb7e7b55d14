#pragma once

#include <Eigen/Core>
#include <Eigen/LU>
#include <cstdint>
#include <random>
#include <vector>

#include "parastab/model.hpp"
#include "parastab/simulate.hpp"

namespace parastab {

/// M disjoint width-r actuators with equispaced centers (2i-1)/(2M).
struct ActuatorBank {
  int M = 1;
  double r = 0.04;
  std::vector<ActuatorWindow> windows;

  ActuatorBank(int M_, double r_);
  double center(int i) const { return windows[i - 1].center; }  // 1-indexed
};

/// Oblique projection onto span{1_{omega_j}} along span{e_1..e_M}^perp in the
/// n-mode coefficient space: P h = U beta with G beta = (h_1, ..., h_M),
/// G_kj = (1_{omega_j}, e_k).
class ObliqueProjector {
 public:
  static ObliqueProjector build(const SpectralModel& model, const ActuatorBank& bank,
                                double max_condition = 1e8);

  int M() const { return static_cast<int>(gram_.cols()); }
  int modes() const { return static_cast<int>(indicator_coeffs_.rows()); }

  Eigen::VectorXd gram_solve(const Eigen::VectorXd& head) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& h) const;
  /// Magnitude decomposition on the in-model unit-normalized actuators.
  Eigen::VectorXd unit_magnitudes(const Eigen::VectorXd& beta) const;

  /// Operator-norm estimate on H (power iteration on P*P).
  double op_norm() const { return op_norm_; }
  double gram_condition() const { return gram_condition_; }

  const Eigen::MatrixXd& indicator_coeffs() const { return indicator_coeffs_; }
  /// In-model H norms of the truncated indicators.
  const Eigen::VectorXd& indicator_norms() const { return indicator_norms_; }
  /// Coefficients of the in-model unit actuator j (1-indexed).
  Eigen::VectorXd unit_actuator(int j) const {
    return indicator_coeffs_.col(j - 1) / indicator_norms_[j - 1];
  }

 private:
  Eigen::MatrixXd indicator_coeffs_;  // n x M
  Eigen::VectorXd indicator_norms_;
  Eigen::MatrixXd gram_;
  Eigen::PartialPivLU<Eigen::MatrixXd> gram_lu_;
  double op_norm_ = 0.0;
  double gram_condition_ = 0.0;
};

/// Evaluator of the projection feedback P(A_rc(t) y - lambda y).
class ClosedLoopFeedback {
 public:
  ClosedLoopFeedback(ObliqueProjector projector, double lambda)
      : projector_(std::move(projector)), lambda_(lambda) {}

  const ObliqueProjector& projector() const { return projector_; }
  double lambda() const { return lambda_; }

  Eigen::VectorXd beta(const Eigen::MatrixXd& arc, const Eigen::VectorXd& y) const;
  Eigen::VectorXd forcing(const Eigen::MatrixXd& arc, const Eigen::VectorXd& y) const;
  /// Magnitudes v_j(t) on the unit-normalized actuators.
  Eigen::VectorXd magnitudes(const Eigen::MatrixXd& arc, const Eigen::VectorXd& y) const;

 private:
  ObliqueProjector projector_;
  double lambda_;
};

/// lambda = 2 |min over a probe grid of (a - 1)| + 1.
double default_lambda(const Coefficients& coeffs, double t_max = 6.3);

/// Closed-loop trajectory of  dy/dt + A y + A_rc y = P(A_rc y - lambda y).
Trajectory simulate_closed_loop(const SpectralModel& model, const Coefficients& coeffs,
                                const SpectralArcTape& tape, const ClosedLoopFeedback& feedback,
                                const Eigen::VectorXd& y0, double t0, double dt, int steps);

/// Constants consumed by the switching pipeline.
struct FeedbackConstants {
  double C = 1.0;       // transition-bound prefactor
  double mu = 0.0;      // fitted closed-loop decay rate
  double theta = 0.5;   // prescribed squeeze factor
  double T = 0.0;       // squeeze horizon, mu^{-1} log(C/theta) (possibly enlarged)
  double K_frak = 0.0;  // feedback magnitude bound
  double D_Y = 0.0;     // input-to-state constant
  double C_rc = 0.0;    // sup_t |A_rc(t)| as V -> H
  double lambda = 0.0;
  int M = 0;
  double r = 0.0;
  int t_enlargements = 0;  // squeeze re-verification fallbacks taken
};

struct EstimateOptions {
  double dt = 1e-3;
  int quad_panels = 1024;
  int probes = 12;          // K_frak / D_Y probe count
  int squeeze_checks = 20;  // fresh states for the theta-squeeze verification
  int norm_stride = 20;     // steps between transition-norm samples
  double kappa_safety = 1.2;
  double dy_safety = 2.0;
  int max_enlargements = 8;
  std::uint64_t seed = 1234;
};

/// Fits (C, mu) from sampled transition operators of the closed loop, derives
/// T, measures K_frak and D_Y on probe runs, and re-verifies the
/// theta-squeeze (enlarging T by 1.25 on failure).
FeedbackConstants estimate_constants(const SpectralModel& model, const Coefficients& coeffs,
                                     const ClosedLoopFeedback& feedback, double theta,
                                     const EstimateOptions& opts = {});

/// Random coefficient vector with unit V norm.
Eigen::VectorXd random_unit_v_state(const SpectralModel& model, std::mt19937_64& rng);

}  // namespace parastab
