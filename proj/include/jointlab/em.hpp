#pragma once

#include <optional>
#include <string>
#include <vector>

#include "jointlab/likelihood.hpp"
#include "jointlab/model.hpp"
#include "jointlab/quadrature.hpp"

namespace jointlab {

struct FitConfig {
  int quad_points = 20;
  bool adaptive = true;
  int max_iters = 500;
  double tol_loglik = 1e-8;   // relative change of the log-likelihood
  double tol_params = 1e-6;   // max-norm change of theta and of the hazard jumps
  int newton_max = 25;
  double newton_tol = 1e-10;
  bool fix_phi_zero = false;
  int threads = 1;
  // Hazard fixed point used for the starting hazard and the final polish.
  double hazard_tol = 1e-10;
  int hazard_max_sweeps = 2000;
  double sigma_y_floor = 1e-6;
  double sigma_a_eig_floor = 1e-10;
  double theta_norm_warning = 1e3;

  void validate() const;
  Integrator integrator(int d_a) const { return Integrator::make(quad_points, d_a, adaptive); }
};

struct FitDiagnostics {
  int newton_fallbacks = 0;
  bool sigma_y_floor_hit = false;
  bool sigma_a_floor_hit = false;
  double max_loglik_decrease = 0.0;   // largest drop between consecutive trace entries
  double self_consistency = 0.0;      // max |breslow_update(theta, Lambda) - Lambda| at the result
  int polish_sweeps = 0;
  std::vector<std::string> warnings;
};

struct FitResult {
  ThetaParams theta_hat;
  StepCumHazard lambda_hat;
  std::vector<double> loglik_trace;  // one entry per EM sweep, after the sweep
  double loglik = 0.0;               // at (theta_hat, lambda_hat)
  bool converged = false;
  int iters = 0;
  FitDiagnostics diagnostics;
};

// Pooled least-squares start: beta and sigma_y from all measurements,
// Sigma_a = sigma_y^2 I, gamma = phi = 0.
ThetaParams init_params(const Dataset& data, double sigma_y_floor = 1e-6);

// One self-consistency step for the hazard at fixed theta:
// jump at t = d_t / sum_i I(Z_i >= t) Q(t, O_i; theta, Lambda_current).
StepCumHazard breslow_update(const Dataset& data, const ThetaParams& theta, const StepCumHazard& lam_current,
                             const Integrator& quad, int threads = 1);

// Nelson-Aalen estimate on the distinct event times.
StepCumHazard nelson_aalen(const Dataset& data);

struct GaussianUpdate {
  VectorXd beta;
  double sigma_y = 1.0;
  MatrixXd sigma_a;
  bool sigma_y_floor_hit = false;
  bool sigma_a_floor_hit = false;
};

// Closed-form maximisers of the expected complete-data Gaussian log-likelihood.
GaussianUpdate m_step_gaussian(const Dataset& data, const std::vector<PosteriorSummary>& posteriors,
                               double sigma_y_floor = 1e-6, double sigma_a_eig_floor = 1e-10);

struct HazardUpdate {
  VectorXd gamma;
  VectorXd phi;
  StepCumHazard lambda;  // Breslow jumps at the returned (gamma, phi)
  VectorXd score;        // profiled score at the returned point (active coordinates)
  int iters = 0;
  bool fallback = false;
};

// Newton ascent on the Breslow-profiled expected complete-data hazard
// log-likelihood, with posteriors computed at (theta_current, lam_current).
HazardUpdate m_step_hazard(const Dataset& data, const ThetaParams& theta_current, const StepCumHazard& lam_current,
                           const Integrator& quad, const FitConfig& config);

FitResult em_fit(const Dataset& data, const FitConfig& config, const std::optional<ThetaParams>& init = std::nullopt);

// Iterates breslow_update at fixed theta until the largest jump change is
// below tol. Throws FitError (with the final residual) after max_sweeps.
struct HazardFixedPoint {
  StepCumHazard lambda;
  int sweeps = 0;
  double residual = 0.0;
  double loglik = 0.0;
};
HazardFixedPoint solve_hazard(const Dataset& data, const ThetaParams& theta, const StepCumHazard& start,
                              const Integrator& quad, double tol, int max_sweeps, int threads = 1);

}  // namespace jointlab
