#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "jointlab/detail/engine.hpp"
#include "jointlab/em.hpp"

namespace jointlab {

// pl_n(theta) = max over step hazards on the event times of l_n(theta, Lambda).
// Evaluations reuse the hazard of the previous call as the starting point.
// The dataset must outlive the evaluator.
class ProfileLikelihood {
 public:
  ProfileLikelihood(const Dataset& data, const FitConfig& config, double tol = 1e-10, int max_sweeps = 200);

  double operator()(const ThetaParams& theta);
  double at_vector(const VectorXd& theta_vec) { return (*this)(ThetaParams::from_vector(theta_vec, spec_)); }

  // Hazard reached by the last evaluation.
  StepCumHazard last_hazard() const { return StepCumHazard(pd_.grid, warm_); }
  int last_sweeps() const { return last_sweeps_; }
  void reset_warm_start();

 private:
  ModelSpec spec_;
  detail::PreparedData pd_;
  Integrator quad_;
  double tol_;
  int max_sweeps_;
  int threads_;
  std::vector<double> warm_;
  int last_sweeps_ = 0;
};

// Cold-started profile log-likelihood (Nelson-Aalen start).
double profile_loglik(const ThetaParams& theta, const Dataset& data, const FitConfig& config);

enum class InfoScheme {
  forward_cross,  // -[pl(+s+l) - pl(+s) - pl(+l) + pl(0)] / (n h^2)
  central_cross,  // -[pl(+,+) - pl(+,-) - pl(-,+) + pl(-,-)] / (4 n h^2)
};

std::string to_string(InfoScheme s);
InfoScheme info_scheme_from_string(const std::string& s);

struct InfoEstimate {
  InfoScheme scheme = InfoScheme::central_cross;
  std::vector<int> coords;  // theta coordinates covered, in matrix order
  MatrixXd raw;             // before symmetrisation
  MatrixXd matrix;          // symmetrised estimate of I
  double h_used = 0.0;
  double c_h = 1.0;
  double asymmetry = 0.0;   // |raw - raw'|_inf
  VectorXd se;              // sqrt(diag(matrix^{-1}) / n); empty when not PD
  bool reliable = false;
  std::vector<std::string> notes;
  int evaluations = 0;
};

using ProfileFn = std::function<double(const VectorXd&)>;

// Second-difference estimates of the information along `coords` (all when
// empty) with h = c_h / sqrt(n). Probes shared between schemes are evaluated
// once, in a fixed order. Probe failures make the estimate unreliable.
std::vector<InfoEstimate> information_estimates(const ProfileFn& pl, const VectorXd& theta_hat, int n, double c_h,
                                                const std::vector<InfoScheme>& schemes,
                                                std::vector<int> coords = {});

InfoEstimate information_estimate(const ProfileFn& pl, const VectorXd& theta_hat, int n, double c_h,
                                  InfoScheme scheme, std::vector<int> coords = {});

// Coordinates that are free under `config` (phi is excluded by fix_phi_zero).
std::vector<int> free_coordinates(const ModelSpec& spec, const FitConfig& config);

InfoEstimate information_estimate(const ThetaParams& theta_hat, const Dataset& data, const FitConfig& config,
                                  double c_h = 1.0, InfoScheme scheme = InfoScheme::central_cross);

// 2 {pl(theta_hat) - pl(theta_0)}; both profiles are cold-started.
double lr_statistic(const Dataset& data, const FitConfig& config, const ThetaParams& theta_0, const FitResult& fit);
double lr_statistic(const Dataset& data, const FitConfig& config, const ThetaParams& theta_0);

struct WaldInterval {
  std::string label;
  double estimate = 0.0;
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

double normal_quantile(double p);

// theta_j +- z_{1-alpha/2} se_j for the coordinates of `info`; throws Error
// when the estimate is flagged unreliable.
std::vector<WaldInterval> wald_intervals(const FitResult& fit, const InfoEstimate& info, double level = 0.95);

}  // namespace jointlab
