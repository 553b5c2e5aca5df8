#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "jointlab/em.hpp"
#include "jointlab/model.hpp"
#include "jointlab/profile.hpp"

namespace jointlab {

// Baseline hazard lambda_0 on [0, tau].
struct Baseline {
  enum class Kind { constant, weibull };
  Kind kind = Kind::constant;
  double rate = 0.5;   // constant
  double shape = 1.0;  // weibull: lambda_0(t) = (k / s) (t / s)^(k - 1)
  double scale = 1.0;

  static Baseline constant(double c) { return {Kind::constant, c, 1.0, 1.0}; }
  static Baseline weibull(double shape, double scale) { return {Kind::weibull, 0.0, shape, scale}; }

  double hazard(double t) const;
  double cumulative(double t) const;
  double cumulative_inverse(double v) const;
  void validate() const;
};

// One generated covariate column. Time-constant columns are drawn once per
// subject; a `time` column is the step function equal to the latest
// schedule time at or before t.
struct CovariateColumn {
  enum class Kind { constant, bernoulli, normal, uniform, time };
  Kind kind = Kind::constant;
  double a = 1.0;  // constant value | bernoulli p | normal mean | uniform low
  double b = 0.0;  // normal sd | uniform high
};

std::string to_string(CovariateColumn::Kind k);
CovariateColumn::Kind covariate_kind_from_string(const std::string& s);

// Columns plus the column indices used for X, X~, W and W~.
struct CovariateRecipe {
  std::vector<CovariateColumn> columns;
  std::vector<int> x, xt, w, wt;
};

struct SimScenario {
  ModelSpec spec;
  ThetaParams theta_0;
  Baseline baseline;
  CovariateRecipe covariates;
  std::vector<double> schedule;
  // C ~ uniform(0, censor_max), capped at tau. Empty: no censoring before tau.
  std::optional<double> censor_max;
  std::uint64_t seed = 0;

  // Throws ParameterError naming the first broken rule.
  void validate() const;
};

// d_a = 1, X = (1, trt), X~ = 1, W = trt, W~ = 1, trt ~ Bernoulli(0.5),
// sigma_y = 0.5, Sigma_a = 1, beta = (1, -0.5), gamma = 0.5, phi = 0.7,
// lambda_0 = 0.5, tau = 3, visits every 0.5 from 0 to 2.5, C ~ U(0, 6).
SimScenario default_scenario();

// Integral of lambda_0(t) exp{(phi o W~(t))'a + W(t)'gamma} over [0, t].
double subject_cumulative_hazard(double t, const VectorXd& a, const CovariatePath& w_path,
                                 const CovariatePath& wt_path, const ThetaParams& theta, const Baseline& baseline);

// Event time with cumulative hazard -log u, solved segment by segment.
// Returns +infinity when the hazard accumulated on [0, tau] stays below -log u.
double invert_hazard(const VectorXd& a, const CovariatePath& w_path, const CovariatePath& wt_path,
                     const ThetaParams& theta, const Baseline& baseline, double tau, double u);

struct SubjectTruth {
  VectorXd a;
  double t = std::numeric_limits<double>::infinity();
  double c = 0.0;
};

struct SimulatedData {
  Dataset data;
  std::vector<SubjectTruth> truth;
};

// Subject i uses its own stream derived from (seed, i), so the result does
// not depend on `threads`.
SimulatedData simulate(const SimScenario& scenario, int n, int threads = 1);

// Counter-mixed derivation of stream seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// sup over [0, tau] of |lam(t) - Lambda_0(t)|, checked at both one-sided
// limits of every jump and at tau.
double sup_distance(const StepCumHazard& lam, const Baseline& baseline, double tau);

enum class StudyKind { consistency, coverage, lr };
std::string to_string(StudyKind k);
StudyKind study_kind_from_string(const std::string& s);

struct StudyOptions {
  StudyKind kind = StudyKind::consistency;
  int n = 100;
  int replicates = 100;
  FitConfig fit;
  std::vector<InfoScheme> schemes{InfoScheme::forward_cross, InfoScheme::central_cross};
  double c_h = 1.0;
  double level = 0.95;
  bool same_seed = false;  // every replicate uses the stream of replicate 0
  int threads = 1;         // replicates run concurrently; each fit is single-threaded
};

struct SchemeStats {
  std::string scheme;
  double mean_se = 0.0;   // over replicates with a reliable estimate
  double coverage = 0.0;
  int used = 0;
};

struct CoordinateSummary {
  std::string label;
  double truth = 0.0;
  double mean = 0.0;
  double bias = 0.0;
  double rmse = 0.0;
  double emp_se = 0.0;
  std::vector<SchemeStats> schemes;  // coverage study only
};

struct Quantiles {
  double mean = 0.0;
  double variance = 0.0;
  double median = 0.0;
  double q90 = 0.0;
  double q95 = 0.0;
  double max = 0.0;
};

struct ReplicateRecord {
  std::uint64_t seed = 0;
  bool converged = false;
  int iters = 0;
  std::string error;
  VectorXd theta_hat;
  double sup_lambda = 0.0;
  double lr = 0.0;
  double max_loglik_decrease = 0.0;
  double self_consistency = 0.0;
  std::vector<VectorXd> se;        // per scheme, empty when unreliable
};

struct StudySummary {
  StudyKind kind = StudyKind::consistency;
  int n = 0;
  int replicates = 0;
  int converged = 0;
  int non_converged = 0;
  bool valid = true;
  std::vector<std::string> schemes;
  std::vector<int> unreliable;  // per scheme
  std::vector<CoordinateSummary> coords;
  Quantiles sup_lambda;
  Quantiles lr;  // lr study only
  int lr_df = 0;
  std::vector<ReplicateRecord> records;
};

StudySummary replicate_study(const SimScenario& scenario, const StudyOptions& options);

// Type-7 sample quantile of already sorted values.
double sample_quantile(const std::vector<double>& sorted, double p);

double chi_squared_quantile(double p, double df);

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;
  std::string detail;
};

// RMSE(large)/RMSE(small) < 0.7 per coordinate; median sup distance ratio < 0.75.
std::vector<CheckResult> consistency_checks(const StudySummary& small, const StudySummary& large);
// Coverage in [0.90, 0.99] and mean SE within 20% of the empirical SE, per scheme and coordinate.
std::vector<CheckResult> coverage_checks(const StudySummary& s);
// Mean in [0.75 d, 1.25 d]; 95th percentile within 15% of the chi-square quantile.
std::vector<CheckResult> lr_checks(const StudySummary& s);

}  // namespace jointlab
