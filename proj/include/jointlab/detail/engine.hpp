#pragma once

// Shared numerical core: per-subject caches over a fixed hazard grid, the
// quadrature integrator for G(a, O; theta, Lambda), and risk-set sums.
// Public modules (likelihood, quadrature, em, profile) are thin wrappers.

#include <cstddef>
#include <vector>

#include "jointlab/model.hpp"
#include "jointlab/quadrature.hpp"

namespace jointlab::detail {

// Hazard-side covariates are constant on each segment of jump indices.
struct Segment {
  std::size_t begin = 0;  // first jump index
  std::size_t end = 0;    // one past last jump index
  VectorXd w;             // W(t) on the segment
  VectorXd wt;            // W~(t) on the segment
};

struct PreparedSubject {
  const SubjectRecord* rec = nullptr;
  int n_meas = 0;
  MatrixXd x;    // N x p, rows X(t_j)'
  MatrixXd xt;   // N x d_a, rows X~(t_j)'
  VectorXd y;
  MatrixXd xt_xt;  // Xt' Xt
  MatrixXd x_x;    // X' X
  MatrixXd x_xt;   // X' Xt
  int delta = 0;
  std::ptrdiff_t event_jump = -1;  // grid index of Z when delta = 1
  VectorXd w_z;
  VectorXd wt_z;
  std::size_t at_risk_end = 0;     // number of grid times <= Z
  std::vector<Segment> segments;   // cover [0, at_risk_end)
};

// Builds the cache of one subject against a sorted jump grid. When the subject
// has an event and no grid time matches Z, throws StructuralError if
// require_event_jump is set.
PreparedSubject prepare_subject(const SubjectRecord& subj, const std::vector<double>& grid,
                                bool require_event_jump = true);

// Theta-derived quantities reused across subjects.
struct ThetaCache {
  MatrixXd sigma_inv;
  double log_det_sigma = 0.0;
  MatrixXd prior_sqrt;
  double log_det_prior_sqrt = 0.0;
  double sigma2 = 1.0;
};
ThetaCache make_theta_cache(const ThetaParams& theta);

// The posterior as a weighted point set.
struct NodePosterior {
  double log_norm = 0.0;
  MatrixXd nodes;  // M x d_a
  VectorXd probs;  // M, sums to one
};

// log G(a, O; theta, Lambda) for each row of `a` (M x d_a). H is the prefix-sum
// vector of the hazard jumps on the subject's grid.
VectorXd log_kernel_rows(const PreparedSubject& ps, const ThetaParams& theta, const ThetaCache& tc,
                         const std::vector<double>& H, const MatrixXd& a);

// Quadrature integral of G with log-sum-exp normalisation.
NodePosterior integrate(const PreparedSubject& ps, const ThetaParams& theta, const ThetaCache& tc,
                        const std::vector<double>& H, const QuadRule& rule, Centering centering);

// Affine placement a = center + root * b used by `integrate`.
void rule_placement(const PreparedSubject& ps, const ThetaParams& theta, const ThetaCache& tc, Centering centering,
                    VectorXd& center, MatrixXd& root, double& log_det_root);

// Linear predictor (phi o W~(t))'a + W(t)'gamma for every node row.
VectorXd linear_predictor(const MatrixXd& nodes, const VectorXd& w, const VectorXd& wt, const ThetaParams& theta);
void linear_predictor_into(VectorXd& out, const MatrixXd& nodes, const VectorXd& w, const VectorXd& wt,
                           const ThetaParams& theta);

// Whole-dataset cache over the distinct event-time grid.
struct PreparedData {
  const Dataset* data = nullptr;
  std::vector<double> grid;
  std::vector<int> counts;  // tied events per grid time
  std::vector<PreparedSubject> subjects;
};
PreparedData prepare_data(const Dataset& data);

// Posteriors of all subjects, computed concurrently, stored in subject order.
std::vector<NodePosterior> e_step(const PreparedData& pd, const ThetaParams& theta, const std::vector<double>& jumps,
                                  const QuadRule& rule, Centering centering, int threads);

// Sum that does not depend on the order of `terms` (sorted, compensated).
double order_free_sum(std::vector<double> terms);

// sum_i (log_norm_i + Delta_i log Lambda{Z_i}), independent of subject order.
double loglik_from(const PreparedData& pd, const std::vector<NodePosterior>& posts, const std::vector<double>& jumps);

// Risk-set sums over the grid with the posterior masses held fixed:
// S0_k = sum_i I(Z_i >= t_k) E_i[exp(lin_i(t_k))], and (optionally) the first
// and second moments of x = dlin/d(gamma, phi) = (W, W~ o a) under the same weights.
struct RiskSums {
  VectorXd s0;    // K
  MatrixXd s1;    // K x q
  MatrixXd s2;    // K x q*q, entry (a, b) of the q x q block at column a + b*q
};
RiskSums risk_sums(const PreparedData& pd, const std::vector<NodePosterior>& posts, const ThetaParams& theta,
                   int order);

// Breslow jumps d_k / S0_k; throws FitError on an empty risk set.
std::vector<double> breslow_from(const PreparedData& pd, const VectorXd& s0);

}  // namespace jointlab::detail
