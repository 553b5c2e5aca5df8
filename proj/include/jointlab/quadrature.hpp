#pragma once

#include <functional>
#include <vector>

#include "jointlab/model.hpp"

namespace jointlab {

// Tensor-product Gauss-Hermite rule for E[f(b)], b ~ N(0, I_dim).
// Probabilists' normalisation: weights sum to one, no sqrt(pi) factors.
struct QuadRule {
  int dim = 1;
  int points = 1;   // per dimension
  MatrixXd nodes;   // points^dim x dim
  VectorXd weights; // points^dim
  // Cached per-node constants used by the integrators.
  VectorXd log_weights;
  VectorXd half_sq_norm;  // |b|^2 / 2

  Eigen::Index size() const { return weights.size(); }
};

inline constexpr int kMaxQuadDim = 4;
inline constexpr int kMaxQuadPoints = 64;

QuadRule gauss_hermite_rule(int points, int dim);

// How the rule is placed over the random-effect space.
enum class Centering {
  prior,     // a = Sigma_a^{1/2} b
  adaptive,  // a = m_a + V_a^{1/2} b, Gaussian posterior ignoring survival
};

struct GaussianPosterior {
  VectorXd mean;
  MatrixXd cov;
};

// Exact posterior of a given Y when the survival factor is ignored:
// V_a = (Sigma_a^{-1} + Xt' Xt / sigma_y^2)^{-1}, m_a = V_a Xt' (Y - X beta) / sigma_y^2.
GaussianPosterior closed_form_gaussian_posterior(const SubjectRecord& subj, const ThetaParams& theta);

struct PosteriorSummary {
  double log_norm = 0.0;     // log of the a-integral of G
  VectorXd mean;             // E[a | O]
  MatrixXd second_moment;    // E[a a' | O]
  std::vector<double> extra; // E[f(a) | O] for each requested functional
  // The discrete posterior itself: nodes in a-space and normalised masses.
  MatrixXd nodes;
  VectorXd probs;

  MatrixXd covariance() const { return second_moment - mean * mean.transpose(); }
};

using Functional = std::function<double(const VectorXd&)>;

// Moments of the density proportional to G(a, O; theta, Lambda).
PosteriorSummary posterior_moments(const SubjectRecord& subj, const ThetaParams& theta, const StepCumHazard& lam,
                                   const QuadRule& rule, Centering centering = Centering::adaptive,
                                   const std::vector<Functional>& extras = {});

// Symmetric square root of a symmetric positive semidefinite matrix.
MatrixXd symmetric_sqrt(const MatrixXd& m);

}  // namespace jointlab
