#include "jointlab/quadrature.hpp"

#include <cmath>

#include "jointlab/detail/engine.hpp"

namespace jointlab {

namespace {

// Orthonormal probabilists' Hermite polynomials p_0..p_m at x:
// p_{k+1} = (x p_k - sqrt(k) p_{k-1}) / sqrt(k+1).
void hermite_orthonormal(int m, double x, double& pm, double& pm1, double& sum_sq_below) {
  double prev = 0.0, cur = 1.0;
  sum_sq_below = 0.0;
  for (int k = 0; k < m; ++k) {
    sum_sq_below += cur * cur;
    const double next = (x * cur - std::sqrt(static_cast<double>(k)) * prev) / std::sqrt(k + 1.0);
    prev = cur;
    cur = next;
  }
  pm = cur;
  pm1 = prev;
}

// One-dimensional rule: Golub-Welsch start, Newton polish, Christoffel weights.
void hermite_1d(int m, VectorXd& x, VectorXd& w) {
  x.resize(m);
  w.resize(m);
  if (m == 1) {
    x(0) = 0.0;
    w(0) = 1.0;
    return;
  }
  MatrixXd jacobi = MatrixXd::Zero(m, m);
  for (int k = 1; k < m; ++k) jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(jacobi, Eigen::EigenvaluesOnly);
  x = eig.eigenvalues();
  for (int j = 0; j < m; ++j) {
    double xi = x(j);
    for (int it = 0; it < 8; ++it) {
      double pm = 0, pm1 = 0, ss = 0;
      hermite_orthonormal(m, xi, pm, pm1, ss);
      const double dp = std::sqrt(static_cast<double>(m)) * pm1;
      const double step = pm / dp;
      xi -= step;
      if (std::abs(step) < 1e-16 * (1.0 + std::abs(xi))) break;
    }
    x(j) = xi;
  }
  // Exact symmetry about zero.
  for (int j = 0; j < m / 2; ++j) {
    const double v = 0.5 * (x(m - 1 - j) - x(j));
    x(j) = -v;
    x(m - 1 - j) = v;
  }
  if (m % 2 == 1) x(m / 2) = 0.0;
  for (int j = 0; j < m; ++j) {
    double pm = 0, pm1 = 0, ss = 0;
    hermite_orthonormal(m, x(j), pm, pm1, ss);
    w(j) = 1.0 / ss;
  }
  for (int j = 0; j < m / 2; ++j) w(j) = w(m - 1 - j) = 0.5 * (w(j) + w(m - 1 - j));
  w /= w.sum();
}

}  // namespace

QuadRule gauss_hermite_rule(int points, int dim) {
  if (dim < 1 || dim > kMaxQuadDim)
    throw DomainError("gauss_hermite_rule: unsupported dimension " + std::to_string(dim) + " (1.." +
                      std::to_string(kMaxQuadDim) + ")");
  if (points < 1 || points > kMaxQuadPoints)
    throw DomainError("gauss_hermite_rule: points per dimension must be in 1.." + std::to_string(kMaxQuadPoints));
  VectorXd x1, w1;
  hermite_1d(points, x1, w1);

  QuadRule rule;
  rule.dim = dim;
  rule.points = points;
  Eigen::Index total = 1;
  for (int d = 0; d < dim; ++d) total *= points;
  rule.nodes.resize(total, dim);
  rule.weights.resize(total);
  for (Eigen::Index row = 0; row < total; ++row) {
    Eigen::Index rem = row;
    double w = 1.0;
    for (int d = dim - 1; d >= 0; --d) {
      const Eigen::Index idx = rem % points;
      rem /= points;
      rule.nodes(row, d) = x1(idx);
      w *= w1(idx);
    }
    rule.weights(row) = w;
  }
  rule.log_weights = rule.weights.array().log().matrix();
  rule.half_sq_norm = 0.5 * rule.nodes.rowwise().squaredNorm();
  return rule;
}

MatrixXd symmetric_sqrt(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m);
  const VectorXd ev = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * ev.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
}

GaussianPosterior closed_form_gaussian_posterior(const SubjectRecord& subj, const ThetaParams& theta) {
  const detail::ThetaCache tc = detail::make_theta_cache(theta);
  const detail::PreparedSubject ps = detail::prepare_subject(subj, {}, false);
  const MatrixXd prec = tc.sigma_inv + ps.xt_xt / tc.sigma2;
  GaussianPosterior out;
  out.cov = prec.ldlt().solve(MatrixXd::Identity(prec.rows(), prec.cols()));
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  out.mean = out.cov * (ps.xt.transpose() * (ps.y - ps.x * theta.beta)) / tc.sigma2;
  return out;
}

PosteriorSummary posterior_moments(const SubjectRecord& subj, const ThetaParams& theta, const StepCumHazard& lam,
                                   const QuadRule& rule, Centering centering, const std::vector<Functional>& extras) {
  if (rule.dim != theta.sigma_a.rows()) throw ParameterError("quadrature dimension does not match d_a");
  const detail::ThetaCache tc = detail::make_theta_cache(theta);
  const detail::PreparedSubject ps = detail::prepare_subject(subj, lam.jump_times(), false);
  const detail::NodePosterior np = detail::integrate(ps, theta, tc, lam.prefix_sums(), rule, centering);

  PosteriorSummary out;
  out.log_norm = np.log_norm;
  out.mean = np.nodes.transpose() * np.probs;
  out.second_moment = np.nodes.transpose() * np.probs.asDiagonal() * np.nodes;
  out.second_moment = 0.5 * (out.second_moment + out.second_moment.transpose());
  for (const auto& f : extras) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < np.nodes.rows(); ++j) acc += np.probs(j) * f(np.nodes.row(j).transpose());
    out.extra.push_back(acc);
  }
  out.nodes = np.nodes;
  out.probs = np.probs;
  return out;
}

}  // namespace jointlab
