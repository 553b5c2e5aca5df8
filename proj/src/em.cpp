#include "jointlab/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "jointlab/detail/em_core.hpp"
#include "jointlab/detail/engine.hpp"

namespace jointlab {

using detail::NodePosterior;
using detail::PreparedData;

void FitConfig::validate() const {
  if (quad_points < 1 || quad_points > kMaxQuadPoints) throw ParameterError("quad_points out of range");
  if (max_iters < 1) throw ParameterError("max_iters must be positive");
  if (!(tol_loglik > 0.0) || !(tol_params > 0.0) || !(newton_tol > 0.0) || !(hazard_tol > 0.0))
    throw ParameterError("tolerances must be positive");
  if (newton_max < 1 || hazard_max_sweeps < 1) throw ParameterError("iteration caps must be positive");
}

namespace {

// Gram matrix numerically rank deficient (relative to its largest eigenvalue).
bool singular_gram(const MatrixXd& xx) {
  if (xx.rows() == 0) return false;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(xx, Eigen::EigenvaluesOnly);
  const VectorXd& ev = es.eigenvalues();
  return !(ev.minCoeff() > 1e-12 * std::max(ev.maxCoeff(), 1e-300));
}

}  // namespace

namespace detail {

std::vector<double> nelson_aalen_jumps(const PreparedData& pd) {
  std::vector<double> at_risk(pd.grid.size(), 0.0);
  for (const auto& ps : pd.subjects)
    for (std::size_t k = 0; k < ps.at_risk_end; ++k) at_risk[k] += 1.0;
  std::vector<double> jumps(pd.grid.size());
  for (std::size_t k = 0; k < jumps.size(); ++k) {
    if (!(at_risk[k] > 0.0)) throw FitError("empty risk set at event time " + std::to_string(pd.grid[k]));
    jumps[k] = pd.counts[k] / at_risk[k];
  }
  return jumps;
}

std::vector<double> breslow_step(const PreparedData& pd, const std::vector<NodePosterior>& posts,
                                 const ThetaParams& theta) {
  return breslow_from(pd, risk_sums(pd, posts, theta, 0).s0);
}

HazardSolve solve_hazard(const PreparedData& pd, const ThetaParams& theta, std::vector<double> start,
                         const Integrator& quad, double tol, int max_sweeps, int threads) {
  HazardSolve out;
  out.jumps = std::move(start);
  out.posts = e_step(pd, theta, out.jumps, quad.rule, quad.centering, threads);
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    std::vector<double> next = breslow_step(pd, out.posts, theta);
    double res = 0.0;
    for (std::size_t k = 0; k < next.size(); ++k) res = std::max(res, std::abs(next[k] - out.jumps[k]));
    out.jumps = std::move(next);
    out.posts = e_step(pd, theta, out.jumps, quad.rule, quad.centering, threads);
    out.sweeps = sweep;
    out.residual = res;
    if (res < tol) {
      out.converged = true;
      break;
    }
  }
  out.loglik = loglik_from(pd, out.posts, out.jumps);
  return out;
}

}  // namespace detail

namespace {

struct Moments {
  std::vector<VectorXd> mean;
  std::vector<MatrixXd> second;
};

Moments moments_of(const std::vector<NodePosterior>& posts) {
  Moments m;
  m.mean.reserve(posts.size());
  m.second.reserve(posts.size());
  for (const auto& p : posts) {
    m.mean.push_back(p.nodes.transpose() * p.probs);
    MatrixXd s = p.nodes.transpose() * p.probs.asDiagonal() * p.nodes;
    m.second.push_back(0.5 * (s + s.transpose()));
  }
  return m;
}

GaussianUpdate gaussian_update(const std::vector<detail::PreparedSubject>& subjects, const Moments& mom, int p,
                               int d_a, double sigma_y_floor, double eig_floor) {
  const std::size_t n = subjects.size();
  GaussianUpdate out;

  MatrixXd acc_s = MatrixXd::Zero(d_a, d_a);
  for (const auto& s : mom.second) acc_s += s;
  out.sigma_a = acc_s / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(out.sigma_a);
  VectorXd ev = eig.eigenvalues();
  if (ev.minCoeff() < eig_floor) {
    out.sigma_a_floor_hit = true;
    ev = ev.cwiseMax(eig_floor);
    out.sigma_a = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
  }
  out.sigma_a = 0.5 * (out.sigma_a + out.sigma_a.transpose());

  MatrixXd xx = MatrixXd::Zero(p, p);
  VectorXd xy = VectorXd::Zero(p);
  long total_n = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ps = subjects[i];
    xx += ps.x_x;
    xy += ps.x.transpose() * ps.y - ps.x_xt * mom.mean[i];
    total_n += ps.n_meas;
  }
  if (total_n == 0) throw FitError("no longitudinal measurements: sigma_y is not identifiable");
  if (singular_gram(xx)) throw FitError("singular fixed-effect design sum_i X_i' X_i");
  Eigen::LLT<MatrixXd> llt(xx);
  out.beta = llt.solve(xy);

  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ps = subjects[i];
    const VectorXd r = ps.y - ps.x * out.beta;
    ss += r.squaredNorm() - 2.0 * r.dot(ps.xt * mom.mean[i]) + ps.xt_xt.cwiseProduct(mom.second[i]).sum();
  }
  double sigma = std::sqrt(std::max(ss, 0.0) / static_cast<double>(total_n));
  if (!(sigma > sigma_y_floor)) {
    sigma = sigma_y_floor;
    out.sigma_y_floor_hit = true;
  }
  out.sigma_y = sigma;
  return out;
}

struct HazardNewton {
  VectorXd gamma, phi;
  std::vector<double> jumps;
  VectorXd score;
  int iters = 0;
  bool fallback = false;
};

// Profiled expected complete-data hazard log-likelihood
// F = sum_i Delta_i E_i[lin_i(Z_i)] - sum_k d_k log S0_k with posteriors fixed.
HazardNewton hazard_newton(const PreparedData& pd, const std::vector<NodePosterior>& posts, const ThetaParams& start,
                           bool fix_phi_zero, int newton_max, double newton_tol) {
  const int r = static_cast<int>(start.gamma.size());
  const int s = static_cast<int>(start.phi.size());
  const int q = r + s;
  const int active = fix_phi_zero ? r : q;

  VectorXd event_term = VectorXd::Zero(q);
  for (std::size_t i = 0; i < posts.size(); ++i) {
    const auto& ps = pd.subjects[i];
    if (ps.delta != 1) continue;
    event_term.head(r) += ps.w_z;
    event_term.tail(s) += ps.wt_z.cwiseProduct(posts[i].nodes.transpose() * posts[i].probs);
  }

  ThetaParams cur = start;
  if (fix_phi_zero) cur.phi.setZero();
  auto pack = [&](const ThetaParams& t) {
    VectorXd v(q);
    v << t.gamma, t.phi;
    return v;
  };
  auto objective = [&](const ThetaParams& t, detail::RiskSums& sums, int order) {
    sums = detail::risk_sums(pd, posts, t, order);
    double f = event_term.dot(pack(t));
    for (std::size_t k = 0; k < pd.grid.size(); ++k) {
      const double s0 = sums.s0(static_cast<Eigen::Index>(k));
      if (!(s0 > 0.0) || !std::isfinite(s0)) return -std::numeric_limits<double>::infinity();
      f -= pd.counts[k] * std::log(s0);
    }
    return f;
  };
  auto gradient = [&](const detail::RiskSums& sums, VectorXd& g, MatrixXd* hess) {
    g = event_term;
    if (hess) hess->setZero(q, q);
    for (std::size_t k = 0; k < pd.grid.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const double s0 = sums.s0(kk);
      const VectorXd s1 = sums.s1.row(kk).transpose() / s0;
      g -= pd.counts[k] * s1;
      if (hess) {
        MatrixXd s2m(q, q);
        for (int a = 0; a < q; ++a)
          for (int b = 0; b < q; ++b) s2m(a, b) = sums.s2(kk, a + b * q);
        *hess -= pd.counts[k] * (s2m / s0 - s1 * s1.transpose());
      }
    }
  };

  HazardNewton out;
  detail::RiskSums sums;
  VectorXd g;
  MatrixXd hess;
  double f = objective(cur, sums, active > 0 ? 2 : 0);
  if (!std::isfinite(f)) throw FitError("hazard M-step: non-finite objective at start");

  for (int it = 0; it < newton_max && active > 0; ++it) {
    gradient(sums, g, &hess);
    const VectorXd ga = g.head(active);
    if (ga.cwiseAbs().maxCoeff() < newton_tol) break;
    out.iters = it + 1;

    MatrixXd neg = -hess.topLeftCorner(active, active);
    VectorXd step;
    bool ok = false;
    double ridge = 0.0;
    for (int attempt = 0; attempt < 8 && !ok; ++attempt) {
      Eigen::LLT<MatrixXd> llt(neg + ridge * MatrixXd::Identity(active, active));
      if (llt.info() == Eigen::Success) {
        step = llt.solve(ga);
        ok = step.allFinite();
      }
      ridge = ridge == 0.0 ? 1e-8 * (1.0 + neg.diagonal().cwiseAbs().maxCoeff()) : ridge * 100.0;
    }
    if (!ok) {
      out.fallback = true;
      step = 0.5 * ga / std::max(1.0, ga.cwiseAbs().maxCoeff());
    }

    double scale = 1.0;
    bool accepted = false;
    ThetaParams cand = cur;
    detail::RiskSums cand_sums;
    for (int half = 0; half < 40; ++half) {
      VectorXd v = pack(cur);
      v.head(active) += scale * step;
      cand.gamma = v.head(r);
      cand.phi = v.tail(s);
      const double fc = objective(cand, cand_sums, 0);
      if (std::isfinite(fc) && fc >= f) {
        accepted = true;
        f = fc;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) break;
    cur = cand;
    f = objective(cur, sums, 2);
  }

  if (active == 0) sums = detail::risk_sums(pd, posts, cur, 1);
  gradient(sums, g, nullptr);
  out.score = g.head(active);
  out.gamma = cur.gamma;
  out.phi = cur.phi;
  out.jumps = detail::breslow_from(pd, sums.s0);
  return out;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

}  // namespace

ThetaParams init_params(const Dataset& data, double sigma_y_floor) {
  const ModelSpec& sp = data.spec;
  MatrixXd xx = MatrixXd::Zero(sp.p, sp.p);
  VectorXd xy = VectorXd::Zero(sp.p);
  std::vector<detail::PreparedSubject> subs;
  subs.reserve(data.subjects.size());
  long total_n = 0;
  for (const auto& s : data.subjects) {
    subs.push_back(detail::prepare_subject(s, {}, false));
    xx += subs.back().x_x;
    xy += subs.back().x.transpose() * subs.back().y;
    total_n += subs.back().n_meas;
  }
  if (total_n == 0) throw FitError("initialization: no longitudinal measurements; supply a starting theta");
  if (singular_gram(xx)) throw FitError("initialization: singular pooled design; supply a starting theta");
  Eigen::LLT<MatrixXd> llt(xx);
  ThetaParams t;
  t.beta = llt.solve(xy);
  double rss = 0.0;
  for (const auto& ps : subs) rss += (ps.y - ps.x * t.beta).squaredNorm();
  t.sigma_y = std::max(std::sqrt(rss / static_cast<double>(total_n)), sigma_y_floor);
  t.sigma_a = MatrixXd::Identity(sp.d_a, sp.d_a) * (t.sigma_y * t.sigma_y);
  t.gamma = VectorXd::Zero(sp.r);
  t.phi = VectorXd::Zero(sp.s);
  return t;
}

StepCumHazard nelson_aalen(const Dataset& data) {
  const PreparedData pd = detail::prepare_data(data);
  return StepCumHazard(pd.grid, detail::nelson_aalen_jumps(pd));
}

namespace {

// Jumps of `lam` on the event grid; the supports must coincide.
std::vector<double> jumps_on_grid(const PreparedData& pd, const StepCumHazard& lam) {
  if (lam.size() != pd.grid.size())
    throw StructuralError("hazard support must equal the distinct event times");
  for (std::size_t k = 0; k < pd.grid.size(); ++k)
    if (std::abs(lam.jump_times()[k] - pd.grid[k]) > kTimeTol)
      throw StructuralError("hazard support must equal the distinct event times");
  return lam.jump_sizes();
}

}  // namespace

StepCumHazard breslow_update(const Dataset& data, const ThetaParams& theta, const StepCumHazard& lam_current,
                             const Integrator& quad, int threads) {
  require_valid(data);
  theta.validate(data.spec);
  const PreparedData pd = detail::prepare_data(data);
  const auto jumps = jumps_on_grid(pd, lam_current);
  const auto posts = detail::e_step(pd, theta, jumps, quad.rule, quad.centering, threads);
  return StepCumHazard(pd.grid, detail::breslow_step(pd, posts, theta));
}

GaussianUpdate m_step_gaussian(const Dataset& data, const std::vector<PosteriorSummary>& posteriors,
                               double sigma_y_floor, double sigma_a_eig_floor) {
  if (posteriors.size() != data.subjects.size()) throw ParameterError("one posterior per subject required");
  std::vector<detail::PreparedSubject> subs;
  Moments mom;
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    subs.push_back(detail::prepare_subject(data.subjects[i], {}, false));
    mom.mean.push_back(posteriors[i].mean);
    mom.second.push_back(posteriors[i].second_moment);
  }
  return gaussian_update(subs, mom, data.spec.p, data.spec.d_a, sigma_y_floor, sigma_a_eig_floor);
}

HazardUpdate m_step_hazard(const Dataset& data, const ThetaParams& theta_current, const StepCumHazard& lam_current,
                           const Integrator& quad, const FitConfig& config) {
  require_valid(data);
  theta_current.validate(data.spec);
  const PreparedData pd = detail::prepare_data(data);
  const auto jumps = jumps_on_grid(pd, lam_current);
  const auto posts = detail::e_step(pd, theta_current, jumps, quad.rule, quad.centering, config.threads);
  HazardNewton hn =
      hazard_newton(pd, posts, theta_current, config.fix_phi_zero, config.newton_max, config.newton_tol);
  HazardUpdate out;
  out.gamma = hn.gamma;
  out.phi = hn.phi;
  out.lambda = StepCumHazard(pd.grid, hn.jumps);
  out.score = hn.score;
  out.iters = hn.iters;
  out.fallback = hn.fallback;
  return out;
}

HazardFixedPoint solve_hazard(const Dataset& data, const ThetaParams& theta, const StepCumHazard& start,
                              const Integrator& quad, double tol, int max_sweeps, int threads) {
  require_valid(data);
  theta.validate(data.spec);
  const PreparedData pd = detail::prepare_data(data);
  auto hs = detail::solve_hazard(pd, theta, jumps_on_grid(pd, start), quad, tol, max_sweeps, threads);
  if (!hs.converged)
    throw FitError("hazard fixed point did not converge in " + std::to_string(max_sweeps) +
                   " sweeps (residual " + std::to_string(hs.residual) + ")");
  return {StepCumHazard(pd.grid, hs.jumps), hs.sweeps, hs.residual, hs.loglik};
}

FitResult em_fit(const Dataset& data, const FitConfig& config, const std::optional<ThetaParams>& init) {
  config.validate();
  require_valid(data);
  const ModelSpec& sp = data.spec;
  const PreparedData pd = detail::prepare_data(data);
  const Integrator quad = config.integrator(sp.d_a);

  FitResult res;
  ThetaParams theta = init ? *init : init_params(data, config.sigma_y_floor);
  if (config.fix_phi_zero) theta.phi = VectorXd::Zero(sp.s);
  theta.validate(sp);

  auto start = detail::solve_hazard(pd, theta, detail::nelson_aalen_jumps(pd), quad, config.hazard_tol,
                                    config.hazard_max_sweeps, config.threads);
  if (!start.converged) res.diagnostics.warnings.push_back("starting hazard fixed point did not converge");
  std::vector<double> jumps = std::move(start.jumps);
  std::vector<NodePosterior> posts = std::move(start.posts);
  double ll = start.loglik;

  for (int it = 1; it <= config.max_iters; ++it) {
    const Moments mom = moments_of(posts);
    const GaussianUpdate gu =
        gaussian_update(pd.subjects, mom, sp.p, sp.d_a, config.sigma_y_floor, config.sigma_a_eig_floor);
    res.diagnostics.sigma_y_floor_hit |= gu.sigma_y_floor_hit;
    res.diagnostics.sigma_a_floor_hit |= gu.sigma_a_floor_hit;
    HazardNewton hn = hazard_newton(pd, posts, theta, config.fix_phi_zero, config.newton_max, config.newton_tol);
    if (hn.fallback) ++res.diagnostics.newton_fallbacks;

    ThetaParams next;
    next.sigma_y = gu.sigma_y;
    next.sigma_a = gu.sigma_a;
    next.beta = gu.beta;
    next.gamma = hn.gamma;
    next.phi = hn.phi;

    // Closing self-consistency step at the new theta.
    const auto mid = detail::e_step(pd, next, hn.jumps, quad.rule, quad.centering, config.threads);
    std::vector<double> next_jumps = detail::breslow_step(pd, mid, next);
    posts = detail::e_step(pd, next, next_jumps, quad.rule, quad.centering, config.threads);
    const double next_ll = detail::loglik_from(pd, posts, next_jumps);

    const double d_theta = (next.to_vector() - theta.to_vector()).cwiseAbs().maxCoeff();
    const double d_lambda = max_abs_diff(next_jumps, jumps);
    const double rel = std::abs(next_ll - ll) / std::max(1.0, std::abs(ll));
    res.diagnostics.max_loglik_decrease = std::max(res.diagnostics.max_loglik_decrease, ll - next_ll);

    theta = std::move(next);
    jumps = std::move(next_jumps);
    ll = next_ll;
    res.loglik_trace.push_back(ll);
    res.iters = it;
    if (rel < config.tol_loglik && d_theta < config.tol_params && d_lambda < config.tol_params) {
      res.converged = true;
      break;
    }
  }

  auto polish =
      detail::solve_hazard(pd, theta, jumps, quad, config.hazard_tol, config.hazard_max_sweeps, config.threads);
  if (!polish.converged) res.diagnostics.warnings.push_back("final hazard polish did not converge");
  res.diagnostics.polish_sweeps = polish.sweeps;
  res.diagnostics.self_consistency = max_abs_diff(detail::breslow_step(pd, polish.posts, theta), polish.jumps);
  res.loglik = polish.loglik;
  res.theta_hat = theta;
  res.lambda_hat = StepCumHazard(pd.grid, polish.jumps);
  if (res.diagnostics.sigma_y_floor_hit) res.diagnostics.warnings.push_back("sigma_y reached its floor");
  if (res.diagnostics.sigma_a_floor_hit) res.diagnostics.warnings.push_back("Sigma_a eigenvalue reached its floor");
  if (theta.to_vector().norm() > config.theta_norm_warning)
    res.diagnostics.warnings.push_back("|theta| exceeds the configured bound");
  return res;
}

}  // namespace jointlab
