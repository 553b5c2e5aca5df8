#include "jointlab/detail/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "jointlab/parallel.hpp"

namespace jointlab::detail {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double log_sum_exp(const VectorXd& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace

PreparedSubject prepare_subject(const SubjectRecord& subj, const std::vector<double>& grid, bool require_event_jump) {
  PreparedSubject ps;
  ps.rec = &subj;
  ps.n_meas = subj.n_meas();
  const int N = ps.n_meas;
  ps.x.resize(N, subj.x_path.dim());
  ps.xt.resize(N, subj.xt_path.dim());
  for (int j = 0; j < N; ++j) {
    const double t = subj.meas_times[static_cast<std::size_t>(j)];
    ps.x.row(j) = subj.x_path.value_at(t).transpose();
    ps.xt.row(j) = subj.xt_path.value_at(t).transpose();
  }
  ps.y = subj.y;
  ps.xt_xt = ps.xt.transpose() * ps.xt;
  ps.x_x = ps.x.transpose() * ps.x;
  ps.x_xt = ps.x.transpose() * ps.xt;
  ps.delta = subj.delta;
  ps.w_z = subj.w_path.value_at(subj.z);
  ps.wt_z = subj.wt_path.value_at(subj.z);

  // Closed comparison: a jump at Z itself belongs to the integral.
  ps.at_risk_end = static_cast<std::size_t>(
      std::upper_bound(grid.begin(), grid.end(), subj.z + kTimeTol) - grid.begin());
  if (subj.delta == 1) {
    auto it = std::lower_bound(grid.begin(), grid.end(), subj.z - kTimeTol);
    if (it != grid.end() && std::abs(*it - subj.z) <= kTimeTol) {
      ps.event_jump = it - grid.begin();
    } else if (require_event_jump) {
      throw StructuralError(subject_tag(subj.id) + "event time not in hazard support");
    }
  }

  std::size_t prev_w = 0, prev_wt = 0;
  for (std::size_t k = 0; k < ps.at_risk_end; ++k) {
    const std::size_t sw = subj.w_path.segment_at(grid[k]);
    const std::size_t swt = subj.wt_path.segment_at(grid[k]);
    if (ps.segments.empty() || sw != prev_w || swt != prev_wt) {
      Segment seg;
      seg.begin = k;
      seg.w = subj.w_path.values().row(static_cast<Eigen::Index>(sw)).transpose();
      seg.wt = subj.wt_path.values().row(static_cast<Eigen::Index>(swt)).transpose();
      ps.segments.push_back(std::move(seg));
      prev_w = sw;
      prev_wt = swt;
    }
    ps.segments.back().end = k + 1;
  }
  return ps;
}

ThetaCache make_theta_cache(const ThetaParams& theta) {
  ThetaCache tc;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(theta.sigma_a);
  const VectorXd ev = eig.eigenvalues();
  if (!(ev.minCoeff() > 0.0)) throw ParameterError("sigma_a is not positive definite");
  if (!(theta.sigma_y > 0.0)) throw ParameterError("sigma_y must be positive");
  const MatrixXd& U = eig.eigenvectors();
  tc.sigma_inv = U * ev.cwiseInverse().asDiagonal() * U.transpose();
  tc.log_det_sigma = ev.array().log().sum();
  tc.prior_sqrt = U * ev.cwiseSqrt().asDiagonal() * U.transpose();
  tc.log_det_prior_sqrt = 0.5 * tc.log_det_sigma;
  tc.sigma2 = theta.sigma_y * theta.sigma_y;
  return tc;
}

VectorXd linear_predictor(const MatrixXd& nodes, const VectorXd& w, const VectorXd& wt, const ThetaParams& theta) {
  VectorXd out(nodes.rows());
  linear_predictor_into(out, nodes, w, wt, theta);
  return out;
}

void linear_predictor_into(VectorXd& out, const MatrixXd& nodes, const VectorXd& w, const VectorXd& wt,
                           const ThetaParams& theta) {
  const double c = w.size() ? w.dot(theta.gamma) : 0.0;
  out.setConstant(nodes.rows(), c);
  for (Eigen::Index k = 0; k < wt.size(); ++k) out += (theta.phi(k) * wt(k)) * nodes.col(k);
}

VectorXd log_kernel_rows(const PreparedSubject& ps, const ThetaParams& theta, const ThetaCache& tc,
                         const std::vector<double>& H, const MatrixXd& a) {
  const int d = static_cast<int>(a.cols());
  const VectorXd r = ps.y - ps.x * theta.beta;
  const double rr = r.squaredNorm();
  const VectorXd xtr = ps.xt.transpose() * r;

  const double constant =
      -0.5 * ps.n_meas * (kLog2Pi + std::log(tc.sigma2)) - 0.5 * d * kLog2Pi - 0.5 * tc.log_det_sigma;
  VectorXd out(a.rows());
  const VectorXd quad_y = (rr - 2.0 * (a * xtr).array() + ((a * ps.xt_xt).array() * a.array()).rowwise().sum()).matrix();
  const VectorXd quad_p = ((a * tc.sigma_inv).array() * a.array()).rowwise().sum().matrix();
  out = (constant - quad_y.array() / (2.0 * tc.sigma2) - 0.5 * quad_p.array()).matrix();
  if (ps.delta == 1) out += linear_predictor(a, ps.w_z, ps.wt_z, theta);
  VectorXd lp(a.rows());
  for (const auto& seg : ps.segments) {
    const double dh = H[seg.end] - H[seg.begin];
    if (dh == 0.0) continue;
    linear_predictor_into(lp, a, seg.w, seg.wt, theta);
    out.array() -= lp.array().exp() * dh;
  }
  return out;
}

void rule_placement(const PreparedSubject& ps, const ThetaParams& theta, const ThetaCache& tc, Centering centering,
                    VectorXd& center, MatrixXd& root, double& log_det_root) {
  const int d = static_cast<int>(theta.sigma_a.rows());
  if (centering == Centering::prior) {
    center = VectorXd::Zero(d);
    root = tc.prior_sqrt;
    log_det_root = tc.log_det_prior_sqrt;
    return;
  }
  const MatrixXd prec = tc.sigma_inv + ps.xt_xt / tc.sigma2;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(prec);
  const VectorXd ev = eig.eigenvalues();
  const MatrixXd& U = eig.eigenvectors();
  const MatrixXd cov = U * ev.cwiseInverse().asDiagonal() * U.transpose();
  const VectorXd r = ps.y - ps.x * theta.beta;
  center = cov * (ps.xt.transpose() * r) / tc.sigma2;
  root = U * ev.cwiseSqrt().cwiseInverse().asDiagonal() * U.transpose();
  log_det_root = -0.5 * ev.array().log().sum();
}

NodePosterior integrate(const PreparedSubject& ps, const ThetaParams& theta, const ThetaCache& tc,
                        const std::vector<double>& H, const QuadRule& rule, Centering centering) {
  VectorXd center;
  MatrixXd root;
  double log_det_root = 0.0;
  rule_placement(ps, theta, tc, centering, center, root, log_det_root);

  NodePosterior out;
  out.nodes = rule.nodes * root;  // root is symmetric
  out.nodes.rowwise() += center.transpose();
  const VectorXd log_g = log_kernel_rows(ps, theta, tc, H, out.nodes);
  const double shift = log_det_root + 0.5 * rule.dim * kLog2Pi;
  const VectorXd log_terms = (rule.log_weights + log_g + rule.half_sq_norm).array() + shift;
  const double lse = log_sum_exp(log_terms);
  if (!std::isfinite(lse))
    throw NumericError(subject_tag(ps.rec->id) + "quadrature weights underflowed or overflowed");
  out.log_norm = lse;
  out.probs = (log_terms.array() - lse).exp().matrix();
  return out;
}

PreparedData prepare_data(const Dataset& data) {
  PreparedData pd;
  pd.data = &data;
  const EventTimes ev = distinct_event_times(data);
  pd.grid = ev.times;
  pd.counts = ev.counts;
  pd.subjects.reserve(data.subjects.size());
  for (const auto& s : data.subjects) pd.subjects.push_back(prepare_subject(s, pd.grid));
  return pd;
}

std::vector<NodePosterior> e_step(const PreparedData& pd, const ThetaParams& theta, const std::vector<double>& jumps,
                                  const QuadRule& rule, Centering centering, int threads) {
  const ThetaCache tc = make_theta_cache(theta);
  std::vector<double> H(jumps.size() + 1, 0.0);
  for (std::size_t k = 0; k < jumps.size(); ++k) H[k + 1] = H[k] + jumps[k];
  std::vector<NodePosterior> out(pd.subjects.size());
  parallel_for(pd.subjects.size(), threads,
               [&](std::size_t i) { out[i] = integrate(pd.subjects[i], theta, tc, H, rule, centering); });
  return out;
}

double loglik_from(const PreparedData& pd, const std::vector<NodePosterior>& posts, const std::vector<double>& jumps) {
  std::vector<double> terms(posts.size());
  for (std::size_t i = 0; i < posts.size(); ++i) {
    terms[i] = posts[i].log_norm;
    const auto& ps = pd.subjects[i];
    if (ps.delta == 1) terms[i] += std::log(jumps[static_cast<std::size_t>(ps.event_jump)]);
  }
  return order_free_sum(std::move(terms));
}

double order_free_sum(std::vector<double> terms) {
  std::sort(terms.begin(), terms.end());
  double sum = 0.0, comp = 0.0;
  for (double t : terms) {
    const double next = sum + t;
    comp += std::abs(sum) >= std::abs(t) ? (sum - next) + t : (t - next) + sum;
    sum = next;
  }
  return sum + comp;
}

RiskSums risk_sums(const PreparedData& pd, const std::vector<NodePosterior>& posts, const ThetaParams& theta,
                   int order) {
  const std::size_t K = pd.grid.size();
  const int r = static_cast<int>(theta.gamma.size());
  const int s = static_cast<int>(theta.phi.size());
  const int q = r + s;
  // Difference arrays over the grid, accumulated once per segment.
  VectorXd d0 = VectorXd::Zero(static_cast<Eigen::Index>(K + 1));
  MatrixXd d1, d2;
  if (order >= 1) d1 = MatrixXd::Zero(static_cast<Eigen::Index>(K + 1), q);
  if (order >= 2) d2 = MatrixXd::Zero(static_cast<Eigen::Index>(K + 1), q * q);

  VectorXd x1(q), pe, ea(s);
  MatrixXd x2(q, q), eaa(s, s);
  for (std::size_t i = 0; i < posts.size(); ++i) {
    const auto& ps = pd.subjects[i];
    const auto& post = posts[i];
    const MatrixXd& nodes = post.nodes;
    for (const auto& seg : ps.segments) {
      linear_predictor_into(pe, nodes, seg.w, seg.wt, theta);
      pe = post.probs.cwiseProduct(pe.array().exp().matrix());
      const double s0 = pe.sum();
      const auto b = static_cast<Eigen::Index>(seg.begin);
      const auto e = static_cast<Eigen::Index>(seg.end);
      d0(b) += s0;
      d0(e) -= s0;
      if (order < 1) continue;
      for (int u = 0; u < s; ++u) ea(u) = nodes.col(u).dot(pe);  // sum pe_j a_j
      x1.head(r) = s0 * seg.w;
      x1.tail(s) = seg.wt.cwiseProduct(ea);
      d1.row(b) += x1.transpose();
      d1.row(e) -= x1.transpose();
      if (order < 2) continue;
      for (int u = 0; u < s; ++u)
        for (int v = 0; v <= u; ++v)
          eaa(u, v) = eaa(v, u) = (nodes.col(u).array() * nodes.col(v).array() * pe.array()).sum();
      x2.topLeftCorner(r, r) = s0 * seg.w * seg.w.transpose();
      x2.topRightCorner(r, s) = seg.w * x1.tail(s).transpose();
      x2.bottomLeftCorner(s, r) = x2.topRightCorner(r, s).transpose();
      x2.bottomRightCorner(s, s) = seg.wt.asDiagonal() * eaa * seg.wt.asDiagonal();
      const Eigen::Map<const Eigen::RowVectorXd> flat(x2.data(), q * q);
      d2.row(b) += flat;
      d2.row(e) -= flat;
    }
  }
  RiskSums out;
  out.s0.resize(static_cast<Eigen::Index>(K));
  double acc = 0.0;
  for (std::size_t k = 0; k < K; ++k) out.s0(static_cast<Eigen::Index>(k)) = (acc += d0(static_cast<Eigen::Index>(k)));
  if (order >= 1) {
    out.s1.resize(static_cast<Eigen::Index>(K), q);
    Eigen::RowVectorXd run = Eigen::RowVectorXd::Zero(q);
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(K); ++k) out.s1.row(k) = (run += d1.row(k));
  }
  if (order >= 2) {
    out.s2.resize(static_cast<Eigen::Index>(K), q * q);
    Eigen::RowVectorXd run = Eigen::RowVectorXd::Zero(q * q);
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(K); ++k) out.s2.row(k) = (run += d2.row(k));
  }
  return out;
}

std::vector<double> breslow_from(const PreparedData& pd, const VectorXd& s0) {
  std::vector<double> jumps(pd.grid.size());
  for (std::size_t k = 0; k < jumps.size(); ++k) {
    const double den = s0(static_cast<Eigen::Index>(k));
    if (!(den > 0.0) || !std::isfinite(den))
      throw FitError("empty or degenerate risk set at event time " + std::to_string(pd.grid[k]));
    jumps[k] = pd.counts[k] / den;
  }
  return jumps;
}

}  // namespace jointlab::detail
