#include "jointlab/likelihood.hpp"

#include <cmath>

#include "jointlab/detail/engine.hpp"
#include "jointlab/parallel.hpp"

namespace jointlab {

namespace {

void check_dims(const SubjectRecord& subj, const ThetaParams& theta) {
  if (subj.x_path.dim() != theta.beta.size() || subj.xt_path.dim() != theta.sigma_a.rows() ||
      subj.w_path.dim() != theta.gamma.size() || subj.wt_path.dim() != theta.phi.size())
    throw ParameterError(subject_tag(subj.id) + "covariate dimensions do not match theta");
  if (theta.phi.size() != theta.sigma_a.rows()) throw ParameterError("phi length must equal d_a");
}

double event_log_jump(const SubjectRecord& subj, const StepCumHazard& lam) {
  if (subj.delta != 1) return 0.0;
  const auto k = lam.find_jump(subj.z);
  if (k < 0) throw StructuralError(subject_tag(subj.id) + "event time not in hazard support");
  return std::log(lam.jump_sizes()[static_cast<std::size_t>(k)]);
}

struct SubjectPosterior {
  detail::PreparedSubject ps;
  detail::NodePosterior post;
};

SubjectPosterior subject_posterior(const SubjectRecord& subj, const ThetaParams& theta, const StepCumHazard& lam,
                                   const Integrator& quad) {
  check_dims(subj, theta);
  if (quad.rule.dim != theta.sigma_a.rows()) throw ParameterError("quadrature dimension does not match d_a");
  SubjectPosterior out{detail::prepare_subject(subj, lam.jump_times(), true), {}};
  const detail::ThetaCache tc = detail::make_theta_cache(theta);
  out.post = detail::integrate(out.ps, theta, tc, lam.prefix_sums(), quad.rule, quad.centering);
  return out;
}

}  // namespace

double log_complete_data_kernel(const VectorXd& a, const SubjectRecord& subj, const ThetaParams& theta,
                                const StepCumHazard& lam) {
  check_dims(subj, theta);
  if (a.size() != theta.sigma_a.rows()) throw ParameterError("random effect has wrong dimension");
  const detail::ThetaCache tc = detail::make_theta_cache(theta);
  const detail::PreparedSubject ps = detail::prepare_subject(subj, lam.jump_times(), false);
  return detail::log_kernel_rows(ps, theta, tc, lam.prefix_sums(), a.transpose())(0);
}

double complete_data_kernel(const VectorXd& a, const SubjectRecord& subj, const ThetaParams& theta,
                            const StepCumHazard& lam) {
  return std::exp(log_complete_data_kernel(a, subj, theta, lam));
}

double subject_loglik(const SubjectRecord& subj, const ThetaParams& theta, const StepCumHazard& lam,
                      const Integrator& quad) {
  const double log_jump = event_log_jump(subj, lam);
  return subject_posterior(subj, theta, lam, quad).post.log_norm + log_jump;
}

double total_loglik(const Dataset& data, const ThetaParams& theta, const StepCumHazard& lam, const Integrator& quad,
                    int threads) {
  std::vector<double> terms(data.subjects.size());
  parallel_for(data.subjects.size(), threads, [&](std::size_t i) {
    try {
      terms[i] = subject_loglik(data.subjects[i], theta, lam, quad);
    } catch (const Error& e) {
      const std::string msg = e.what();
      const std::string tag = subject_tag(data.subjects[i].id);
      if (msg.rfind(tag, 0) == 0) throw;
      throw Error(tag + msg);
    }
  });
  return detail::order_free_sum(std::move(terms));
}

double q_weight(double z, const SubjectRecord& subj, const ThetaParams& theta, const StepCumHazard& lam,
                const Integrator& quad, double tau) {
  const VectorXd w = eval_path(subj.w_path, z, tau);
  const VectorXd wt = eval_path(subj.wt_path, z, tau);
  check_dims(subj, theta);
  detail::PreparedSubject ps = detail::prepare_subject(subj, lam.jump_times(), false);
  const detail::ThetaCache tc = detail::make_theta_cache(theta);
  const detail::NodePosterior post = detail::integrate(ps, theta, tc, lam.prefix_sums(), quad.rule, quad.centering);
  const VectorXd lin = detail::linear_predictor(post.nodes, w, wt, theta);
  // log-sum-exp of log p_j + lin_j
  const VectorXd terms = (post.probs.array().log() + lin.array()).matrix();
  const double mx = terms.maxCoeff();
  const double q = std::exp(mx) * (terms.array() - mx).exp().sum();
  if (!(q > 0.0) || !std::isfinite(q)) throw NumericError(subject_tag(subj.id) + "Q weight underflow");
  return q;
}

VectorXd score_theta(const SubjectRecord& subj, const ThetaParams& theta, const StepCumHazard& lam,
                     const Integrator& quad) {
  event_log_jump(subj, lam);
  const SubjectPosterior sp = subject_posterior(subj, theta, lam, quad);
  const auto& ps = sp.ps;
  const auto& post = sp.post;
  const int d = static_cast<int>(theta.sigma_a.rows());
  const int p = static_cast<int>(theta.beta.size());
  const int r = static_cast<int>(theta.gamma.size());
  const int s = static_cast<int>(theta.phi.size());
  const double s2 = theta.sigma_y * theta.sigma_y;

  const VectorXd ea = post.nodes.transpose() * post.probs;
  const MatrixXd eaa = post.nodes.transpose() * post.probs.asDiagonal() * post.nodes;
  const VectorXd res = ps.y - ps.x * theta.beta;  // Y - X beta
  // E|res - Xt a|^2
  const double e_sq = res.squaredNorm() - 2.0 * res.dot(ps.xt * ea) + (ps.xt_xt.cwiseProduct(eaa)).sum();

  VectorXd g(1 + d * (d + 1) / 2 + p + r + s);
  int k = 0;
  g(k++) = -ps.n_meas / theta.sigma_y + e_sq / (s2 * theta.sigma_y);

  const MatrixXd sinv = theta.sigma_a.ldlt().solve(MatrixXd::Identity(d, d));
  // d/dSigma of -log|Sigma|/2 - a'Sigma^{-1}a/2 in symmetric direction D:
  // tr(M D) / 2 with M = Sigma^{-1} E[aa'] Sigma^{-1} - Sigma^{-1}.
  const MatrixXd m = sinv * eaa * sinv - sinv;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) g(k++) = (i == j) ? 0.5 * m(i, i) : m(i, j);

  g.segment(k, p) = ps.x.transpose() * (res - ps.xt * ea) / s2;
  k += p;

  // Hazard block: Delta x(Z) - sum_k Lambda_k E[e^{lin(t_k)} x(t_k)], x = (W, W~ o a).
  VectorXd hz = VectorXd::Zero(r + s);
  if (ps.delta == 1) {
    hz.head(r) = ps.w_z;
    hz.tail(s) = ps.wt_z.cwiseProduct(ea);
  }
  const std::vector<double> H = lam.prefix_sums();
  for (const auto& seg : ps.segments) {
    const double dh = H[seg.end] - H[seg.begin];
    const VectorXd pe =
        post.probs.cwiseProduct(detail::linear_predictor(post.nodes, seg.w, seg.wt, theta).array().exp().matrix());
    hz.head(r) -= dh * pe.sum() * seg.w;
    hz.tail(s) -= dh * seg.wt.cwiseProduct(post.nodes.transpose() * pe);
  }
  g.segment(k, r + s) = hz;
  return g;
}

double score_lambda(const SubjectRecord& subj, const ThetaParams& theta, const StepCumHazard& lam,
                    const HazardDirection& h2, const Integrator& quad) {
  event_log_jump(subj, lam);
  const SubjectPosterior sp = subject_posterior(subj, theta, lam, quad);
  double out = subj.delta == 1 ? h2(subj.z) : 0.0;
  const auto& times = lam.jump_times();
  const auto& sizes = lam.jump_sizes();
  for (const auto& seg : sp.ps.segments) {
    const VectorXd pe = sp.post.probs.cwiseProduct(
        detail::linear_predictor(sp.post.nodes, seg.w, seg.wt, theta).array().exp().matrix());
    const double q = pe.sum();
    for (std::size_t k = seg.begin; k < seg.end; ++k) out -= sizes[k] * h2(times[k]) * q;
  }
  return out;
}

StepCumHazard perturb_hazard(const StepCumHazard& lam, const HazardDirection& h2, double eps) {
  std::vector<double> sizes = lam.jump_sizes();
  for (std::size_t k = 0; k < sizes.size(); ++k) sizes[k] *= 1.0 + eps * h2(lam.jump_times()[k]);
  return StepCumHazard(lam.jump_times(), std::move(sizes));
}

}  // namespace jointlab
