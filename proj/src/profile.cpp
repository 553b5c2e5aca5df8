#include "jointlab/profile.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <limits>
#include <map>

#include "jointlab/detail/em_core.hpp"

namespace jointlab {

ProfileLikelihood::ProfileLikelihood(const Dataset& data, const FitConfig& config, double tol, int max_sweeps)
    : spec_(data.spec),
      pd_(detail::prepare_data(data)),
      quad_(config.integrator(data.spec.d_a)),
      tol_(tol),
      max_sweeps_(max_sweeps),
      threads_(config.threads) {
  require_valid(data);
  warm_ = detail::nelson_aalen_jumps(pd_);
}

void ProfileLikelihood::reset_warm_start() { warm_ = detail::nelson_aalen_jumps(pd_); }

double ProfileLikelihood::operator()(const ThetaParams& theta) {
  theta.validate(spec_);
  auto hs = detail::solve_hazard(pd_, theta, warm_, quad_, tol_, max_sweeps_, threads_);
  last_sweeps_ = hs.sweeps;
  if (!hs.converged)
    throw FitError("profile hazard iteration did not converge in " + std::to_string(max_sweeps_) +
                   " sweeps (residual " + std::to_string(hs.residual) + ")");
  warm_ = std::move(hs.jumps);
  return hs.loglik;
}

double profile_loglik(const ThetaParams& theta, const Dataset& data, const FitConfig& config) {
  ProfileLikelihood pl(data, config);
  return pl(theta);
}

std::string to_string(InfoScheme s) { return s == InfoScheme::forward_cross ? "paper" : "central"; }

InfoScheme info_scheme_from_string(const std::string& s) {
  if (s == "paper" || s == "forward_cross") return InfoScheme::forward_cross;
  if (s == "central" || s == "central_cross") return InfoScheme::central_cross;
  throw ParameterError("unknown information scheme '" + s + "'");
}

std::vector<int> free_coordinates(const ModelSpec& spec, const FitConfig& config) {
  const int d = spec.theta_dim();
  const int keep = config.fix_phi_zero ? d - spec.s : d;
  std::vector<int> out(static_cast<std::size_t>(keep));
  for (int j = 0; j < keep; ++j) out[static_cast<std::size_t>(j)] = j;
  return out;
}

namespace {

// Memoised probes at theta_hat + h * sum_j offset_j e_{coords[j]}.
class ProbeCache {
 public:
  ProbeCache(const ProfileFn& pl, const VectorXd& center, const std::vector<int>& coords, double h)
      : pl_(pl), center_(center), coords_(coords), h_(h) {}

  double at(std::vector<int> offsets) {
    auto it = cache_.find(offsets);
    if (it != cache_.end()) return it->second;
    VectorXd v = center_;
    for (std::size_t j = 0; j < offsets.size(); ++j) v(coords_[j]) += h_ * offsets[j];
    double val;
    try {
      val = pl_(v);
    } catch (const Error& e) {
      failures.emplace_back(e.what());
      val = std::numeric_limits<double>::quiet_NaN();
    }
    ++evaluations;
    cache_.emplace(std::move(offsets), val);
    return val;
  }

  std::vector<int> unit(std::size_t s, int sign_s, std::size_t l = 0, int sign_l = 0) const {
    std::vector<int> o(coords_.size(), 0);
    o[s] += sign_s;
    if (sign_l != 0) o[l] += sign_l;
    return o;
  }

  int evaluations = 0;
  std::vector<std::string> failures;

 private:
  const ProfileFn& pl_;
  VectorXd center_;
  std::vector<int> coords_;
  double h_;
  std::map<std::vector<int>, double> cache_;
};

void finish(InfoEstimate& est, int n) {
  est.matrix = 0.5 * (est.raw + est.raw.transpose());
  if (!est.raw.allFinite()) {
    est.reliable = false;
    est.notes.emplace_back("one or more profile probes failed");
    return;
  }
  est.asymmetry = (est.raw - est.raw.transpose()).cwiseAbs().maxCoeff();
  const double scale = est.raw.cwiseAbs().maxCoeff();
  bool ok = est.asymmetry < 0.05 * scale;
  if (!ok) est.notes.emplace_back("raw matrix too asymmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(est.matrix);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) {
    ok = false;
    est.notes.emplace_back("information estimate is not positive definite");
  } else {
    const MatrixXd inv = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
                         eig.eigenvectors().transpose();
    est.se = (inv.diagonal() / static_cast<double>(n)).cwiseSqrt();
  }
  est.reliable = ok;
}

}  // namespace

std::vector<InfoEstimate> information_estimates(const ProfileFn& pl, const VectorXd& theta_hat, int n, double c_h,
                                                const std::vector<InfoScheme>& schemes, std::vector<int> coords) {
  if (n < 1) throw ParameterError("information_estimate: n must be positive");
  if (!(c_h > 0.0)) throw ParameterError("information_estimate: c_h must be positive");
  if (coords.empty())
    for (int j = 0; j < theta_hat.size(); ++j) coords.push_back(j);
  const std::size_t d = coords.size();
  const double h = c_h / std::sqrt(static_cast<double>(n));
  const double nh2 = n * h * h;
  ProbeCache probe(pl, theta_hat, coords, h);

  const double center = probe.at(std::vector<int>(d, 0));
  VectorXd plus(static_cast<Eigen::Index>(d)), minus(static_cast<Eigen::Index>(d));
  VectorXd diag(static_cast<Eigen::Index>(d));
  for (std::size_t s = 0; s < d; ++s) {
    plus(static_cast<Eigen::Index>(s)) = probe.at(probe.unit(s, +1));
    minus(static_cast<Eigen::Index>(s)) = probe.at(probe.unit(s, -1));
    diag(static_cast<Eigen::Index>(s)) =
        -(plus(static_cast<Eigen::Index>(s)) - 2.0 * center + minus(static_cast<Eigen::Index>(s))) / nh2;
  }

  std::vector<InfoEstimate> out;
  for (InfoScheme scheme : schemes) {
    InfoEstimate est;
    est.scheme = scheme;
    est.coords = coords;
    est.h_used = h;
    est.c_h = c_h;
    est.raw.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t s = 0; s < d; ++s) {
      const auto si = static_cast<Eigen::Index>(s);
      est.raw(si, si) = diag(si);
      for (std::size_t l = 0; l < d; ++l) {
        if (l == s) continue;
        const auto li = static_cast<Eigen::Index>(l);
        double v;
        if (scheme == InfoScheme::forward_cross) {
          v = -(probe.at(probe.unit(s, +1, l, +1)) - plus(si) - plus(li) + center) / nh2;
        } else {
          v = -(probe.at(probe.unit(s, +1, l, +1)) - probe.at(probe.unit(s, +1, l, -1)) -
                probe.at(probe.unit(s, -1, l, +1)) + probe.at(probe.unit(s, -1, l, -1))) /
              (4.0 * nh2);
        }
        est.raw(si, li) = v;
      }
    }
    finish(est, n);
    for (const auto& f : probe.failures) est.notes.push_back("probe failed: " + f);
    out.push_back(std::move(est));
  }
  for (auto& est : out) est.evaluations = probe.evaluations;
  return out;
}

InfoEstimate information_estimate(const ProfileFn& pl, const VectorXd& theta_hat, int n, double c_h,
                                  InfoScheme scheme, std::vector<int> coords) {
  return information_estimates(pl, theta_hat, n, c_h, {scheme}, std::move(coords)).front();
}

InfoEstimate information_estimate(const ThetaParams& theta_hat, const Dataset& data, const FitConfig& config,
                                  double c_h, InfoScheme scheme) {
  ProfileLikelihood pl(data, config);
  ProfileFn fn = [&](const VectorXd& v) { return pl.at_vector(v); };
  return information_estimate(fn, theta_hat.to_vector(), data.n(), c_h, scheme,
                              free_coordinates(data.spec, config));
}

double lr_statistic(const Dataset& data, const FitConfig& config, const ThetaParams& theta_0, const FitResult& fit) {
  if (!fit.converged) throw FitError("lr_statistic: EM did not converge");
  const double at_hat = profile_loglik(fit.theta_hat, data, config);
  const double at_null = profile_loglik(theta_0, data, config);
  return 2.0 * (at_hat - at_null);
}

double lr_statistic(const Dataset& data, const FitConfig& config, const ThetaParams& theta_0) {
  return lr_statistic(data, config, theta_0, em_fit(data, config));
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

std::vector<WaldInterval> wald_intervals(const FitResult& fit, const InfoEstimate& info, double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("wald_intervals: level must lie in (0, 1)");
  if (!info.reliable || info.se.size() != static_cast<Eigen::Index>(info.coords.size())) {
    std::string why;
    for (const auto& n : info.notes) why += "; " + n;
    throw Error("refusing Wald intervals: information estimate is unreliable" + why);
  }
  ModelSpec spec;
  spec.d_a = static_cast<int>(fit.theta_hat.sigma_a.rows());
  spec.p = static_cast<int>(fit.theta_hat.beta.size());
  spec.r = static_cast<int>(fit.theta_hat.gamma.size());
  spec.s = static_cast<int>(fit.theta_hat.phi.size());
  const auto labels = theta_labels(spec);
  const VectorXd est = fit.theta_hat.to_vector();
  const double z = normal_quantile(0.5 + 0.5 * level);
  std::vector<WaldInterval> out;
  for (std::size_t j = 0; j < info.coords.size(); ++j) {
    const int c = info.coords[j];
    WaldInterval w;
    w.label = labels[static_cast<std::size_t>(c)];
    w.estimate = est(c);
    w.se = info.se(static_cast<Eigen::Index>(j));
    w.lower = w.estimate - z * w.se;
    w.upper = w.estimate + z * w.se;
    out.push_back(w);
  }
  return out;
}

}  // namespace jointlab
