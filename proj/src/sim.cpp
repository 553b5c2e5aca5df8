#include "jointlab/sim.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <random>

#include "jointlab/parallel.hpp"

namespace jointlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

double Baseline::hazard(double t) const {
  if (kind == Kind::constant) return rate;
  if (t <= 0.0) return shape == 1.0 ? 1.0 / scale : 0.0;
  return shape / scale * std::pow(t / scale, shape - 1.0);
}

double Baseline::cumulative(double t) const {
  if (t <= 0.0) return 0.0;
  if (kind == Kind::constant) return rate * t;
  return std::pow(t / scale, shape);
}

double Baseline::cumulative_inverse(double v) const {
  if (v <= 0.0) return 0.0;
  if (kind == Kind::constant) return v / rate;
  return scale * std::pow(v, 1.0 / shape);
}

void Baseline::validate() const {
  if (kind == Kind::constant) {
    if (!(rate > 0.0) || !std::isfinite(rate)) throw ParameterError("baseline: constant rate must be positive");
    return;
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ParameterError("baseline: weibull scale must be positive");
  // shape < 1 makes lambda_0 unbounded at 0.
  if (!(shape >= 1.0) || !std::isfinite(shape)) throw ParameterError("baseline: weibull shape must be >= 1");
}

std::string to_string(CovariateColumn::Kind k) {
  switch (k) {
    case CovariateColumn::Kind::constant: return "constant";
    case CovariateColumn::Kind::bernoulli: return "bernoulli";
    case CovariateColumn::Kind::normal: return "normal";
    case CovariateColumn::Kind::uniform: return "uniform";
    case CovariateColumn::Kind::time: return "time";
  }
  return "constant";
}

CovariateColumn::Kind covariate_kind_from_string(const std::string& s) {
  if (s == "constant") return CovariateColumn::Kind::constant;
  if (s == "bernoulli") return CovariateColumn::Kind::bernoulli;
  if (s == "normal") return CovariateColumn::Kind::normal;
  if (s == "uniform") return CovariateColumn::Kind::uniform;
  if (s == "time") return CovariateColumn::Kind::time;
  throw ParameterError("unknown covariate kind '" + s + "'");
}

void SimScenario::validate() const {
  if (!(spec.tau > 0.0) || !std::isfinite(spec.tau))
    throw ParameterError("scenario: tau must be positive (follow-up is administratively censored at tau)");
  if (spec.s != spec.d_a) throw ParameterError("scenario: s (length of phi) must equal d_a");
  if (spec.p < 0 || spec.r < 0 || spec.d_a < 1) throw ParameterError("scenario: bad dimensions");
  theta_0.validate(spec);
  baseline.validate();
  const auto& cv = covariates;
  auto check_block = [&](const std::vector<int>& idx, int want, const char* name) {
    if (static_cast<int>(idx.size()) != want)
      throw ParameterError(std::string("scenario: covariate block ") + name + " has " + std::to_string(idx.size()) +
                           " columns, expected " + std::to_string(want));
    for (int j : idx)
      if (j < 0 || j >= static_cast<int>(cv.columns.size()))
        throw ParameterError(std::string("scenario: covariate block ") + name + " refers to missing column " +
                             std::to_string(j));
  };
  check_block(cv.x, spec.p, "x");
  check_block(cv.xt, spec.d_a, "xt");
  check_block(cv.w, spec.r, "w");
  check_block(cv.wt, spec.s, "wt");
  for (const auto& c : cv.columns) {
    switch (c.kind) {
      case CovariateColumn::Kind::bernoulli:
        if (!(c.a >= 0.0 && c.a <= 1.0)) throw ParameterError("scenario: bernoulli p must lie in [0, 1]");
        break;
      case CovariateColumn::Kind::normal:
        if (!(c.b >= 0.0) || !std::isfinite(c.a)) throw ParameterError("scenario: normal sd must be >= 0");
        break;
      case CovariateColumn::Kind::uniform:
        if (!(c.a <= c.b) || !std::isfinite(c.a) || !std::isfinite(c.b))
          throw ParameterError("scenario: uniform bounds must satisfy low <= high");
        break;
      case CovariateColumn::Kind::constant:
        if (!std::isfinite(c.a)) throw ParameterError("scenario: constant column must be finite");
        break;
      case CovariateColumn::Kind::time: break;
    }
  }
  if (schedule.empty()) throw ParameterError("scenario: measurement schedule is empty");
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    if (!(schedule[k] >= 0.0)) throw ParameterError("scenario: schedule times must be >= 0");
    if (!(schedule[k] < spec.tau)) throw ParameterError("scenario: schedule times must be < tau");
    if (k > 0 && !(schedule[k] > schedule[k - 1]))
      throw ParameterError("scenario: schedule must be strictly increasing");
  }
  if (censor_max && !(*censor_max > 0.0)) throw ParameterError("scenario: censor max must be positive");
}

SimScenario default_scenario() {
  SimScenario sc;
  sc.spec.p = 2;
  sc.spec.d_a = 1;
  sc.spec.r = 1;
  sc.spec.s = 1;
  sc.spec.tau = 3.0;
  sc.theta_0.sigma_y = 0.5;
  sc.theta_0.sigma_a = MatrixXd::Identity(1, 1);
  sc.theta_0.beta = (VectorXd(2) << 1.0, -0.5).finished();
  sc.theta_0.gamma = VectorXd::Constant(1, 0.5);
  sc.theta_0.phi = VectorXd::Constant(1, 0.7);
  sc.baseline = Baseline::constant(0.5);
  sc.covariates.columns = {{CovariateColumn::Kind::constant, 1.0, 0.0},
                           {CovariateColumn::Kind::bernoulli, 0.5, 0.0}};
  sc.covariates.x = {0, 1};
  sc.covariates.xt = {0};
  sc.covariates.w = {1};
  sc.covariates.wt = {0};
  sc.schedule = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5};
  sc.censor_max = 6.0;
  sc.seed = 1;
  return sc;
}

namespace {

// Union of the change points of both paths that fall in [0, upto).
std::vector<double> merged_breaks(const CovariatePath& w, const CovariatePath& wt, double upto) {
  std::vector<double> b{0.0};
  for (double t : w.change_points())
    if (t > 0.0 && t < upto) b.push_back(t);
  for (double t : wt.change_points())
    if (t > 0.0 && t < upto) b.push_back(t);
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

double log_relative_risk(double t, const VectorXd& a, const CovariatePath& w, const CovariatePath& wt,
                         const ThetaParams& theta) {
  double eta = 0.0;
  if (w.dim() > 0) eta += w.value_at(t).dot(theta.gamma);
  if (wt.dim() > 0) eta += wt.value_at(t).cwiseProduct(theta.phi).dot(a);
  return eta;
}

}  // namespace

double subject_cumulative_hazard(double t, const VectorXd& a, const CovariatePath& w_path,
                                 const CovariatePath& wt_path, const ThetaParams& theta, const Baseline& baseline) {
  if (t <= 0.0) return 0.0;
  const auto br = merged_breaks(w_path, wt_path, t);
  double acc = 0.0;
  for (std::size_t k = 0; k < br.size(); ++k) {
    const double t0 = br[k];
    const double t1 = k + 1 < br.size() ? br[k + 1] : t;
    const double rr = std::exp(log_relative_risk(t0, a, w_path, wt_path, theta));
    acc += rr * (baseline.cumulative(t1) - baseline.cumulative(t0));
  }
  return acc;
}

double invert_hazard(const VectorXd& a, const CovariatePath& w_path, const CovariatePath& wt_path,
                     const ThetaParams& theta, const Baseline& baseline, double tau, double u) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("invert_hazard: u must lie in (0, 1)");
  const double target = -std::log(u);
  const auto br = merged_breaks(w_path, wt_path, tau);
  double acc = 0.0;
  for (std::size_t k = 0; k < br.size(); ++k) {
    const double t0 = br[k];
    const double t1 = k + 1 < br.size() ? br[k + 1] : tau;
    const double rr = std::exp(log_relative_risk(t0, a, w_path, wt_path, theta));
    const double base0 = baseline.cumulative(t0);
    const double inc = rr * (baseline.cumulative(t1) - base0);
    if (acc + inc >= target) {
      const double t = baseline.cumulative_inverse(base0 + (target - acc) / rr);
      return std::clamp(t, t0, t1);
    }
    acc += inc;
  }
  return kInf;
}

namespace {

struct PathBuilder {
  std::vector<double> grid;  // change points used when a time column is present

  CovariatePath build(const std::vector<int>& idx, const VectorXd& draws,
                      const std::vector<CovariateColumn>& cols) const {
    if (idx.empty()) return CovariatePath::empty();
    bool timed = false;
    for (int j : idx) timed = timed || cols[static_cast<std::size_t>(j)].kind == CovariateColumn::Kind::time;
    const auto nc = static_cast<Eigen::Index>(idx.size());
    if (!timed) {
      VectorXd v(nc);
      for (Eigen::Index c = 0; c < nc; ++c) v(c) = draws(idx[static_cast<std::size_t>(c)]);
      return CovariatePath::constant(v);
    }
    MatrixXd vals(static_cast<Eigen::Index>(grid.size()), nc);
    for (std::size_t g = 0; g < grid.size(); ++g)
      for (Eigen::Index c = 0; c < nc; ++c) {
        const int j = idx[static_cast<std::size_t>(c)];
        vals(static_cast<Eigen::Index>(g), c) =
            cols[static_cast<std::size_t>(j)].kind == CovariateColumn::Kind::time ? grid[g] : draws(j);
      }
    return CovariatePath(grid, vals);
  }
};

}  // namespace

SimulatedData simulate(const SimScenario& scenario, int n, int threads) {
  scenario.validate();
  if (n < 1) throw ParameterError("simulate: n must be positive");
  const ModelSpec& spec = scenario.spec;
  const auto& cols = scenario.covariates.columns;
  PathBuilder pb;
  if (scenario.schedule.front() > 0.0) pb.grid.push_back(0.0);
  pb.grid.insert(pb.grid.end(), scenario.schedule.begin(), scenario.schedule.end());
  Eigen::LLT<MatrixXd> llt(scenario.theta_0.sigma_a);
  const MatrixXd chol = llt.matrixL();

  SimulatedData out;
  out.data.spec = spec;
  out.data.subjects.resize(static_cast<std::size_t>(n));
  out.truth.resize(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(scenario.seed, i));
    std::normal_distribution<double> stdnorm(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto open_unit = [&] {
      double u;
      do u = unif(rng);
      while (!(u > 0.0));
      return u;
    };

    VectorXd draws(static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const auto& c = cols[j];
      double v = 0.0;
      switch (c.kind) {
        case CovariateColumn::Kind::constant: v = c.a; break;
        case CovariateColumn::Kind::bernoulli: v = unif(rng) < c.a ? 1.0 : 0.0; break;
        case CovariateColumn::Kind::normal: v = c.a + c.b * stdnorm(rng); break;
        case CovariateColumn::Kind::uniform: v = c.a + (c.b - c.a) * unif(rng); break;
        case CovariateColumn::Kind::time: v = 0.0; break;
      }
      draws(static_cast<Eigen::Index>(j)) = v;
    }
    VectorXd zstd(spec.d_a);
    for (int k = 0; k < spec.d_a; ++k) zstd(k) = stdnorm(rng);
    const VectorXd a = chol * zstd;

    SubjectRecord& s = out.data.subjects[i];
    s.id = std::to_string(i + 1);
    s.x_path = pb.build(scenario.covariates.x, draws, cols);
    s.xt_path = pb.build(scenario.covariates.xt, draws, cols);
    s.w_path = pb.build(scenario.covariates.w, draws, cols);
    s.wt_path = pb.build(scenario.covariates.wt, draws, cols);

    const double t_event =
        invert_hazard(a, s.w_path, s.wt_path, scenario.theta_0, scenario.baseline, spec.tau, open_unit());
    const double c_draw = scenario.censor_max ? *scenario.censor_max * open_unit() : kInf;
    const double c = std::min(c_draw, spec.tau);
    s.z = std::min(t_event, c);
    s.delta = t_event <= c ? 1 : 0;

    std::vector<double> ys;
    for (double t : scenario.schedule) {
      if (!(t < s.z)) break;
      s.meas_times.push_back(t);
      double mu = 0.0;
      if (spec.p > 0) mu += s.x_path.value_at(t).dot(scenario.theta_0.beta);
      mu += s.xt_path.value_at(t).dot(a);
      ys.push_back(mu + scenario.theta_0.sigma_y * stdnorm(rng));
    }
    s.y = Eigen::Map<VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
    out.truth[i] = SubjectTruth{a, t_event, c};
  });
  return out;
}

double sup_distance(const StepCumHazard& lam, const Baseline& baseline, double tau) {
  double best = 0.0, level = 0.0;
  const auto& t = lam.jump_times();
  const auto& d = lam.jump_sizes();
  for (std::size_t k = 0; k < t.size() && t[k] <= tau; ++k) {
    const double base = baseline.cumulative(t[k]);
    best = std::max(best, std::abs(level - base));
    level += d[k];
    best = std::max(best, std::abs(level - base));
  }
  return std::max(best, std::abs(level - baseline.cumulative(tau)));
}

std::string to_string(StudyKind k) {
  switch (k) {
    case StudyKind::consistency: return "consistency";
    case StudyKind::coverage: return "coverage";
    case StudyKind::lr: return "lr";
  }
  return "consistency";
}

StudyKind study_kind_from_string(const std::string& s) {
  if (s == "consistency") return StudyKind::consistency;
  if (s == "coverage") return StudyKind::coverage;
  if (s == "lr") return StudyKind::lr;
  throw ParameterError("unknown study '" + s + "'");
}

double sample_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double chi_squared_quantile(double p, double df) {
  if (!(p > 0.0 && p < 1.0) || !(df > 0.0)) throw DomainError("chi_squared_quantile: bad arguments");
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(df), p);
}

namespace {

Quantiles summarize(std::vector<double> v) {
  Quantiles q;
  if (v.empty()) return q;
  double sum = 0.0;
  for (double x : v) sum += x;
  q.mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - q.mean) * (x - q.mean);
  q.variance = v.size() > 1 ? ss / static_cast<double>(v.size() - 1) : 0.0;
  std::sort(v.begin(), v.end());
  q.median = sample_quantile(v, 0.5);
  q.q90 = sample_quantile(v, 0.9);
  q.q95 = sample_quantile(v, 0.95);
  q.max = v.back();
  return q;
}

ReplicateRecord run_replicate(const SimScenario& scenario, const StudyOptions& opt, std::size_t r,
                              const std::vector<int>& free) {
  ReplicateRecord rec;
  SimScenario sc = scenario;
  rec.seed = derive_seed(scenario.seed, opt.same_seed ? 0 : r);
  sc.seed = rec.seed;
  FitConfig cfg = opt.fit;
  cfg.threads = 1;
  try {
    const SimulatedData sim = simulate(sc, opt.n, 1);
    const FitResult fit = em_fit(sim.data, cfg);
    rec.iters = fit.iters;
    rec.theta_hat = fit.theta_hat.to_vector();
    rec.max_loglik_decrease = fit.diagnostics.max_loglik_decrease;
    rec.self_consistency = fit.diagnostics.self_consistency;
    if (!fit.converged) {
      rec.error = "EM did not converge";
      return rec;
    }
    rec.sup_lambda = sup_distance(fit.lambda_hat, sc.baseline, sc.spec.tau);
    if (opt.kind == StudyKind::coverage) {
      ProfileLikelihood pl(sim.data, cfg);
      ProfileFn fn = [&](const VectorXd& v) { return pl.at_vector(v); };
      const auto est = information_estimates(fn, rec.theta_hat, opt.n, opt.c_h, opt.schemes, free);
      for (const auto& e : est) rec.se.push_back(e.reliable ? e.se : VectorXd());
    } else if (opt.kind == StudyKind::lr) {
      rec.lr = lr_statistic(sim.data, cfg, sc.theta_0, fit);
    }
    rec.converged = true;
  } catch (const Error& e) {
    rec.error = e.what();
  }
  return rec;
}

}  // namespace

StudySummary replicate_study(const SimScenario& scenario, const StudyOptions& opt) {
  scenario.validate();
  opt.fit.validate();
  if (opt.replicates < 2) throw ParameterError("replicate_study: replicates must be >= 2");
  if (opt.n < 1) throw ParameterError("replicate_study: n must be positive");
  if (!(opt.level > 0.0 && opt.level < 1.0)) throw ParameterError("replicate_study: level must lie in (0, 1)");

  const std::vector<int> free = free_coordinates(scenario.spec, opt.fit);
  StudySummary out;
  out.kind = opt.kind;
  out.n = opt.n;
  out.replicates = opt.replicates;
  out.records.resize(static_cast<std::size_t>(opt.replicates));
  parallel_for(out.records.size(), opt.threads,
               [&](std::size_t r) { out.records[r] = run_replicate(scenario, opt, r, free); });

  for (const auto& rec : out.records) (rec.converged ? out.converged : out.non_converged) += 1;
  out.valid = out.non_converged * 5 <= opt.replicates && out.converged >= 2;

  const VectorXd truth = scenario.theta_0.to_vector();
  const auto labels = theta_labels(scenario.spec);
  const double z = normal_quantile(0.5 + 0.5 * opt.level);
  if (opt.kind == StudyKind::coverage) {
    for (auto s : opt.schemes) out.schemes.push_back(to_string(s));
    out.unreliable.assign(opt.schemes.size(), 0);
    for (const auto& rec : out.records)
      if (rec.converged)
        for (std::size_t k = 0; k < opt.schemes.size(); ++k) out.unreliable[k] += rec.se[k].size() == 0 ? 1 : 0;
  }

  std::vector<double> sups, lrs;
  for (const auto& rec : out.records)
    if (rec.converged) {
      sups.push_back(rec.sup_lambda);
      lrs.push_back(rec.lr);
    }
  out.sup_lambda = summarize(sups);
  if (opt.kind == StudyKind::lr) {
    out.lr = summarize(lrs);
    out.lr_df = static_cast<int>(free.size());
  }

  for (std::size_t j = 0; j < free.size(); ++j) {
    const int c = free[j];
    CoordinateSummary cs;
    cs.label = labels[static_cast<std::size_t>(c)];
    cs.truth = truth(c);
    std::vector<double> est;
    for (const auto& rec : out.records)
      if (rec.converged) est.push_back(rec.theta_hat(c));
    if (!est.empty()) {
      const double m = static_cast<double>(est.size());
      double sum = 0.0, sq = 0.0;
      for (double v : est) {
        sum += v;
        sq += (v - cs.truth) * (v - cs.truth);
      }
      cs.mean = sum / m;
      cs.bias = cs.mean - cs.truth;
      cs.rmse = std::sqrt(sq / m);
      double ss = 0.0;
      for (double v : est) ss += (v - cs.mean) * (v - cs.mean);
      cs.emp_se = est.size() > 1 ? std::sqrt(ss / (m - 1.0)) : 0.0;
    }
    if (opt.kind == StudyKind::coverage) {
      for (std::size_t k = 0; k < opt.schemes.size(); ++k) {
        SchemeStats st;
        st.scheme = to_string(opt.schemes[k]);
        double se_sum = 0.0;
        int hit = 0;
        for (const auto& rec : out.records) {
          if (!rec.converged || rec.se[k].size() == 0) continue;
          const double se = rec.se[k](static_cast<Eigen::Index>(j));
          se_sum += se;
          hit += std::abs(rec.theta_hat(c) - cs.truth) <= z * se ? 1 : 0;
          ++st.used;
        }
        if (st.used > 0) {
          st.mean_se = se_sum / st.used;
          st.coverage = static_cast<double>(hit) / st.used;
        }
        cs.schemes.push_back(st);
      }
    }
    out.coords.push_back(std::move(cs));
  }
  return out;
}

std::vector<CheckResult> consistency_checks(const StudySummary& small, const StudySummary& large) {
  std::vector<CheckResult> out;
  const bool valid = small.valid && large.valid;
  for (std::size_t j = 0; j < small.coords.size() && j < large.coords.size(); ++j) {
    CheckResult c;
    c.name = "rmse_ratio[" + small.coords[j].label + "]";
    c.value = large.coords[j].rmse / small.coords[j].rmse;
    c.passed = valid && c.value < 0.7;
    c.detail = "RMSE(n=" + std::to_string(large.n) + ")/RMSE(n=" + std::to_string(small.n) + ") < 0.7";
    out.push_back(c);
  }
  CheckResult s;
  s.name = "sup_lambda_median_ratio";
  s.value = large.sup_lambda.median / small.sup_lambda.median;
  s.passed = valid && s.value < 0.75;
  s.detail = "median sup|Lambda_hat - Lambda_0| ratio < 0.75";
  out.push_back(s);
  if (!valid) out.push_back({"study_valid", false, 0.0, "study invalid: more than 20% of replicates failed"});
  return out;
}

std::vector<CheckResult> coverage_checks(const StudySummary& s) {
  std::vector<CheckResult> out;
  for (const auto& cs : s.coords)
    for (const auto& st : cs.schemes) {
      CheckResult cov;
      cov.name = "coverage[" + st.scheme + "][" + cs.label + "]";
      cov.value = st.coverage;
      cov.passed = s.valid && st.used > 0 && st.coverage >= 0.90 && st.coverage <= 0.99;
      cov.detail = "coverage in [0.90, 0.99] over " + std::to_string(st.used) + " replicates";
      out.push_back(cov);
      CheckResult se;
      se.name = "se_ratio[" + st.scheme + "][" + cs.label + "]";
      se.value = cs.emp_se > 0.0 ? st.mean_se / cs.emp_se : std::numeric_limits<double>::quiet_NaN();
      se.passed = s.valid && st.used > 0 && std::abs(se.value - 1.0) <= 0.2;
      se.detail = "mean estimated SE / empirical SE within 20%";
      out.push_back(se);
    }
  if (!s.valid) out.push_back({"study_valid", false, 0.0, "study invalid: more than 20% of replicates failed"});
  return out;
}

std::vector<CheckResult> lr_checks(const StudySummary& s) {
  std::vector<CheckResult> out;
  const double d = s.lr_df;
  CheckResult m;
  m.name = "lr_mean";
  m.value = s.lr.mean;
  m.passed = s.valid && d > 0 && m.value >= 0.75 * d && m.value <= 1.25 * d;
  m.detail = "mean in [0.75 d, 1.25 d], d = " + std::to_string(s.lr_df);
  out.push_back(m);
  CheckResult q;
  q.name = "lr_q95";
  q.value = s.lr.q95;
  const double ref = d > 0 ? chi_squared_quantile(0.95, d) : std::numeric_limits<double>::quiet_NaN();
  q.passed = s.valid && d > 0 && std::abs(q.value / ref - 1.0) <= 0.15;
  q.detail = "95th percentile within 15% of chi-square quantile";
  out.push_back(q);
  if (!s.valid) out.push_back({"study_valid", false, 0.0, "study invalid: more than 20% of replicates failed"});
  return out;
}

}  // namespace jointlab
