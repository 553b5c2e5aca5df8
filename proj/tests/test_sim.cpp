#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "helpers.hpp"
#include "jointlab/sim.hpp"

using namespace jointlab;
using th::vec;

namespace {

ThetaParams theta_1d(double gamma, double phi) {
  ThetaParams t;
  t.sigma_y = 1.0;
  t.sigma_a = th::mat1(1.0);
  t.beta = VectorXd();
  t.gamma = vec({gamma});
  t.phi = vec({phi});
  return t;
}

double bisect(const std::function<double(double)>& f, double lo, double hi) {
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

StudySummary fake_summary(double rmse, double sup_median, bool valid = true) {
  StudySummary s;
  s.valid = valid;
  CoordinateSummary c;
  c.label = "x";
  c.rmse = rmse;
  s.coords.push_back(c);
  s.sup_lambda.median = sup_median;
  return s;
}

}  // namespace

TEST_CASE("exponential inversion") {
  const Baseline b = Baseline::constant(0.8);
  const ThetaParams t = theta_1d(0.4, 0.3);
  const VectorXd a = vec({0.5});
  const auto w = CovariatePath::constant(vec({1.5}));
  const auto wt = CovariatePath::constant(vec({2.0}));
  const double eta = 0.4 * 1.5 + 0.3 * 2.0 * 0.5;
  for (double u : {0.9, 0.5, 0.1}) {
    const double got = invert_hazard(a, w, wt, t, b, 100.0, u);
    CHECK(std::abs(got - (-std::log(u) / (0.8 * std::exp(eta)))) < 1e-12);
  }
  CHECK(std::isinf(invert_hazard(a, w, wt, t, b, 0.01, 0.5)));
  CHECK_THROWS_AS(invert_hazard(a, w, wt, t, b, 1.0, 0.0), DomainError);
  CHECK_THROWS_AS(invert_hazard(a, w, wt, t, b, 1.0, 1.0), DomainError);
}

TEST_CASE("property: inversion residual and bisection agreement") {
  th::Rng rng(1);
  for (int rep = 0; rep < 300; ++rep) {
    const Baseline b = rep % 2 ? Baseline::constant(th::unif(rng, 0.1, 2.0))
                               : Baseline::weibull(th::unif(rng, 1.0, 3.0), th::unif(rng, 0.5, 3.0));
    const ThetaParams t = theta_1d(th::normal(rng, 0.5), th::normal(rng, 0.5));
    const VectorXd a = th::normal_vec(rng, 1);
    const double tau = 5.0;
    // One change point in W; W~ constant.
    const double cp = th::unif(rng, 0.1, 4.0);
    MatrixXd v(2, 1);
    v << th::normal(rng), th::normal(rng);
    const CovariatePath w({0.0, cp}, v);
    const CovariatePath wt = CovariatePath::constant(vec({th::unif(rng, 0.5, 1.5)}));
    const double u = th::unif(rng, 0.01, 0.99);
    const double got = invert_hazard(a, w, wt, t, b, tau, u);
    const double total = subject_cumulative_hazard(tau, a, w, wt, t, b);
    if (total < -std::log(u)) {
      CHECK(std::isinf(got));
      continue;
    }
    REQUIRE(std::isfinite(got));
    CHECK(std::abs(subject_cumulative_hazard(got, a, w, wt, t, b) + std::log(u)) < 1e-12);
    const double root =
        bisect([&](double s) { return subject_cumulative_hazard(s, a, w, wt, t, b) + std::log(u); }, 0.0, tau);
    CHECK(std::abs(got - root) < 1e-10);
  }
}

TEST_CASE("baselines") {
  const Baseline wb = Baseline::weibull(2.0, 1.5);
  CHECK(wb.cumulative(3.0) == doctest::Approx(4.0));
  CHECK(wb.hazard(1.5) == doctest::Approx(2.0 / 1.5));
  CHECK(wb.cumulative_inverse(wb.cumulative(0.7)) == doctest::Approx(0.7));
  const Baseline c = Baseline::constant(0.5);
  CHECK(c.cumulative(2.0) == 1.0);
  CHECK(c.cumulative_inverse(1.0) == 2.0);
  CHECK_THROWS_AS(Baseline::constant(0.0).validate(), ParameterError);
  CHECK_THROWS_AS(Baseline::weibull(0.5, 1.0).validate(), ParameterError);
  CHECK_THROWS_AS(Baseline::weibull(2.0, -1.0).validate(), ParameterError);
}

TEST_CASE("scenario validation") {
  CHECK_NOTHROW(default_scenario().validate());
  auto expect = [](SimScenario sc, const std::string& msg) {
    try {
      sc.validate();
      FAIL("expected ParameterError: " << msg);
    } catch (const ParameterError& e) {
      CHECK(std::string(e.what()).find(msg) != std::string::npos);
    }
  };
  SimScenario sc = default_scenario();
  sc.spec.tau = 0.0;
  expect(sc, "tau must be positive");
  sc = default_scenario();
  sc.schedule = {0.0, 1.0, 1.0};
  expect(sc, "strictly increasing");
  sc = default_scenario();
  sc.schedule = {0.0, 3.0};
  expect(sc, "must be < tau");
  sc = default_scenario();
  sc.covariates.w = {7};
  expect(sc, "missing column");
  sc = default_scenario();
  sc.covariates.x = {0};
  expect(sc, "covariate block x");
  sc = default_scenario();
  sc.censor_max = -1.0;
  expect(sc, "censor max");
  sc = default_scenario();
  sc.covariates.columns[1].a = 1.5;
  expect(sc, "bernoulli");
  CHECK_THROWS_AS(simulate(default_scenario(), 0), ParameterError);
}

TEST_CASE("simulated data respect the observation scheme") {
  const SimulatedData sim = simulate(default_scenario(), 500);
  CHECK(validate_dataset(sim.data).empty());
  int events = 0;
  for (std::size_t i = 0; i < sim.truth.size(); ++i) {
    const auto& s = sim.data.subjects[i];
    const auto& tr = sim.truth[i];
    CHECK(s.id == std::to_string(i + 1));
    CHECK(s.z <= sim.data.spec.tau);
    for (double t : s.meas_times) CHECK(t < s.z);
    if (s.delta) {
      ++events;
      CHECK(s.z == tr.t);
    } else {
      CHECK((tr.c <= tr.t || tr.t > sim.data.spec.tau));
      CHECK(s.z == tr.c);
    }
    CHECK(tr.c <= sim.data.spec.tau);
  }
  CHECK(events > 0);
}

TEST_CASE("simulation is deterministic and thread-count independent") {
  const SimulatedData a = simulate(default_scenario(), 300, 1);
  const SimulatedData b = simulate(default_scenario(), 300, 4);
  for (std::size_t i = 0; i < a.truth.size(); ++i) {
    const auto& x = a.data.subjects[i];
    const auto& y = b.data.subjects[i];
    CHECK(x.z == y.z);
    CHECK(x.delta == y.delta);
    CHECK(x.meas_times == y.meas_times);
    CHECK(x.y == y.y);
    CHECK(x.w_path.values() == y.w_path.values());
    CHECK(a.truth[i].a == b.truth[i].a);
  }
  SimScenario other = default_scenario();
  other.seed = 2;
  CHECK(simulate(other, 5).data.subjects[0].z != a.data.subjects[0].z);
}

TEST_CASE("residual variance recovers sigma_y^2 in the degenerate random-effect limit") {
  SimScenario sc = default_scenario();
  sc.theta_0.sigma_a = th::mat1(1e-12);
  sc.theta_0.phi.setZero();
  sc.baseline = Baseline::constant(0.05);
  sc.censor_max.reset();
  const SimulatedData sim = simulate(sc, 2500);
  double ss = 0.0;
  long m = 0;
  for (const auto& s : sim.data.subjects)
    for (int j = 0; j < s.n_meas(); ++j, ++m) {
      const double r = s.y(j) - s.x_path.value_at(s.meas_times[static_cast<std::size_t>(j)]).dot(sc.theta_0.beta);
      ss += r * r;
    }
  REQUIRE(m >= 10000);
  const double s2 = sc.theta_0.sigma_y * sc.theta_0.sigma_y;
  CHECK(std::abs(ss / m - s2) < 0.05 * s2);
}

TEST_CASE("event times follow the exponential law") {
  SimScenario sc = default_scenario();
  sc.theta_0.gamma.setZero();
  sc.theta_0.phi.setZero();
  sc.censor_max.reset();
  const double c = sc.baseline.rate;
  const int n = 10000;
  const SimulatedData sim = simulate(sc, n);
  for (double t : {0.25, 0.5, 1.0, 2.0, 2.9}) {
    int by = 0;
    for (const auto& s : sim.data.subjects) by += (s.delta && s.z <= t) ? 1 : 0;
    const double p = 1.0 - std::exp(-c * t);
    const double se = std::sqrt(p * (1 - p) / n);
    INFO("t=" << t << " empirical " << static_cast<double>(by) / n << " expected " << p);
    CHECK(std::abs(static_cast<double>(by) / n - p) < 3 * se);
  }
}

TEST_CASE("time columns step at schedule times") {
  SimScenario sc = default_scenario();
  sc.covariates.columns.push_back({CovariateColumn::Kind::time, 0.0, 0.0});
  sc.covariates.columns.push_back({CovariateColumn::Kind::normal, 0.0, 1.0});
  sc.covariates.columns.push_back({CovariateColumn::Kind::uniform, -1.0, 2.0});
  sc.spec.p = 4;
  sc.theta_0.beta = vec({1.0, -0.5, 0.2, 0.1});
  sc.covariates.x = {0, 2, 3, 4};
  const SimulatedData sim = simulate(sc, 50);
  for (const auto& s : sim.data.subjects) {
    CHECK(eval_path(s.x_path, 1.2, 3.0)(1) == 1.0);
    CHECK(eval_path(s.x_path, 2.5, 3.0)(1) == 2.5);
    CHECK(eval_path(s.x_path, 0.3, 3.0)(1) == 0.0);
    const double u = eval_path(s.x_path, 0.0, 3.0)(3);
    CHECK(u >= -1.0);
    CHECK(u <= 2.0);
  }
}

TEST_CASE("sup distance") {
  const Baseline b = Baseline::constant(0.5);
  CHECK(sup_distance(StepCumHazard({0.1}, {0.2}), b, 2.0) == doctest::Approx(0.8));
  CHECK(sup_distance(StepCumHazard({1.0}, {0.5}), b, 1.0) == doctest::Approx(0.5));
  CHECK(sup_distance(StepCumHazard(), b, 2.0) == doctest::Approx(1.0));
}

TEST_CASE("quantiles") {
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(sample_quantile(v, 0.5) == doctest::Approx(2.5));
  CHECK(sample_quantile(v, 0.95) == doctest::Approx(3.85));
  CHECK(sample_quantile(v, 0.0) == 1.0);
  CHECK(sample_quantile(v, 1.0) == 4.0);
  CHECK(std::abs(chi_squared_quantile(0.95, 6) - 12.591587243743977) < 1e-10);
  CHECK(std::abs(chi_squared_quantile(0.95, 1) - 3.841458820694124) < 1e-10);
  CHECK_THROWS_AS(chi_squared_quantile(0.95, 0), DomainError);
}

TEST_CASE("derived seeds") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(7, i));
  CHECK(seen.size() == 1000);
  CHECK(derive_seed(7, 3) == derive_seed(7, 3));
  CHECK(derive_seed(7, 3) != derive_seed(8, 3));
}

TEST_CASE("identical replicate seeds give zero spread") {
  StudyOptions o;
  o.n = 60;
  o.replicates = 2;
  o.same_seed = true;
  const StudySummary s = replicate_study(default_scenario(), o);
  REQUIRE(s.converged == 2);
  for (const auto& c : s.coords) CHECK(c.emp_se == 0.0);
}

TEST_CASE("study plumbing and determinism") {
  StudyOptions o;
  o.kind = StudyKind::lr;
  o.n = 60;
  o.replicates = 4;
  o.threads = 1;
  const StudySummary a = replicate_study(default_scenario(), o);
  o.threads = 3;
  const StudySummary b = replicate_study(default_scenario(), o);
  CHECK(a.lr_df == 6);
  CHECK(a.coords.size() == 6);
  REQUIRE(a.records.size() == 4);
  for (std::size_t r = 0; r < 4; ++r) {
    CHECK(a.records[r].seed == b.records[r].seed);
    CHECK(a.records[r].lr == b.records[r].lr);
    CHECK(a.records[r].theta_hat == b.records[r].theta_hat);
    CHECK(a.records[r].lr >= -1e-6);
  }
  CHECK(a.lr.mean == b.lr.mean);

  o.kind = StudyKind::coverage;
  o.threads = 1;
  const StudySummary c = replicate_study(default_scenario(), o);
  CHECK(c.schemes == std::vector<std::string>{"paper", "central"});
  for (const auto& cs : c.coords) CHECK(cs.schemes.size() == 2);

  o.replicates = 1;
  CHECK_THROWS_AS(replicate_study(default_scenario(), o), ParameterError);
}

TEST_CASE("check thresholds") {
  auto cons = consistency_checks(fake_summary(1.0, 1.0), fake_summary(0.69, 0.74));
  REQUIRE(cons.size() == 2);
  CHECK(cons[0].passed);
  CHECK(cons[1].passed);
  cons = consistency_checks(fake_summary(1.0, 1.0), fake_summary(0.71, 0.76));
  CHECK_FALSE(cons[0].passed);
  CHECK_FALSE(cons[1].passed);
  cons = consistency_checks(fake_summary(1.0, 1.0, false), fake_summary(0.5, 0.5));
  CHECK_FALSE(cons[0].passed);
  CHECK(cons.back().name == "study_valid");

  StudySummary lr;
  lr.lr_df = 6;
  lr.lr.mean = 6.2;
  lr.lr.q95 = 12.0;
  auto l = lr_checks(lr);
  CHECK(l[0].passed);
  CHECK(l[1].passed);
  lr.lr.mean = 7.6;
  lr.lr.q95 = 14.6;
  l = lr_checks(lr);
  CHECK_FALSE(l[0].passed);
  CHECK_FALSE(l[1].passed);

  StudySummary cov;
  CoordinateSummary cs;
  cs.label = "beta[0]";
  cs.emp_se = 0.1;
  cs.schemes.push_back({"central", 0.11, 0.95, 100});
  cs.schemes.push_back({"paper", 0.13, 0.89, 100});
  cov.coords.push_back(cs);
  const auto cv = coverage_checks(cov);
  REQUIRE(cv.size() == 4);
  CHECK(cv[0].passed);
  CHECK(cv[1].passed);
  CHECK_FALSE(cv[2].passed);
  CHECK_FALSE(cv[3].passed);
}
