#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "jointlab/quadrature.hpp"
#include "oracles.hpp"

using namespace jointlab;
using th::vec;

namespace {

double moment(const QuadRule& r, int coord, int power, double* scale = nullptr) {
  double s = 0.0, a = 0.0;
  for (Eigen::Index j = 0; j < r.size(); ++j) {
    s += r.weights(j) * std::pow(r.nodes(j, coord), power);
    a += r.weights(j) * std::abs(std::pow(r.nodes(j, coord), power));
  }
  if (scale) *scale = a;
  return s;
}

double normal_moment(int k) {
  if (k % 2) return 0.0;
  double m = 1.0;
  for (int j = k - 1; j > 0; j -= 2) m *= j;
  return m;
}

ThetaParams scalar_theta(double sy, double sa, double gamma, double phi) {
  ThetaParams t;
  t.sigma_y = sy;
  t.sigma_a = th::mat1(sa);
  t.beta = VectorXd();
  t.gamma = gamma == 0.0 && phi == 0.0 ? VectorXd() : vec({gamma});
  t.phi = vec({phi});
  return t;
}

}  // namespace

TEST_CASE("small rules") {
  const QuadRule r1 = gauss_hermite_rule(1, 1);
  REQUIRE(r1.size() == 1);
  CHECK(r1.nodes(0, 0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(r1.weights(0) == doctest::Approx(1.0));

  const QuadRule r2 = gauss_hermite_rule(2, 1);
  REQUIRE(r2.size() == 2);
  CHECK(std::abs(std::abs(r2.nodes(0, 0)) - 1.0) < 1e-14);
  CHECK(std::abs(r2.nodes(0, 0) + r2.nodes(1, 0)) < 1e-14);
  CHECK(std::abs(r2.weights(0) - 0.5) < 1e-14);
  CHECK(std::abs(r2.weights(1) - 0.5) < 1e-14);

  CHECK(std::abs(moment(gauss_hermite_rule(10, 1), 0, 4) - 3.0) < 1e-12);
}

TEST_CASE("rule limits") {
  CHECK_THROWS_AS(gauss_hermite_rule(3, 5), DomainError);
  CHECK_THROWS_AS(gauss_hermite_rule(3, 0), DomainError);
  CHECK_THROWS_AS(gauss_hermite_rule(0, 1), DomainError);
  CHECK_THROWS_AS(gauss_hermite_rule(65, 1), DomainError);
  CHECK_NOTHROW(gauss_hermite_rule(64, 1));
}

TEST_CASE("property: weights sum to one and polynomial exactness") {
  for (int dim = 1; dim <= 3; ++dim)
    for (int m : {1, 2, 3, 5, 8, 12, 20}) {
      if (dim == 3 && m > 12) continue;
      const QuadRule r = gauss_hermite_rule(m, dim);
      CHECK(r.size() == static_cast<Eigen::Index>(std::pow(m, dim)));
      CHECK(std::abs(r.weights.sum() - 1.0) < 1e-12);
      CHECK(r.weights.minCoeff() > 0.0);
      for (int c = 0; c < dim; ++c)
        for (int k = 0; k <= 2 * m - 1 && k <= 20; ++k) {
          // Relative to sum |w x^k|, the rounding scale of the sum itself.
          double scale = 0.0;
          const double got = moment(r, c, k, &scale);
          INFO("dim=" << dim << " m=" << m << " k=" << k);
          CHECK(std::abs(got - normal_moment(k)) <= 1e-12 * std::max(1.0, scale));
        }
    }
  // Degree 2m is no longer exact.
  CHECK(std::abs(moment(gauss_hermite_rule(3, 1), 0, 6) - 15.0) > 1.0);
}

TEST_CASE("two-measurement posterior has mean 2/3 and variance 1/3") {
  const SubjectRecord s = th::subject("i", {0.0, 1.0}, {1.0, 1.0}, VectorXd(), vec({1}), VectorXd(), vec({1}), 2.0, 0);
  const ThetaParams t = scalar_theta(1.0, 1.0, 0.0, 0.0);
  const GaussianPosterior g = closed_form_gaussian_posterior(s, t);
  CHECK(std::abs(g.mean(0) - 2.0 / 3.0) < 1e-14);
  CHECK(std::abs(g.cov(0, 0) - 1.0 / 3.0) < 1e-14);

  {
    const PosteriorSummary ps = posterior_moments(s, t, StepCumHazard(), gauss_hermite_rule(20, 1));
    CHECK(std::abs(ps.mean(0) - 2.0 / 3.0) < 1e-10);
    CHECK(std::abs(ps.covariance()(0, 0) - 1.0 / 3.0) < 1e-10);
  }
  {
    // Prior centering needs many more nodes for the same accuracy.
    const PosteriorSummary ps =
        posterior_moments(s, t, StepCumHazard(), gauss_hermite_rule(60, 1), Centering::prior);
    CHECK(std::abs(ps.mean(0) - 2.0 / 3.0) < 1e-8);
    CHECK(std::abs(ps.covariance()(0, 0) - 1.0 / 3.0) < 1e-8);
  }
  // phi = 0 with a nonzero hazard: survival factor constant in a.
  const PosteriorSummary ps =
      posterior_moments(s, t, StepCumHazard({0.5, 1.5}, {0.3, 0.2}), gauss_hermite_rule(20, 1));
  CHECK(std::abs(ps.mean(0) - 2.0 / 3.0) < 1e-10);
  CHECK(std::abs(ps.covariance()(0, 0) - 1.0 / 3.0) < 1e-10);
}

TEST_CASE("no data posterior equals the prior") {
  th::Rng rng(3);
  const ModelSpec sp{0, 2, 0, 2, 3.0};
  ThetaParams t = th::random_theta(rng, sp);
  const SubjectRecord s =
      th::subject("i", {}, {}, VectorXd(), vec({1, 0.5}), VectorXd(), vec({0.3, -1}), 2.0, 0);
  const GaussianPosterior g = closed_form_gaussian_posterior(s, t);
  CHECK(g.mean.norm() == 0.0);
  CHECK((g.cov - t.sigma_a).norm() < 1e-12);
  const PosteriorSummary ps = posterior_moments(s, t, StepCumHazard(), gauss_hermite_rule(12, 2));
  CHECK(std::abs(ps.log_norm) < 1e-12);
  CHECK(ps.mean.norm() < 1e-12);
  CHECK((ps.second_moment - t.sigma_a).norm() < 1e-10);
}

TEST_CASE("diffuse prior limit of the Gaussian posterior") {
  MatrixXd v(2, 2);
  v << 1.0, 0.0, 1.0, 1.0;
  SubjectRecord s = th::subject("i", {0.5, 1.5, 2.5}, {0.3, 1.1, -0.4}, VectorXd(), vec({1, 0}), VectorXd(),
                                vec({0, 0}), 3.0, 0);
  s.xt_path = CovariatePath({0.0, 1.0}, v);
  ThetaParams t;
  t.sigma_y = 0.7;
  t.sigma_a = 1e6 * (MatrixXd(2, 2) << 1.0, 0.2, 0.2, 0.5).finished();
  t.beta = VectorXd();
  t.gamma = VectorXd();
  t.phi = vec({0, 0});
  MatrixXd xt(3, 2);
  xt << 1, 0, 1, 1, 1, 1;
  const MatrixXd limit = (xt.transpose() * xt / (0.7 * 0.7)).inverse();
  const GaussianPosterior g = closed_form_gaussian_posterior(s, t);
  CHECK((g.cov - limit).cwiseAbs().maxCoeff() / limit.cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("posterior with phi and one jump matches the grid oracle") {
  const SubjectRecord s = th::subject("i", {0.2, 0.9}, {0.4, 1.3}, vec({1}), vec({1}), vec({0.5}), vec({0.8}), 1.5, 1);
  ThetaParams t;
  t.sigma_y = 0.6;
  t.sigma_a = th::mat1(1.3);
  t.beta = vec({0.2});
  t.gamma = vec({0.4});
  t.phi = vec({1.1});
  const StepCumHazard lam({1.5}, {0.7});
  const auto grid = oracle::grid_integrate(
      [&](double a) { return oracle::log_g(vec({a}), s, t, lam); }, -10.0, 10.0, 200001);
  const PosteriorSummary ps = posterior_moments(s, t, lam, gauss_hermite_rule(30, 1));
  CHECK(std::abs(ps.mean(0) - grid.mean) < 1e-8);
  CHECK(std::abs(ps.covariance()(0, 0) - (grid.second - grid.mean * grid.mean)) < 1e-8);
  CHECK(std::abs(ps.log_norm - grid.log_integral) < 1e-8);
}

TEST_CASE("property: posterior covariance is PSD") {
  th::Rng rng(17);
  for (int rep = 0; rep < 40; ++rep) {
    const int d = th::uniform_int(rng, 1, 3);
    const ModelSpec sp{1, d, 1, d, 4.0};
    const Dataset data = th::random_dataset(rng, sp, {4, 6, 2, false});
    const ThetaParams t = th::random_theta(rng, sp, 0.5);
    const StepCumHazard lam = th::random_hazard(rng, data);
    const QuadRule rule = gauss_hermite_rule(d == 3 ? 8 : 15, d);
    for (const auto& s : data.subjects) {
      const PosteriorSummary pa = posterior_moments(s, t, lam, rule, Centering::adaptive);
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(pa.covariance());
      CHECK(es.eigenvalues().minCoeff() >= -1e-10);
      CHECK(std::isfinite(pa.log_norm));
    }
  }
}

TEST_CASE("property: adaptive and prior centering agree on well-conditioned subjects") {
  // Weak longitudinal information: posterior close to the prior in scale.
  th::Rng rng(19);
  for (int rep = 0; rep < 40; ++rep) {
    const ModelSpec sp{1, 1, 1, 1, 4.0};
    const Dataset data = th::random_dataset(rng, sp, {5, 2, 1, false});
    ThetaParams t = th::random_theta(rng, sp, 0.3);
    t.sigma_y = 2.0;
    t.sigma_a = th::mat1(th::unif(rng, 0.3, 1.0));
    const StepCumHazard lam = th::random_hazard(rng, data);
    const QuadRule rule = gauss_hermite_rule(30, 1);
    for (const auto& s : data.subjects) {
      const PosteriorSummary pa = posterior_moments(s, t, lam, rule, Centering::adaptive);
      const PosteriorSummary pp = posterior_moments(s, t, lam, rule, Centering::prior);
      CHECK(th::rel_err(pp.log_norm, pa.log_norm, 1.0) < 1e-6);
      CHECK(th::rel_err(pp.mean(0), pa.mean(0), 1.0) < 1e-6);
      CHECK(th::rel_err(pp.second_moment(0, 0), pa.second_moment(0, 0), 1.0) < 1e-6);
    }
  }
}

TEST_CASE("property: larger hazard jumps lower the normaliser when censored") {
  th::Rng rng(5);
  const ModelSpec sp{1, 1, 1, 1, 4.0};
  for (int rep = 0; rep < 50; ++rep) {
    Dataset data = th::random_dataset(rng, sp, {6, 3, 1, false});
    for (auto& s : data.subjects) s.delta = 0;
    data.subjects[0].delta = 1;
    const ThetaParams t = th::random_theta(rng, sp);
    const StepCumHazard lam = th::random_hazard(rng, data);
    std::vector<double> bigger = lam.jump_sizes();
    const std::size_t k = static_cast<std::size_t>(th::uniform_int(rng, 0, static_cast<int>(bigger.size()) - 1));
    bigger[k] *= 1.5;
    const StepCumHazard lam2(lam.jump_times(), bigger);
    const QuadRule rule = gauss_hermite_rule(20, 1);
    for (std::size_t i = 1; i < data.subjects.size(); ++i) {
      const auto& s = data.subjects[i];
      const double a = posterior_moments(s, t, lam, rule).log_norm;
      const double b = posterior_moments(s, t, lam2, rule).log_norm;
      CHECK(std::isfinite(a));
      if (lam.jump_times()[k] <= s.z)
        CHECK(b < a);
      else
        CHECK(b == a);
    }
  }
}

TEST_CASE("extra functionals and symmetric square root") {
  const SubjectRecord s = th::subject("i", {0.0}, {0.5}, VectorXd(), vec({1}), VectorXd(), vec({1}), 1.0, 0);
  const ThetaParams t = scalar_theta(1.0, 2.0, 0.0, 0.0);
  const PosteriorSummary ps = posterior_moments(s, t, StepCumHazard(), gauss_hermite_rule(20, 1), Centering::adaptive,
                                                {[](const VectorXd& a) { return a(0) * a(0) * a(0); }});
  REQUIRE(ps.extra.size() == 1);
  // Gaussian third moment: m^3 + 3 m v.
  const double m = ps.mean(0), v = ps.covariance()(0, 0);
  CHECK(std::abs(ps.extra[0] - (m * m * m + 3 * m * v)) < 1e-10);

  th::Rng rng(2);
  const MatrixXd a = th::random_spd(rng, 3);
  const MatrixXd r = symmetric_sqrt(a);
  CHECK((r - r.transpose()).norm() < 1e-14);
  CHECK((r * r - a).norm() < 1e-12);
}

TEST_CASE("mismatched rule dimension") {
  const SubjectRecord s = th::subject("i", {0.0}, {0.5}, VectorXd(), vec({1}), VectorXd(), vec({1}), 1.0, 0);
  CHECK_THROWS_AS(posterior_moments(s, scalar_theta(1, 1, 0, 0), StepCumHazard(), gauss_hermite_rule(5, 2)),
                  ParameterError);
}
