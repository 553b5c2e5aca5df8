#pragma once

// Small builders and random generators shared by the unit tests.

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "jointlab/model.hpp"

namespace th {

using namespace jointlab;
using Rng = std::mt19937_64;

inline VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

inline MatrixXd mat1(double v) { return MatrixXd::Constant(1, 1, v); }

// Subject with time-constant paths.
inline SubjectRecord subject(const std::string& id, std::vector<double> times, std::vector<double> y,
                             const VectorXd& x, const VectorXd& xt, const VectorXd& w, const VectorXd& wt, double z,
                             int delta) {
  SubjectRecord s;
  s.id = id;
  s.meas_times = std::move(times);
  s.y = Eigen::Map<VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  s.x_path = x.size() ? CovariatePath::constant(x) : CovariatePath::empty();
  s.xt_path = CovariatePath::constant(xt);
  s.w_path = w.size() ? CovariatePath::constant(w) : CovariatePath::empty();
  s.wt_path = wt.size() ? CovariatePath::constant(wt) : CovariatePath::empty();
  s.z = z;
  s.delta = delta;
  return s;
}

inline double unif(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline double normal(Rng& rng, double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng); }
inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

inline VectorXd normal_vec(Rng& rng, int n, double sd = 1.0) {
  VectorXd v(n);
  for (int k = 0; k < n; ++k) v(k) = normal(rng, sd);
  return v;
}

// Random right-continuous step path on [0, tau) with up to `max_changes` jumps.
inline CovariatePath random_path(Rng& rng, int dim, double tau, int max_changes, double sd = 0.7) {
  if (dim == 0) return CovariatePath::empty();
  const int k = uniform_int(rng, 0, max_changes);
  std::vector<double> cps{0.0};
  for (int j = 0; j < k; ++j) cps.push_back(unif(rng, 0.0, tau));
  std::sort(cps.begin(), cps.end());
  MatrixXd vals(static_cast<Eigen::Index>(cps.size()), dim);
  for (Eigen::Index r = 0; r < vals.rows(); ++r) vals.row(r) = normal_vec(rng, dim, sd).transpose();
  return CovariatePath(cps, vals);
}

inline MatrixXd random_spd(Rng& rng, int d, double scale = 1.0) {
  MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = normal(rng, 0.6);
  return scale * (a * a.transpose() / d + 0.3 * MatrixXd::Identity(d, d));
}

inline ThetaParams random_theta(Rng& rng, const ModelSpec& sp, double effect_sd = 0.5) {
  ThetaParams t;
  t.sigma_y = unif(rng, 0.4, 1.2);
  t.sigma_a = random_spd(rng, sp.d_a);
  t.beta = normal_vec(rng, sp.p, 1.0);
  t.gamma = normal_vec(rng, sp.r, effect_sd);
  t.phi = normal_vec(rng, sp.s, effect_sd);
  return t;
}

struct RandomDataOptions {
  int n = 12;
  int max_meas = 5;
  int max_changes = 2;
  bool ties = true;
};

// Arbitrary valid dataset (not drawn from the model): random paths,
// measurements strictly before z, some tied event times.
inline Dataset random_dataset(Rng& rng, const ModelSpec& sp, const RandomDataOptions& o = {}) {
  Dataset d;
  d.spec = sp;
  for (int i = 0; i < o.n; ++i) {
    SubjectRecord s;
    s.id = "s" + std::to_string(i);
    double z = unif(rng, 0.05 * sp.tau, sp.tau);
    if (o.ties && uniform_int(rng, 0, 3) == 0) z = std::ceil(z * 4.0 / sp.tau) * sp.tau / 4.0;
    s.z = std::min(z, sp.tau);
    s.delta = uniform_int(rng, 0, 2) > 0 ? 1 : 0;
    const int m = uniform_int(rng, 0, o.max_meas);
    std::vector<double> ts;
    for (int j = 0; j < m; ++j) ts.push_back(unif(rng, 0.0, s.z));
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    s.meas_times = ts;
    s.y = normal_vec(rng, static_cast<int>(ts.size()), 1.5);
    s.x_path = random_path(rng, sp.p, sp.tau, o.max_changes);
    s.xt_path = random_path(rng, sp.d_a, sp.tau, o.max_changes);
    s.w_path = random_path(rng, sp.r, sp.tau, o.max_changes);
    s.wt_path = random_path(rng, sp.s, sp.tau, o.max_changes);
    d.subjects.push_back(std::move(s));
  }
  d.subjects.front().delta = 1;
  return d;
}

// Hazard with a random positive jump at every distinct event time.
inline StepCumHazard random_hazard(Rng& rng, const Dataset& d, double lo = 0.02, double hi = 0.3) {
  const EventTimes ev = distinct_event_times(d);
  std::vector<double> sizes;
  for (std::size_t k = 0; k < ev.times.size(); ++k) sizes.push_back(unif(rng, lo, hi));
  return StepCumHazard(ev.times, sizes);
}

inline double rel_err(double a, double b, double floor = 1e-300) {
  return std::abs(a - b) / std::max({std::abs(b), floor});
}

}  // namespace th
