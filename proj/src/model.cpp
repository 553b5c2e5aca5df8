#include "jointlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace jointlab {

VectorXd ThetaParams::to_vector() const {
  const int d = static_cast<int>(sigma_a.rows());
  VectorXd v(1 + d * (d + 1) / 2 + beta.size() + gamma.size() + phi.size());
  int k = 0;
  v(k++) = sigma_y;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) v(k++) = sigma_a(i, j);
  v.segment(k, beta.size()) = beta;
  k += static_cast<int>(beta.size());
  v.segment(k, gamma.size()) = gamma;
  k += static_cast<int>(gamma.size());
  v.segment(k, phi.size()) = phi;
  return v;
}

ThetaParams ThetaParams::from_vector(const VectorXd& v, const ModelSpec& spec) {
  if (v.size() != spec.theta_dim())
    throw ParameterError("theta vector has length " + std::to_string(v.size()) + ", expected " +
                         std::to_string(spec.theta_dim()));
  ThetaParams t;
  int k = 0;
  t.sigma_y = v(k++);
  t.sigma_a.resize(spec.d_a, spec.d_a);
  for (int i = 0; i < spec.d_a; ++i)
    for (int j = i; j < spec.d_a; ++j) {
      t.sigma_a(i, j) = v(k);
      t.sigma_a(j, i) = v(k);
      ++k;
    }
  t.beta = v.segment(k, spec.p);
  k += spec.p;
  t.gamma = v.segment(k, spec.r);
  k += spec.r;
  t.phi = v.segment(k, spec.s);
  return t;
}

void ThetaParams::validate(const ModelSpec& spec) const {
  if (!(sigma_y > 0.0) || !std::isfinite(sigma_y)) throw ParameterError("sigma_y must be positive and finite");
  if (sigma_a.rows() != spec.d_a || sigma_a.cols() != spec.d_a)
    throw ParameterError("sigma_a must be d_a x d_a");
  if (beta.size() != spec.p) throw ParameterError("beta length does not match p");
  if (gamma.size() != spec.r) throw ParameterError("gamma length does not match r");
  if (phi.size() != spec.s) throw ParameterError("phi length does not match s");
  if (!sigma_a.allFinite() || !beta.allFinite() || !gamma.allFinite() || !phi.allFinite())
    throw ParameterError("theta contains non-finite entries");
  if ((sigma_a - sigma_a.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw ParameterError("sigma_a is not symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sigma_a, Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) throw ParameterError("sigma_a is not positive definite");
}

std::vector<std::string> theta_labels(const ModelSpec& spec) {
  std::vector<std::string> out{"sigma_y"};
  for (int i = 0; i < spec.d_a; ++i)
    for (int j = i; j < spec.d_a; ++j)
      out.push_back("sigma_a[" + std::to_string(i) + "," + std::to_string(j) + "]");
  for (int i = 0; i < spec.p; ++i) out.push_back("beta[" + std::to_string(i) + "]");
  for (int i = 0; i < spec.r; ++i) out.push_back("gamma[" + std::to_string(i) + "]");
  for (int i = 0; i < spec.s; ++i) out.push_back("phi[" + std::to_string(i) + "]");
  return out;
}

// ---------------------------------------------------------------------------
// StepCumHazard

StepCumHazard::StepCumHazard(std::vector<double> jump_times, std::vector<double> jump_sizes)
    : times_(std::move(jump_times)), sizes_(std::move(jump_sizes)) {
  if (times_.size() != sizes_.size()) throw ParameterError("hazard: jump_times and jump_sizes differ in length");
  for (std::size_t k = 0; k < times_.size(); ++k) {
    if (!std::isfinite(times_[k]) || times_[k] < 0.0) throw ParameterError("hazard: jump times must be finite and >= 0");
    if (k > 0 && !(times_[k] > times_[k - 1])) throw ParameterError("hazard: jump times must be strictly increasing");
    if (!std::isfinite(sizes_[k]) || !(sizes_[k] > 0.0))
      throw ParameterError("hazard: jump sizes must be finite and positive");
  }
}

double StepCumHazard::at(double t) const {
  const auto end = std::upper_bound(times_.begin(), times_.end(), t);
  double acc = 0.0;
  for (auto it = times_.begin(); it != end; ++it) acc += sizes_[static_cast<std::size_t>(it - times_.begin())];
  return acc;
}

std::ptrdiff_t StepCumHazard::find_jump(double t) const {
  auto it = std::lower_bound(times_.begin(), times_.end(), t - kTimeTol);
  if (it != times_.end() && std::abs(*it - t) <= kTimeTol) return it - times_.begin();
  return -1;
}

std::vector<double> StepCumHazard::prefix_sums() const {
  std::vector<double> h(times_.size() + 1, 0.0);
  for (std::size_t k = 0; k < times_.size(); ++k) h[k + 1] = h[k] + sizes_[k];
  return h;
}

// ---------------------------------------------------------------------------
// CovariatePath

CovariatePath::CovariatePath(std::vector<double> change_points, MatrixXd values)
    : change_points_(std::move(change_points)), values_(std::move(values)) {
  if (change_points_.empty()) throw ParameterError("path: needs at least one change point");
  if (change_points_.front() != 0.0) throw ParameterError("path: first change point must be 0");
  if (static_cast<Eigen::Index>(change_points_.size()) != values_.rows())
    throw ParameterError("path: one value row per change point required");
  for (std::size_t k = 1; k < change_points_.size(); ++k)
    if (change_points_[k] < change_points_[k - 1]) throw ParameterError("path: change points must be nondecreasing");
  if (!values_.allFinite()) throw ParameterError("path: values must be finite");
}

CovariatePath CovariatePath::constant(const VectorXd& value) { return CovariatePath({0.0}, value.transpose()); }

CovariatePath CovariatePath::empty() { return CovariatePath({0.0}, MatrixXd::Zero(1, 0)); }

std::size_t CovariatePath::segment_at(double t) const {
  if (t < 0.0) throw DomainError("path evaluated at negative time");
  // Last change point <= t; duplicates resolve to the later row.
  auto it = std::upper_bound(change_points_.begin(), change_points_.end(), t);
  return static_cast<std::size_t>(it - change_points_.begin()) - 1;
}

VectorXd eval_path(const CovariatePath& path, double t, double tau) {
  if (!(t >= 0.0 && t <= tau))
    throw DomainError("path evaluated at t=" + std::to_string(t) + " outside [0, " + std::to_string(tau) + "]");
  return path.value_at(t);
}

// ---------------------------------------------------------------------------
// Dataset validation

std::vector<std::string> validate_dataset(const Dataset& data) {
  std::vector<std::string> out;
  const ModelSpec& sp = data.spec;
  if (sp.p < 0 || sp.r < 0 || sp.s < 0) out.emplace_back("spec: dimensions must be nonnegative");
  if (sp.d_a < 1) out.emplace_back("spec: d_a must be at least 1");
  if (sp.s != sp.d_a) out.emplace_back("spec: s (length of phi) must equal d_a");
  if (!(sp.tau > 0.0) || !std::isfinite(sp.tau)) out.emplace_back("spec: tau must be positive");
  if (data.subjects.empty()) out.emplace_back("dataset: no subjects");

  std::map<std::string, int> seen;
  bool any_event = false;
  for (const auto& s : data.subjects) {
    const std::string tag = subject_tag(s.id);
    if (++seen[s.id] == 2) out.push_back(tag + "duplicate subject id");
    auto dim_check = [&](const CovariatePath& path, int want, const char* name) {
      if (path.dim() != want)
        out.push_back(tag + name + " path has dimension " + std::to_string(path.dim()) + ", expected " +
                      std::to_string(want));
    };
    dim_check(s.x_path, sp.p, "x");
    dim_check(s.xt_path, sp.d_a, "xt");
    dim_check(s.w_path, sp.r, "w");
    dim_check(s.wt_path, sp.s, "wt");
    if (!(s.z > 0.0) || !std::isfinite(s.z)) out.push_back(tag + "follow-up time must be positive");
    if (s.z > sp.tau) out.push_back(tag + "follow-up time exceeds tau");
    if (s.delta != 0 && s.delta != 1) out.push_back(tag + "delta must be 0 or 1");
    if (s.delta == 1) any_event = true;
    if (static_cast<Eigen::Index>(s.meas_times.size()) != s.y.size())
      out.push_back(tag + "meas_times and y differ in length");
    if (!s.y.allFinite()) out.push_back(tag + "non-finite response");
    for (std::size_t k = 0; k < s.meas_times.size(); ++k) {
      if (s.meas_times[k] < 0.0) out.push_back(tag + "negative measurement time");
      if (k > 0 && !(s.meas_times[k] > s.meas_times[k - 1]))
        out.push_back(tag + "measurement times not strictly increasing");
      if (s.meas_times[k] >= s.z) {
        out.push_back(tag + "measurement at or after follow-up time");
        break;
      }
    }
  }
  if (!data.subjects.empty() && !any_event) out.emplace_back("dataset: no observed events");
  return out;
}

void require_valid(const Dataset& data) {
  const auto findings = validate_dataset(data);
  if (findings.empty()) return;
  std::ostringstream os;
  os << "invalid dataset:";
  for (const auto& f : findings) os << "\n  " << f;
  throw StructuralError(os.str());
}

EventTimes distinct_event_times(const Dataset& data) {
  std::vector<double> ev;
  for (const auto& s : data.subjects)
    if (s.delta == 1) ev.push_back(s.z);
  std::sort(ev.begin(), ev.end());
  EventTimes out;
  for (double t : ev) {
    if (!out.times.empty() && t == out.times.back()) {
      ++out.counts.back();
    } else {
      out.times.push_back(t);
      out.counts.push_back(1);
    }
  }
  return out;
}

}  // namespace jointlab
