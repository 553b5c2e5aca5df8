#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "jointlab/error.hpp"

namespace jointlab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Absolute tolerance used when matching hazard jump times to follow-up times.
inline constexpr double kTimeTol = 1e-12;

struct ModelSpec {
  int p = 0;    // dim X(t)
  int d_a = 1;  // dim of the random effect and of X~(t)
  int r = 0;    // dim W(t)
  int s = 0;    // dim W~(t); must equal d_a
  double tau = 1.0;

  // Length of the flattened parameter vector
  // (sigma_y, upper triangle of Sigma_a, beta, gamma, phi).
  int theta_dim() const { return 1 + d_a * (d_a + 1) / 2 + p + r + s; }

  bool operator==(const ModelSpec&) const = default;
};

// Finite-dimensional parameter of the joint model.
struct ThetaParams {
  double sigma_y = 1.0;
  MatrixXd sigma_a;
  VectorXd beta;
  VectorXd gamma;
  VectorXd phi;

  // Flattened coordinates, ordered (sigma_y, vech(Sigma_a), beta, gamma, phi).
  // vech walks the upper triangle row by row, off-diagonals counted once.
  VectorXd to_vector() const;
  static ThetaParams from_vector(const VectorXd& v, const ModelSpec& spec);

  // Throws ParameterError when an invariant fails.
  void validate(const ModelSpec& spec) const;
};

// Human-readable coordinate labels matching ThetaParams::to_vector.
std::vector<std::string> theta_labels(const ModelSpec& spec);

// Nondecreasing right-continuous step function with positive jumps.
class StepCumHazard {
 public:
  StepCumHazard() = default;
  StepCumHazard(std::vector<double> jump_times, std::vector<double> jump_sizes);

  const std::vector<double>& jump_times() const { return times_; }
  const std::vector<double>& jump_sizes() const { return sizes_; }
  std::size_t size() const { return times_.size(); }
  bool empty() const { return times_.empty(); }

  // Lambda(t) = sum of jumps at times <= t.
  double at(double t) const;
  // Index of the jump at time t (within kTimeTol) or -1.
  std::ptrdiff_t find_jump(double t) const;
  // Prefix sums H[k] = jumps 0..k-1, length size()+1.
  std::vector<double> prefix_sums() const;

 private:
  std::vector<double> times_;
  std::vector<double> sizes_;
};

// Right-continuous piecewise-constant covariate process.
class CovariatePath {
 public:
  CovariatePath() = default;
  CovariatePath(std::vector<double> change_points, MatrixXd values);

  // Time-constant path with the given value on [0, inf).
  static CovariatePath constant(const VectorXd& value);
  // Zero-dimensional path (used when a covariate block is empty).
  static CovariatePath empty();

  int dim() const { return static_cast<int>(values_.cols()); }
  const std::vector<double>& change_points() const { return change_points_; }
  const MatrixXd& values() const { return values_; }

  // Row index in effect at time t (largest change point <= t). Requires t >= 0.
  std::size_t segment_at(double t) const;
  VectorXd value_at(double t) const { return values_.row(segment_at(t)).transpose(); }

 private:
  std::vector<double> change_points_{0.0};
  MatrixXd values_ = MatrixXd::Zero(1, 0);
};

// Evaluates the path at t, rejecting t outside [0, tau].
VectorXd eval_path(const CovariatePath& path, double t, double tau);

struct SubjectRecord {
  std::string id;
  std::vector<double> meas_times;
  VectorXd y;
  CovariatePath x_path;   // dim p
  CovariatePath xt_path;  // dim d_a
  CovariatePath w_path;   // dim r
  CovariatePath wt_path;  // dim s
  double z = 0.0;
  int delta = 0;

  int n_meas() const { return static_cast<int>(meas_times.size()); }
};

struct Dataset {
  ModelSpec spec;
  std::vector<SubjectRecord> subjects;

  int n() const { return static_cast<int>(subjects.size()); }
};

// Empty iff every invariant holds; each entry names the subject and rule.
std::vector<std::string> validate_dataset(const Dataset& data);

// Throws StructuralError listing all findings when validation fails.
void require_valid(const Dataset& data);

// Sorted distinct event times {Z_i : Delta_i = 1} with tie counts.
struct EventTimes {
  std::vector<double> times;
  std::vector<int> counts;
};
EventTimes distinct_event_times(const Dataset& data);

}  // namespace jointlab
