#pragma once

// Prepared-data versions of the EM building blocks, shared by em and profile.

#include <vector>

#include "jointlab/detail/engine.hpp"
#include "jointlab/em.hpp"

namespace jointlab::detail {

struct HazardSolve {
  std::vector<double> jumps;
  std::vector<NodePosterior> posts;  // at (theta, jumps)
  double loglik = 0.0;
  double residual = 0.0;
  int sweeps = 0;
  bool converged = false;
};

// Fixed point of the Breslow self-consistency map at fixed theta.
HazardSolve solve_hazard(const PreparedData& pd, const ThetaParams& theta, std::vector<double> start,
                         const Integrator& quad, double tol, int max_sweeps, int threads);

// d_k / (number at risk): the starting hazard.
std::vector<double> nelson_aalen_jumps(const PreparedData& pd);

// One self-consistency step from posteriors already computed at (theta, jumps).
std::vector<double> breslow_step(const PreparedData& pd, const std::vector<NodePosterior>& posts,
                                 const ThetaParams& theta);

}  // namespace jointlab::detail
