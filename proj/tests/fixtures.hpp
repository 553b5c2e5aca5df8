#pragma once

// Simulation-backed fixtures shared by the em, profile and acceptance tests.

#include "jointlab/sim.hpp"

namespace fx {

using namespace jointlab;

// Convergence tight enough that oracle comparisons see the optimum rather
// than the stopping rule. EM creeps along the intercept / random-intercept
// ridge, so the parameter tolerance matters most.
inline FitConfig tight_config(bool fix_phi_zero = false) {
  FitConfig c;
  c.fix_phi_zero = fix_phi_zero;
  c.tol_params = 1e-9;
  c.tol_loglik = 1e-14;
  c.max_iters = 20000;
  return c;
}

inline SimScenario decoupled_scenario(std::uint64_t seed) {
  SimScenario sc = default_scenario();
  sc.theta_0.phi.setZero();
  sc.seed = seed;
  return sc;
}

}  // namespace fx
