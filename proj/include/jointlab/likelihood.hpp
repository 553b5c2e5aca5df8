#pragma once

#include <functional>

#include "jointlab/model.hpp"
#include "jointlab/quadrature.hpp"

namespace jointlab {

// Integration settings shared by every a-integral.
struct Integrator {
  QuadRule rule;
  Centering centering = Centering::adaptive;

  static Integrator make(int points, int dim, bool adaptive = true) {
    return {gauss_hermite_rule(points, dim), adaptive ? Centering::adaptive : Centering::prior};
  }
};

// G(a, O; theta, Lambda): Gaussian density of Y given a, the event-time hazard
// multiplier, the survival factor and the N(0, Sigma_a) density at a. The
// hazard jump Lambda{Z} itself is not part of G.
double complete_data_kernel(const VectorXd& a, const SubjectRecord& subj, const ThetaParams& theta,
                            const StepCumHazard& lam);
double log_complete_data_kernel(const VectorXd& a, const SubjectRecord& subj, const ThetaParams& theta,
                                const StepCumHazard& lam);

// log of  Lambda{Z}^Delta * integral of G over a.
double subject_loglik(const SubjectRecord& subj, const ThetaParams& theta, const StepCumHazard& lam,
                      const Integrator& quad);

// Sum of subject contributions. The sum is formed in an order-independent
// way, so permuting subjects gives a bit-identical result.
double total_loglik(const Dataset& data, const ThetaParams& theta, const StepCumHazard& lam, const Integrator& quad,
                    int threads = 1);

// Posterior-expected hazard multiplier at time z:
// E[exp{(phi o W~(z))'a + W(z)'gamma} | O].
double q_weight(double z, const SubjectRecord& subj, const ThetaParams& theta, const StepCumHazard& lam,
                const Integrator& quad, double tau);

// Gradient of subject_loglik in theta at fixed Lambda, coordinates as in
// ThetaParams::to_vector.
VectorXd score_theta(const SubjectRecord& subj, const ThetaParams& theta, const StepCumHazard& lam,
                     const Integrator& quad);

// A bounded-variation direction on [0, tau] for perturbing Lambda.
using HazardDirection = std::function<double(double)>;

inline HazardDirection constant_direction(double c) {
  return [c](double) { return c; };
}
inline HazardDirection indicator_upto(double t0) {
  return [t0](double t) { return t <= t0 ? 1.0 : 0.0; };
}

// d/de subject_loglik(theta, Lambda_e) at e = 0, where dLambda_e = (1 + e h2) dLambda.
double score_lambda(const SubjectRecord& subj, const ThetaParams& theta, const StepCumHazard& lam,
                    const HazardDirection& h2, const Integrator& quad);

// Lambda_e with jumps scaled by (1 + e h2(t_k)).
StepCumHazard perturb_hazard(const StepCumHazard& lam, const HazardDirection& h2, double eps);

}  // namespace jointlab
