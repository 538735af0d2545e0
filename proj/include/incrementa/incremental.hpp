#pragma once

#include <Eigen/Dense>
#include <limits>

#include "incrementa/dataset.hpp"
#include "incrementa/nuisance.hpp"
#include "incrementa/transforms.hpp"

namespace incrementa {

/// Odds multiplier delta in [0, inf] defining the incremental intervention.
/// The endpoints 0 and inf are the deterministic interventions A=0 and A=1
/// and require positivity, which here means the nuisance clip is active.
struct Increment {
  double delta = 1.0;

  static Increment all_control() { return {0.0}; }
  static Increment all_treated() { return {std::numeric_limits<double>::infinity()}; }
  bool is_zero() const { return delta == 0.0; }
  bool is_infinite() const { return std::isinf(delta); }
};

/// Shifted propensity q = delta*pi / (delta*pi + 1 - pi). Monotone in delta,
/// equal to pi at delta=1, 0 at delta=0, 1 at delta=inf.
double q_shift(double pi1, Increment delta);

/// Per-observation uncentered EIF values for E{transform(Y)^{Q(delta)}} at a
/// given increment.
struct PseudoOutcomes {
  Eigen::VectorXd phi;
  Increment delta;
  TransformTag tag = TransformTag::identity;

  double mean() const { return phi.mean(); }
};

/// Uncentered EIF of the incremental mean, applied to transform(Y):
///   phi_Q = (d*pi1*phi1 + pi0*phi0) / (d*pi1 + pi0)
///           + d*(mu1 - mu0)*(A - pi1) / (d*pi1 + pi0)^2,
/// with phi_a = 1(A=a)/pi_a * (t(Y) - mu_a) + mu_a. delta=0 and delta=inf
/// return phi0 / phi1 exactly and require an active clip.
PseudoOutcomes pseudo_outcomes(const Dataset& data, const NuisanceFit& nuis, Increment delta,
                               TransformTag tag = TransformTag::identity);

/// Plug-in estimate of the incremental mean: the sample average of
/// (d*pi*mu1 + (1-pi)*mu0) / (d*pi + 1 - pi).
double mean_plugin(const Dataset& data, const NuisanceFit& nuis, Increment delta,
                   TransformTag tag = TransformTag::identity);

/// Inverse-probability-weighted estimate: the sample average of
/// t(Y)*(d*A + 1 - A) / (d*pi + 1 - pi).
double mean_ipw(const Dataset& data, const NuisanceFit& nuis, Increment delta,
                TransformTag tag = TransformTag::identity);

/// One-step (EIF) estimate: the sample average of the pseudo-outcomes.
double mean_eif(const Dataset& data, const NuisanceFit& nuis, Increment delta,
                TransformTag tag = TransformTag::identity);

}  // namespace incrementa
