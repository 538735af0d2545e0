#include "incrementa/incremental.hpp"

#include <cmath>

#include "incrementa/errors.hpp"

namespace incrementa {

namespace {

void check_delta(Increment delta) {
  if (std::isnan(delta.delta) || delta.delta < 0.0)
    throw_config("argument", "delta must lie in [0, inf]");
}

void require_positivity(const NuisanceFit& nuis, Increment delta) {
  if ((delta.is_zero() || delta.is_infinite()) && nuis.clip() <= 0.0)
    throw_config("configuration",
                 "delta = 0 or inf requires positivity; enable a positive propensity clip");
}

}  // namespace

double q_shift(double pi1, Increment delta) {
  check_delta(delta);
  if (!(pi1 > 0.0 && pi1 < 1.0))
    throw_numeric("domain", "q_shift requires pi1 in (0,1), got " + std::to_string(pi1));
  if (delta.is_zero()) return 0.0;
  if (delta.is_infinite()) return 1.0;
  return delta.delta * pi1 / (delta.delta * pi1 + 1.0 - pi1);
}

PseudoOutcomes pseudo_outcomes(const Dataset& data, const NuisanceFit& nuis, Increment delta,
                               TransformTag tag) {
  check_delta(delta);
  require_positivity(nuis, delta);
  const int n = data.n();
  if (nuis.n() != n) throw_config("argument", "nuisance fit length does not match dataset");
  const Eigen::VectorXd& mu0 = nuis.mu0(tag);
  const Eigen::VectorXd& mu1 = nuis.mu1(tag);

  PseudoOutcomes out;
  out.delta = delta;
  out.tag = tag;
  out.phi.resize(n);
  const double d = delta.delta;
  for (int i = 0; i < n; ++i) {
    const double ty = apply_transform(tag, data.y()(i));
    const double pi1 = nuis.pi1()(i);
    const double pi0 = 1.0 - pi1;
    const int a = data.a()[i];
    const double phi0 = (a == 0 ? (ty - mu0(i)) / pi0 : 0.0) + mu0(i);
    const double phi1 = (a == 1 ? (ty - mu1(i)) / pi1 : 0.0) + mu1(i);
    if (delta.is_zero()) {
      out.phi(i) = phi0;
    } else if (delta.is_infinite()) {
      out.phi(i) = phi1;
    } else {
      const double denom = d * pi1 + pi0;
      out.phi(i) = (d * pi1 * phi1 + pi0 * phi0) / denom +
                   d * (mu1(i) - mu0(i)) * (a - pi1) / (denom * denom);
    }
    if (!std::isfinite(out.phi(i)))
      throw_numeric("pseudo-outcome", "non-finite pseudo-outcome at row " + std::to_string(i));
  }
  return out;
}

double mean_plugin(const Dataset& data, const NuisanceFit& nuis, Increment delta,
                   TransformTag tag) {
  check_delta(delta);
  require_positivity(nuis, delta);
  const Eigen::VectorXd& mu0 = nuis.mu0(tag);
  const Eigen::VectorXd& mu1 = nuis.mu1(tag);
  if (delta.is_zero()) return mu0.mean();
  if (delta.is_infinite()) return mu1.mean();
  const double d = delta.delta;
  double sum = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    const double pi1 = nuis.pi1()(i);
    sum += (d * pi1 * mu1(i) + (1.0 - pi1) * mu0(i)) / (d * pi1 + 1.0 - pi1);
  }
  return sum / data.n();
}

double mean_ipw(const Dataset& data, const NuisanceFit& nuis, Increment delta, TransformTag tag) {
  check_delta(delta);
  require_positivity(nuis, delta);
  const double d = delta.delta;
  double sum = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    const double ty = apply_transform(tag, data.y()(i));
    const double pi1 = nuis.pi1()(i);
    const int a = data.a()[i];
    if (delta.is_zero()) {
      sum += a == 0 ? ty / (1.0 - pi1) : 0.0;
    } else if (delta.is_infinite()) {
      sum += a == 1 ? ty / pi1 : 0.0;
    } else {
      sum += ty * (d * a + 1.0 - a) / (d * pi1 + 1.0 - pi1);
    }
  }
  return sum / data.n();
}

double mean_eif(const Dataset& data, const NuisanceFit& nuis, Increment delta, TransformTag tag) {
  return pseudo_outcomes(data, nuis, delta, tag).mean();
}

}  // namespace incrementa
