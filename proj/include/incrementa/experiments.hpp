#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "incrementa/dataset.hpp"
#include "incrementa/incremental.hpp"
#include "incrementa/nuisance.hpp"
#include "incrementa/program.hpp"

namespace incrementa {

enum class Dgp { illustration, simulation };

struct DgpSpec {
  Dgp name = Dgp::illustration;
  int n = 1000;
  Increment delta{1.0};
  double r = 0.0;  // corruption exponent, simulation study only
  SeedSpec seed;
};

/// Covariates X ~ U[0,10]; A ~ Bernoulli(expit(2.8 - 0.3 X));
/// Y = 1 + 0.75 X + 0.5 X^2 - 10 A + sqrt(X) Z. The second argument flips
/// the variance-X reading of the outcome noise to a standard-deviation-X
/// reading.
Dataset gen_illustration(int n, SeedSpec seed, bool noise_variance_reading = true);

/// F ~ Bernoulli(1/2); X1 ~ U[0,10]; X2 ~ N(4F-2, variance 2);
/// A ~ Bernoulli(expit(2.5 - 0.3 X1 - F X2)); Y = 0.5 sqrt(X1) + 2 X2 - 5 A
/// + N(0,1). Covariate columns are (x1, x2, f) with f designated sensitive.
Dataset gen_simulation(int n, SeedSpec seed);

/// Closed-form nuisance truths for the two processes (identity and square
/// transforms).
OracleNuisanceFns illustration_truth(bool noise_variance_reading = true);
OracleNuisanceFns simulation_truth();

/// The section-5 estimation setup shared by the studies and the CLI:
/// basis (1, X1, X2) and statistical parity at the given threshold.
BasisSpec simulation_basis();

/// Solves the true program by Monte Carlo: streams n_oracle fresh draws,
/// accumulates exact-nuisance moments (E[b b'], E[m_delta(X) b] with
/// m_delta = E[phi_Q | X], and the population fairness rows), solves, and
/// repeats on a second independent draw. The two solutions must agree within
/// 5e-3 per coordinate (otherwise an oracle-precision error asks for a
/// larger n_oracle); the certified average is returned.
Eigen::VectorXd oracle_beta(Dgp dgp, const BasisSpec& basis,
                            const std::vector<ConstraintSpec>& constraints, Increment delta,
                            SeedSpec seed, long long n_oracle = 1000000);

struct IllustrationRep {
  int rep = 0;
  double delta = 1.0;
  double mse_factual = 0.0;
  double mse_counterfactual = 0.0;
  double treated_frac_train = 0.0;
  double treated_frac_test = 0.0;
  Eigen::VectorXd beta;
};

struct Histogram {
  std::string label;
  double delta = 1.0;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<long> counts;
};

struct IllustrationResult {
  std::vector<IllustrationRep> reps;
  std::vector<Histogram> histograms;  // first replication only
  double runtime_seconds = 0.0;
};

/// Factual-versus-counterfactual comparison: the factual baseline is least
/// squares of Y on (1, X, X^2, A) with A imputed by the fitted propensity at
/// prediction time; the counterfactual model is the unconstrained
/// squared-error program on basis (1, X, X^2). Test outcomes are generated
/// under A* ~ Bernoulli(q(X; delta, pi)).
IllustrationResult run_illustration(int n, const std::vector<double>& deltas, int reps,
                                    SeedSpec seed);

struct RmseCell {
  int n = 0;
  double delta = 1.0;
  double r = 0.0;
  double rmse = 0.0;
  int reps_used = 0;
  int dropped = 0;
};

struct RmseStudyResult {
  std::vector<RmseCell> cells;
  std::map<double, Eigen::VectorXd> oracle;  // delta -> certified beta*
  double runtime_seconds = 0.0;
};

/// Corrupted-nuisance convergence study: per (n, delta, r) replicates the
/// squared-error + statistical-parity fit with oracle nuisances corrupted at
/// rate exponent r, and reports the root-mean-square error of beta-hat
/// against the certified oracle.
RmseStudyResult run_rmse_study(const std::vector<int>& n_set, const std::vector<double>& deltas,
                               const std::vector<double>& r_grid, int reps, double eps,
                               SeedSpec seed, long long n_oracle = 1000000,
                               bool per_observation_noise = false);

}  // namespace incrementa
