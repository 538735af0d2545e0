#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "incrementa/program.hpp"
#include "incrementa/rng.hpp"
#include "incrementa/solver.hpp"

namespace incrementa {

/// Covariance estimate for the fitted coefficients (already divided by n).
struct InferenceResult {
  Eigen::MatrixXd cov;
  Eigen::VectorXd se;
  std::string method;           // sandwich_linear | sandwich_fixed | bootstrap
  Eigen::MatrixXd upsilon_cov;  // sandwich_linear: covariance of the stacked
                                // influence vector (gradient block, then
                                // sign-flipped active-row block)
  bool licq_ok = true;
  std::vector<int> sc_flags;
  int dropped_replicates = 0;   // bootstrap only
  std::vector<std::string> warnings;
};

/// Closed-form asymptotics for quadratic programs with linear, possibly
/// estimated, constraints. The bordered KKT matrix
///   M = [[Q + 2 lambda I, C_ac'], [C_ac, 0]]
/// maps the stacked influence vector
///   u = [grad deviations + sum_j gamma_j row-influence; row-influence . beta]
/// to beta deviations; cov(beta) = A cov(u) A' / n with A the beta rows of
/// M^{-1}.
///
/// per_obs_grad holds one gradient contribution per observation (for the
/// squared-error program, b b'beta - phi b). per_obs_rows holds, for each
/// active constraint in result.active order, the n x k per-observation
/// influence contributions of that estimated row (all zeros for
/// deterministic rows).
///
/// Refused when strict complementarity looks violated (use the bootstrap) or
/// when the active rows fail the linear-independence proxy.
InferenceResult sandwich_linear(const ApproxProgram& program, const SolveResult& result,
                                const Eigen::MatrixXd& per_obs_grad,
                                const std::vector<Eigen::MatrixXd>& per_obs_rows);

/// Fixed-feasible-set sandwich: Sigma = H var_phi_R H', bordered matrix
/// [[H, C_ac'], [C_ac, 0]] (linear constraints contribute no curvature),
/// cov = K Sigma K' / n with K the top-left block of the inverse.
InferenceResult sandwich_fixed(const ApproxProgram& program, const SolveResult& result,
                               double var_phi_r, const Eigen::MatrixXd& hessian, int n);

/// Nonparametric row-resampling bootstrap with nuisances held fixed.
/// `resolve` rebuilds and re-solves the program for a resampled index
/// multiset, returning the coefficients or nullopt for an infeasible
/// replicate. Replicates use per-index RNG streams and run in parallel;
/// more than 10% dropped replicates is a failure.
InferenceResult bootstrap(const std::function<std::optional<Eigen::VectorXd>(
                              const std::vector<int>&)>& resolve,
                          int n, int B, SeedSpec seed);

/// Per-observation influence pieces for a fitted quadratic program:
/// gradient block (b b'beta - phi b) and the ratio-functional influence of
/// every active estimated constraint row. Refuses positive-class-balance
/// rows (no inference guarantees).
struct QuadraticInfluence {
  Eigen::MatrixXd per_obs_grad;
  std::vector<Eigen::MatrixXd> per_obs_rows;
};

QuadraticInfluence quadratic_influence(const Dataset& data, const Eigen::MatrixXd& basis,
                                       const Eigen::VectorXd& phi, const ApproxProgram& program,
                                       const SolveResult& result);

/// sandwich_linear with the influence pieces assembled from the program
/// metadata.
InferenceResult sandwich_for_quadratic(const Dataset& data, const Eigen::MatrixXd& basis,
                                       const Eigen::VectorXd& phi, const ApproxProgram& program,
                                       const SolveResult& result);

/// Row-resampling bootstrap for a fitted quadratic program: resamples
/// (phi_i, b_i, F_i, L_i) jointly, rebuilds Q, c and the constraint rows,
/// and re-solves. balance_weights supplies the fixed pseudo-weights when a
/// positive-class-balance constraint is present.
InferenceResult bootstrap_quadratic(const Dataset& data, const Eigen::MatrixXd& basis,
                                    const Eigen::VectorXd& phi,
                                    const std::vector<ConstraintSpec>& constraints, double lambda,
                                    int B, SeedSpec seed,
                                    const Eigen::VectorXd* balance_weights = nullptr);

/// Same resampling for the cross-entropy program; phi is clipped to [0,1]
/// when clip01 is set, matching the program builder.
InferenceResult bootstrap_crossentropy(const Dataset& data, const Eigen::MatrixXd& basis,
                                       const Eigen::VectorXd& phi,
                                       const std::vector<ConstraintSpec>& constraints,
                                       double lambda, bool clip01, int B, SeedSpec seed,
                                       const Eigen::VectorXd* balance_weights = nullptr);

}  // namespace incrementa
