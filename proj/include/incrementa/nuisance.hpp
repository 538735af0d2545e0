#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "incrementa/dataset.hpp"
#include "incrementa/design.hpp"
#include "incrementa/rng.hpp"
#include "incrementa/transforms.hpp"

namespace incrementa {

/// Per-observation nuisance estimates eta = (pi_a, mu_a per transform),
/// fold-tagged; predictions are out-of-fold whenever the fold count is >= 2.
/// pi1 is clipped into [clip, 1-clip] at construction. Immutable afterwards.
class NuisanceFit {
 public:
  NuisanceFit(Eigen::VectorXd pi1_raw,
              std::map<TransformTag, std::pair<Eigen::VectorXd, Eigen::VectorXd>> mu,
              std::vector<int> fold_of, double clip,
              std::vector<std::string> warnings = {});

  int n() const { return static_cast<int>(pi1_.size()); }
  const Eigen::VectorXd& pi1() const { return pi1_; }
  double clip() const { return clip_; }
  const std::vector<int>& fold_of() const { return fold_of_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  bool has(TransformTag tag) const { return mu_.count(tag) > 0; }
  const Eigen::VectorXd& mu0(TransformTag tag) const;
  const Eigen::VectorXd& mu1(TransformTag tag) const;

 private:
  Eigen::VectorXd pi1_;
  std::map<TransformTag, std::pair<Eigen::VectorXd, Eigen::VectorXd>> mu_;
  std::vector<int> fold_of_;
  double clip_;
  std::vector<std::string> warnings_;
};

struct PropensityFit {
  Eigen::VectorXd pi1_raw;                 // out-of-fold expit predictions, in (0,1)
  std::vector<Eigen::VectorXd> fold_coefs; // one coefficient vector per fold
  std::vector<std::string> warnings;
};

struct OutcomeFit {
  Eigen::VectorXd pred;
  std::vector<Eigen::VectorXd> fold_coefs;
  std::vector<std::string> warnings;
};

/// Logistic regression of A on the design, by damped iteratively-reweighted
/// least squares, run per training fold; predictions are out-of-fold when the
/// assignment has >= 2 folds. Columns are internally rescaled to unit RMS;
/// convergence is declared at mean-log-likelihood gradient max-norm <= 1e-9.
/// Rank-deficient training designs raise a singularity error; a coefficient
/// norm above 1e4 is treated as separation (warning, predictions kept).
PropensityFit fit_propensity_logistic(const Dataset& data, const DesignSpec& features,
                                      const std::vector<int>& folds);

/// Out-of-fold least squares of transform(Y) on the design using rows with
/// A == arm only. Requires at least as many arm rows as design columns in
/// every training fold. Rank deficiency falls back to ridge with
/// lambda_reg = 1e-8 * trace and a warning; otherwise the solve is refined
/// until the relative normal-equation residual is <= 1e-10.
OutcomeFit fit_outcome_ls(const Dataset& data, TransformTag transform, int arm,
                          const DesignSpec& features, const std::vector<int>& folds);

/// Closed-form nuisance truth for a data-generating process: pi1(x) and
/// mu(tag)(x, a) evaluated at covariate rows.
struct OracleNuisanceFns {
  std::function<double(const Eigen::RowVectorXd&)> pi1;
  std::map<TransformTag, std::function<double(const Eigen::RowVectorXd&, int)>> mu;
};

struct CorruptionOptions {
  bool per_observation = false;  // default: one scalar draw shared by all rows
  double clip = 1e-3;
};

/// Noise-corrupted oracle nuisances for the rate experiments:
/// pi_hat = expit(logit(pi) + eps_pi), mu_hat_a = mu_a + eps_mu with
/// eps ~ N(n^-r, n^-2r). One eps_pi and one eps_mu are drawn per call (the
/// shared-scalar construction giving ||pi_hat - pi|| = O(n^-r)); the
/// per-observation mode draws row-wise instead. Draw order: eps_pi first,
/// then eps_mu (row-major within each when per-observation).
NuisanceFit corrupted_oracle_nuisances(const Dataset& data, const OracleNuisanceFns& truth,
                                       double r, SeedSpec seed,
                                       const CorruptionOptions& opts = {});

/// Evaluates `truth` exactly at the data rows (no corruption).
NuisanceFit exact_nuisances(const Dataset& data, const OracleNuisanceFns& truth,
                            const std::vector<TransformTag>& tags, double clip = 1e-3);

struct NuisanceConfig {
  DesignSpec propensity_design;
  DesignSpec outcome_design;
  std::vector<TransformTag> transforms = {TransformTag::identity};
  int folds = 2;
  double clip = 1e-3;
  SeedSpec seed;
};

/// Convenience pipeline: split folds, fit the propensity and the per-arm
/// outcome regressions for every requested transform, assemble a NuisanceFit.
NuisanceFit fit_nuisances(const Dataset& data, const NuisanceConfig& config);

/// Side-channel import: CSV with header pi1,mu0_<tag>,mu1_<tag>,... aligned
/// with the dataset row order.
NuisanceFit import_nuisance_csv(const std::string& path, int n, double clip);

}  // namespace incrementa
