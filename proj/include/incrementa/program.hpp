#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "incrementa/dataset.hpp"
#include "incrementa/design.hpp"
#include "incrementa/incremental.hpp"

namespace incrementa {

/// Model basis b(X): a column subset of the covariates, raw or expanded to
/// per-column polynomial powers. Supports prediction-time covariate subsets.
struct BasisSpec {
  enum class Kind { raw, polynomial };
  Kind kind = Kind::raw;
  int degree = 1;              // used by the polynomial kind
  std::vector<int> columns;    // empty selects all covariate columns
  bool include_intercept = true;

  std::string describe() const;
};

Eigen::MatrixXd build_basis(const Dataset& data, const BasisSpec& spec);
Eigen::MatrixXd build_basis(const Eigen::MatrixXd& x, const BasisSpec& spec);

/// Constraint families supported by the approximating program. Fairness
/// thresholds use |row . beta| <= epsilon, linearized into two rows.
struct ConstraintSpec {
  enum class Kind { linear, statistical_parity, conditional_parity, positive_class_balance };
  Kind kind = Kind::linear;
  Eigen::MatrixXd C;  // linear kind
  Eigen::VectorXd d;  // linear kind
  double epsilon = 0.0;
  int level = 0;      // conditional-parity level of L

  static ConstraintSpec linear(Eigen::MatrixXd C, Eigen::VectorXd d);
  static ConstraintSpec statistical_parity(double epsilon);
  static ConstraintSpec conditional_parity(double epsilon, int level);
  static ConstraintSpec positive_class_balance(double epsilon);
};

/// Provenance of each assembled constraint row, used by inference to decide
/// which active rows are sample estimates.
struct ConstraintRowInfo {
  ConstraintSpec::Kind origin = ConstraintSpec::Kind::linear;
  int spec_index = -1;
  double sign = 1.0;  // +1 / -1 half of the |.| <= eps expansion
  int level = 0;
};

struct ProgramMeta {
  std::string loss;
  double delta = 1.0;
  std::string basis_desc;
  bool has_risk_const = false;
  double risk_const = 0.0;  // P_n of the beta-free term of the risk EIF
  std::vector<ConstraintRowInfo> row_info;
  std::vector<std::string> warnings;
};

struct SmoothEval {
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hess;
};

enum class ProgramKind { quadratic, smooth_convex };

/// Solver-ready approximating program. Quadratic kind minimizes
/// 0.5*b'Qb - c'b + lambda*|b|^2 subject to C b <= d; the smooth kind
/// carries value/grad/hess callables that already include the penalty.
struct ApproxProgram {
  ProgramKind kind = ProgramKind::quadratic;
  int k = 0;
  Eigen::MatrixXd Q;
  Eigen::VectorXd c;
  SmoothEval smooth;
  Eigen::MatrixXd C;
  Eigen::VectorXd d;
  double lambda = 0.0;
  ProgramMeta meta;
};

/// Single fairness row before the |.| <= eps expansion: group-0 mean of the
/// basis minus the group-1 mean (within the given level for the conditional
/// variant). Raises a degenerate-group error when a group is empty.
Eigen::RowVectorXd build_parity_rows(const Dataset& data, const BasisSpec& basis,
                                     const ConstraintSpec& variant);

/// Positive-class balance row (experimental): group means weighted by the
/// EIF pseudo-outcomes of 1{Y > 0} under the increment. A nonpositive
/// weighted normalizer raises an unstable-balance error.
Eigen::RowVectorXd build_positive_balance_rows(const Dataset& data, const NuisanceFit& nuis,
                                               Increment delta, const BasisSpec& basis);

/// Squared-error program: Q = P_n{b b'}, c = P_n{phi b}. The optional
/// square-transform pseudo-outcomes supply the beta-free risk constant.
ApproxProgram build_l2_program(const Dataset& data, const PseudoOutcomes& pseudo,
                               const BasisSpec& basis,
                               const std::vector<ConstraintSpec>& constraints, double lambda,
                               const PseudoOutcomes* pseudo_square = nullptr,
                               const NuisanceFit* nuis = nullptr);

/// Cross-entropy program for f = expit(b'beta). With clip01 (the default)
/// pseudo-outcomes are clipped to [0,1], keeping the objective convex.
ApproxProgram build_crossentropy_program(const Dataset& data, const PseudoOutcomes& pseudo,
                                         const BasisSpec& basis,
                                         const std::vector<ConstraintSpec>& constraints,
                                         double lambda, bool clip01 = true,
                                         const NuisanceFit* nuis = nullptr);

/// Value/gradient/Hessian of the penalized cross-entropy objective
/// P_n{log(1+e^eta) - phi eta} + lambda |beta|^2 over the given rows.
SmoothEval make_crossentropy_eval(Eigen::MatrixXd basis_rows, Eigen::VectorXd phi, double lambda);

/// Squared-logarithmic-error program under the log link
/// f = exp(b'beta) - 1, which is exactly quadratic: Q = P_n{b b'},
/// c = P_n{phi_log b}. The optional log1p_square pseudo-outcomes supply the
/// risk constant.
ApproxProgram build_msle_program(const Dataset& data, const PseudoOutcomes& pseudo_log,
                                 const BasisSpec& basis,
                                 const std::vector<ConstraintSpec>& constraints, double lambda,
                                 const PseudoOutcomes* pseudo_log_sq = nullptr,
                                 const NuisanceFit* nuis = nullptr);

/// One-step risk report: 0.5*b'Qb - c'b + risk_const for the quadratic kind,
/// the smooth objective otherwise.
double risk_estimate(const ApproxProgram& program, const Eigen::VectorXd& beta);

/// Outcome-scale predictions for a fitted coefficient vector.
Eigen::VectorXd predict_outcomes(const std::string& loss, const Eigen::MatrixXd& basis_rows,
                                 const Eigen::VectorXd& beta);

}  // namespace incrementa
