#pragma once

#include <Eigen/Dense>
#include <vector>

#include "incrementa/dataset.hpp"

namespace incrementa {

/// Design specification for the built-in learners: an intercept plus
/// per-column powers 1..degree of the selected covariates (no cross terms).
/// degree 0 with intercept gives the intercept-only design.
struct DesignSpec {
  std::vector<int> columns;  // empty means all covariate columns
  int degree = 1;
  bool intercept = true;

  static DesignSpec intercept_only() { return DesignSpec{{}, 0, true}; }
};

/// Expands `spec` against the covariate matrix of `data`.
Eigen::MatrixXd build_design(const Dataset& data, const DesignSpec& spec);

/// Same expansion for an externally supplied covariate matrix (used when
/// predicting at new points).
Eigen::MatrixXd build_design(const Eigen::MatrixXd& x, const DesignSpec& spec);

}  // namespace incrementa
