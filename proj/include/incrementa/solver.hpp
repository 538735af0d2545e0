#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "incrementa/program.hpp"

namespace incrementa {

enum class SolveStatus { optimal, infeasible, max_iter };

struct SolveOptions {
  double tol = 1e-8;         // KKT residual target for quadratic programs
  double tol_smooth = 1e-7;  // KKT residual target for smooth programs
  double tol_act = 1e-7;     // activity detection for J0
  int max_outer = 200;       // smooth-solver outer iteration cap
};

/// Solution certificate: optimum, multipliers, active set and the maximal
/// KKT violation (stationarity, primal feasibility, dual feasibility,
/// complementarity).
struct SolveResult {
  Eigen::VectorXd beta;
  Eigen::VectorXd gamma;    // one multiplier per constraint row, >= 0
  std::vector<int> active;  // J0 = {j : |C_j beta - d_j| <= tol_act}
  double kkt_residual = 0.0;
  int iterations = 0;
  SolveStatus status = SolveStatus::optimal;
  double objective = 0.0;
  /// Constraints j with both |gamma_j| < 10 tol and |C_j beta - d_j| < 10 tol:
  /// strict complementarity is doubtful there, which the closed-form
  /// asymptotics assume.
  std::vector<int> sc_flags;
  std::vector<std::string> warnings;
};

/// Minimizes 0.5 b'Qb - c'b + lambda |b|^2 subject to C b <= d by a primal
/// active-set iteration with a Phase-1 least-infeasibility start when b = 0
/// is infeasible. Deterministic: ties in entering/leaving constraints break
/// toward the lowest row index. A PSD-singular effective Hessian gets a
/// 1e-10 trace ridge and a warning.
SolveResult solve_qp(const Eigen::MatrixXd& Q, const Eigen::VectorXd& c, double lambda,
                     const Eigen::MatrixXd& C, const Eigen::VectorXd& d,
                     const SolveOptions& opts = {});

/// Convenience overload for assembled quadratic programs.
SolveResult solve_program(const ApproxProgram& program, const SolveOptions& opts = {});

/// Damped-Newton sequential quadratic programming for smooth convex
/// programs: each outer step solves the local QP subproblem and line-searches
/// the objective. Negative curvature reports max_iter with a diagnostic.
SolveResult solve_smooth(const ApproxProgram& program, const SolveOptions& opts = {});

std::string status_name(SolveStatus status);

}  // namespace incrementa
