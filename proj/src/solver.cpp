#include "incrementa/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "incrementa/errors.hpp"

namespace incrementa {

std::string status_name(SolveStatus status) {
  switch (status) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::max_iter: return "max_iter";
  }
  return "?";
}

namespace {

struct ActiveSetOutcome {
  Eigen::VectorXd beta;
  Eigen::VectorXd gamma;  // full length r
  std::vector<int> working;
  int iterations = 0;
  bool converged = false;
};

// Solves the equality-constrained KKT system
//   [H  Cw'] [x]   [rhs_x]
//   [Cw  0 ] [g] = [rhs_g]
// with one round of iterative refinement for accuracy.
bool solve_kkt(const Eigen::MatrixXd& h, const Eigen::MatrixXd& cw, const Eigen::VectorXd& rhs_x,
               const Eigen::VectorXd& rhs_g, Eigen::VectorXd& x, Eigen::VectorXd& g) {
  const int k = static_cast<int>(h.rows());
  const int m = static_cast<int>(cw.rows());
  Eigen::MatrixXd kkt(k + m, k + m);
  kkt.setZero();
  kkt.topLeftCorner(k, k) = h;
  if (m > 0) {
    kkt.topRightCorner(k, m) = cw.transpose();
    kkt.bottomLeftCorner(m, k) = cw;
  }
  Eigen::VectorXd rhs(k + m);
  rhs.head(k) = rhs_x;
  rhs.tail(m) = rhs_g;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  if (!lu.isInvertible()) return false;
  Eigen::VectorXd sol = lu.solve(rhs);
  for (int refine = 0; refine < 2; ++refine) sol += lu.solve(rhs - kkt * sol);
  x = sol.head(k);
  g = sol.tail(m);
  return x.allFinite() && g.allFinite();
}

// Primal active-set iteration from a feasible start. H must be positive
// definite. Deterministic tie-breaking: lowest index enters and leaves.
ActiveSetOutcome active_set_qp(const Eigen::MatrixXd& h, const Eigen::VectorXd& c,
                               const Eigen::MatrixXd& cons, const Eigen::VectorXd& d,
                               Eigen::VectorXd beta, int max_iter) {
  const int k = static_cast<int>(h.rows());
  const int r = static_cast<int>(cons.rows());
  ActiveSetOutcome out;
  std::vector<int> working;

  Eigen::VectorXd row_norm(r);
  for (int j = 0; j < r; ++j) row_norm(j) = std::max(cons.row(j).norm(), 1e-300);

  auto working_matrix = [&](const std::vector<int>& w) {
    Eigen::MatrixXd cw(w.size(), k);
    for (size_t i = 0; i < w.size(); ++i) cw.row(static_cast<Eigen::Index>(i)) = cons.row(w[i]);
    return cw;
  };

  int iter = 0;
  for (; iter < max_iter; ++iter) {
    const Eigen::VectorXd grad = h * beta - c;
    const Eigen::MatrixXd cw = working_matrix(working);
    Eigen::VectorXd p, gam;
    if (!solve_kkt(h, cw, -grad, Eigen::VectorXd::Zero(cw.rows()), p, gam)) {
      // Dependent working set; drop the most recent row and try again.
      if (working.empty()) break;
      working.pop_back();
      continue;
    }

    const double p_scale = std::max(1.0, beta.cwiseAbs().maxCoeff());
    if (p.cwiseAbs().maxCoeff() <= 1e-12 * p_scale) {
      // Stationary on the working set; drop the lowest-index constraint
      // whose multiplier is negative, if any.
      int drop = -1;
      for (size_t i = 0; i < working.size(); ++i)
        if (gam(static_cast<Eigen::Index>(i)) < -1e-9 &&
            (drop < 0 || working[i] < working[static_cast<size_t>(drop)]))
          drop = static_cast<int>(i);
      if (drop >= 0) {
        working.erase(working.begin() + drop);
        continue;
      }
      out.beta = beta;
      out.gamma = Eigen::VectorXd::Zero(r);
      for (size_t i = 0; i < working.size(); ++i)
        out.gamma(working[i]) = std::max(gam(static_cast<Eigen::Index>(i)), 0.0);
      out.working = working;
      out.iterations = iter + 1;
      out.converged = true;
      return out;
    }

    // Step length to the nearest blocking constraint; ties go to the
    // lowest row index.
    double alpha = 1.0;
    int blocker = -1;
    for (int j = 0; j < r; ++j) {
      if (std::find(working.begin(), working.end(), j) != working.end()) continue;
      const double cp = cons.row(j).dot(p);
      if (cp <= 1e-12 * row_norm(j) * p.norm()) continue;
      const double resid = std::max(d(j) - cons.row(j).dot(beta), 0.0);
      const double aj = resid / cp;
      if (aj < alpha - 1e-12) {
        alpha = aj;
        blocker = j;
      } else if (blocker >= 0 && aj <= alpha + 1e-12 && j < blocker) {
        alpha = std::min(alpha, aj);
        blocker = j;
      }
    }
    beta += alpha * p;
    if (blocker >= 0) {
      working.push_back(blocker);
      std::sort(working.begin(), working.end());
    }
  }

  out.beta = beta;
  out.gamma = Eigen::VectorXd::Zero(r);
  out.working = working;
  out.iterations = iter;
  out.converged = false;
  return out;
}

double kkt_residual(const Eigen::MatrixXd& h, const Eigen::VectorXd& c,
                    const Eigen::MatrixXd& cons, const Eigen::VectorXd& d,
                    const Eigen::VectorXd& beta, const Eigen::VectorXd& gamma) {
  double res = 0.0;
  Eigen::VectorXd stat = h * beta - c;
  if (cons.rows() > 0) stat += cons.transpose() * gamma;
  res = stat.cwiseAbs().maxCoeff();
  for (int j = 0; j < cons.rows(); ++j) {
    const double slack = cons.row(j).dot(beta) - d(j);
    res = std::max(res, slack);                       // primal feasibility
    res = std::max(res, -gamma(j));                   // dual feasibility
    res = std::max(res, std::abs(gamma(j) * slack));  // complementarity
  }
  return res;
}

// Finds a feasible point by the least-infeasibility QP
//   min 0.5 eps |b|^2 + 0.5 |s|^2  s.t.  C b - s <= d,
// which is feasible at (0, max(-d,0)+1). Returns false when the residual
// stays above tolerance (infeasible system).
bool phase_one(const Eigen::MatrixXd& cons, const Eigen::VectorXd& d, int k,
               Eigen::VectorXd& feasible) {
  const int r = static_cast<int>(cons.rows());
  const int m = k + r;
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(m, m);
  h.topLeftCorner(k, k) *= 1e-6;
  Eigen::MatrixXd cext(r, m);
  cext.leftCols(k) = cons;
  cext.rightCols(r) = -Eigen::MatrixXd::Identity(r, r);

  Eigen::VectorXd start(m);
  start.head(k).setZero();
  for (int j = 0; j < r; ++j) start(k + j) = std::max(-d(j), 0.0) + 1.0;

  auto sol = active_set_qp(h, Eigen::VectorXd::Zero(m), cext, d, start, 20 * (m + r));
  feasible = sol.beta.head(k);

  double worst = 0.0;
  for (int j = 0; j < r; ++j)
    worst = std::max(worst, cons.row(j).dot(feasible) - d(j));
  if (worst <= 1e-9) return true;

  // Tighten small violations by a least-squares correction onto the
  // violated boundary.
  std::vector<int> viol;
  for (int j = 0; j < r; ++j)
    if (cons.row(j).dot(feasible) - d(j) > 0.0) viol.push_back(j);
  if (!viol.empty() && worst <= 1e-6) {
    Eigen::MatrixXd cv(viol.size(), k);
    Eigen::VectorXd rv(viol.size());
    for (size_t i = 0; i < viol.size(); ++i) {
      cv.row(static_cast<Eigen::Index>(i)) = cons.row(viol[i]);
      rv(static_cast<Eigen::Index>(i)) = d(viol[i]) - cons.row(viol[i]).dot(feasible);
    }
    feasible += cv.completeOrthogonalDecomposition().solve(rv);
    worst = 0.0;
    for (int j = 0; j < r; ++j) worst = std::max(worst, cons.row(j).dot(feasible) - d(j));
  }
  return worst <= 1e-8;
}

SolveResult finish_result(const Eigen::MatrixXd& h, const Eigen::VectorXd& c,
                          const Eigen::MatrixXd& cons, const Eigen::VectorXd& d,
                          ActiveSetOutcome sol, const SolveOptions& opts, double tol) {
  const int r = static_cast<int>(cons.rows());

  // Polish: re-solve the KKT equality system on the final working set, then
  // keep the refined point when it stays feasible with nonnegative
  // multipliers.
  if (sol.converged) {
    Eigen::MatrixXd cw(sol.working.size(), h.rows());
    Eigen::VectorXd dw(sol.working.size());
    for (size_t i = 0; i < sol.working.size(); ++i) {
      cw.row(static_cast<Eigen::Index>(i)) = cons.row(sol.working[i]);
      dw(static_cast<Eigen::Index>(i)) = d(sol.working[i]);
    }
    Eigen::VectorXd beta_p, gam_p;
    if (solve_kkt(h, cw, c, dw, beta_p, gam_p)) {
      bool ok = (gam_p.size() == 0 || gam_p.minCoeff() >= -1e-10);
      for (int j = 0; ok && j < r; ++j)
        if (cons.row(j).dot(beta_p) - d(j) > 1e-9) ok = false;
      if (ok) {
        sol.beta = beta_p;
        sol.gamma.setZero();
        for (size_t i = 0; i < sol.working.size(); ++i)
          sol.gamma(sol.working[i]) = std::max(gam_p(static_cast<Eigen::Index>(i)), 0.0);
      }
    }
  }

  SolveResult out;
  out.beta = sol.beta;
  out.gamma = sol.gamma;
  out.iterations = sol.iterations;
  out.kkt_residual = kkt_residual(h, c, cons, d, sol.beta, sol.gamma);
  out.status = sol.converged && out.kkt_residual <= tol ? SolveStatus::optimal
                                                        : SolveStatus::max_iter;
  out.objective = 0.5 * sol.beta.dot(h * sol.beta) - c.dot(sol.beta);
  for (int j = 0; j < r; ++j) {
    const double slack = std::abs(cons.row(j).dot(sol.beta) - d(j));
    if (slack <= opts.tol_act) out.active.push_back(j);
    if (slack < 10.0 * tol && std::abs(out.gamma(j)) < 10.0 * tol) out.sc_flags.push_back(j);
  }
  return out;
}

}  // namespace

SolveResult solve_qp(const Eigen::MatrixXd& Q, const Eigen::VectorXd& c, double lambda,
                     const Eigen::MatrixXd& C, const Eigen::VectorXd& d,
                     const SolveOptions& opts) {
  const int k = static_cast<int>(Q.rows());
  if (Q.cols() != k || c.size() != k) throw_config("argument", "Q and c dimensions disagree");
  if (C.rows() != d.size() || (C.rows() > 0 && C.cols() != k))
    throw_config("argument", "constraint dimensions disagree");
  if (lambda < 0.0) throw_config("argument", "lambda must be >= 0");

  Eigen::MatrixXd h = Q + 2.0 * lambda * Eigen::MatrixXd::Identity(k, k);
  h = ((h + h.transpose()) / 2.0).eval();

  SolveResult out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
  if (eig.eigenvalues().minCoeff() <= 1e-10) {
    const double trace = Q.trace();
    const double ridge = 1e-10 * (trace > 0.0 ? trace : 1.0);
    h.diagonal().array() += ridge;
    out.warnings.push_back("effective Hessian not positive definite; ridge added");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig2(h);
    if (eig2.eigenvalues().minCoeff() <= 0.0)
      throw_numeric("singular", "effective Hessian remains singular after the ridge fallback");
  }

  const int r = static_cast<int>(C.rows());
  Eigen::VectorXd start = Eigen::VectorXd::Zero(k);
  bool feasible_at_zero = true;
  for (int j = 0; j < r; ++j)
    if (d(j) < 0.0) feasible_at_zero = false;
  if (!feasible_at_zero) {
    if (!phase_one(C, d, k, start)) {
      out.beta = start;
      out.gamma = Eigen::VectorXd::Zero(r);
      out.status = SolveStatus::infeasible;
      out.kkt_residual = std::numeric_limits<double>::infinity();
      return out;
    }
  }

  auto sol = active_set_qp(h, c, C, d, start, std::max(10 * (k + r), 10));
  SolveResult res = finish_result(h, c, C, d, std::move(sol), opts, opts.tol);
  res.warnings.insert(res.warnings.begin(), out.warnings.begin(), out.warnings.end());
  return res;
}

SolveResult solve_program(const ApproxProgram& program, const SolveOptions& opts) {
  if (program.kind == ProgramKind::smooth_convex) return solve_smooth(program, opts);
  return solve_qp(program.Q, program.c, program.lambda, program.C, program.d, opts);
}

SolveResult solve_smooth(const ApproxProgram& program, const SolveOptions& opts) {
  if (program.kind != ProgramKind::smooth_convex)
    throw_config("argument", "solve_smooth expects a smooth program");
  const int k = program.k;
  const int r = static_cast<int>(program.C.rows());

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  bool feasible_at_zero = true;
  for (int j = 0; j < r; ++j)
    if (program.d(j) < 0.0) feasible_at_zero = false;
  SolveResult out;
  if (!feasible_at_zero && !phase_one(program.C, program.d, k, beta)) {
    out.beta = beta;
    out.gamma = Eigen::VectorXd::Zero(r);
    out.status = SolveStatus::infeasible;
    out.kkt_residual = std::numeric_limits<double>::infinity();
    return out;
  }

  double f = program.smooth.value(beta);
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(r);
  int iter = 0;
  bool converged = false;
  for (; iter < opts.max_outer; ++iter) {
    const Eigen::VectorXd grad = program.smooth.grad(beta);
    Eigen::MatrixXd hess = program.smooth.hess(beta);
    hess = ((hess + hess.transpose()) / 2.0).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess);
    const double min_eig = eig.eigenvalues().minCoeff();
    if (min_eig < -1e-8) {
      out.warnings.push_back("negative curvature encountered; objective is not convex here");
      break;
    }
    if (min_eig <= 1e-10)
      hess.diagonal().array() += 1e-10 * std::max(std::abs(hess.trace()), 1.0) + 1e-12;

    // Local QP: min 0.5 p'Hp + g'p  s.t.  C(beta + p) <= d.
    Eigen::VectorXd resid = program.d;
    if (r > 0) resid -= program.C * beta;
    resid = resid.cwiseMax(0.0);
    auto sub = active_set_qp(hess, -grad, program.C, resid, Eigen::VectorXd::Zero(k),
                             std::max(10 * (k + r), 10));
    gamma = sub.gamma;

    // kkt_residual computes H*beta - c + C'gamma; with H=0, c=-grad this is
    // grad + C'gamma plus the feasibility and complementarity blocks.
    const double res = kkt_residual(Eigen::MatrixXd::Zero(k, k), -grad, program.C,
                                    program.d, beta, gamma);
    if (res <= opts.tol_smooth) {
      converged = true;
      break;
    }

    const Eigen::VectorXd p = sub.beta;
    const double descent = grad.dot(p);
    double alpha = 1.0;
    bool stepped = false;
    for (int half = 0; half < 60; ++half) {
      const Eigen::VectorXd cand = beta + alpha * p;
      const double fc = program.smooth.value(cand);
      if (fc <= f + 1e-4 * alpha * descent + 1e-14 * std::abs(f)) {
        beta = cand;
        f = fc;
        stepped = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!stepped) break;  // line search stalled
  }

  out.beta = beta;
  out.gamma = gamma;
  out.iterations = iter + (converged ? 1 : 0);
  const Eigen::VectorXd grad = program.smooth.grad(beta);
  out.kkt_residual =
      kkt_residual(Eigen::MatrixXd::Zero(k, k), -grad, program.C, program.d, beta, gamma);
  out.status = converged && out.kkt_residual <= opts.tol_smooth ? SolveStatus::optimal
                                                                : SolveStatus::max_iter;
  out.objective = f;
  for (int j = 0; j < r; ++j) {
    const double slack = std::abs(program.C.row(j).dot(beta) - program.d(j));
    if (slack <= opts.tol_act) out.active.push_back(j);
    if (slack < 10.0 * opts.tol_smooth && std::abs(gamma(j)) < 10.0 * opts.tol_smooth)
      out.sc_flags.push_back(j);
  }
  return out;
}

}  // namespace incrementa
