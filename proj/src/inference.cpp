#include "incrementa/inference.hpp"

#include <cmath>

#include "incrementa/errors.hpp"
#include "incrementa/parallel.hpp"

namespace incrementa {

namespace {

void check_optimal(const SolveResult& result, bool require_sc) {
  if (result.status != SolveStatus::optimal)
    throw_numeric("inference", "inference requires an optimal solve, got status " +
                                   status_name(result.status));
  if (require_sc && !result.sc_flags.empty())
    throw_numeric("strict-complementarity",
                  "strict complementarity is doubtful at constraint " +
                      std::to_string(result.sc_flags.front()) +
                      "; the closed-form sandwich is refused, use the bootstrap");
}

Eigen::MatrixXd active_rows(const ApproxProgram& program, const SolveResult& result) {
  Eigen::MatrixXd c_ac(result.active.size(), program.k);
  for (size_t i = 0; i < result.active.size(); ++i)
    c_ac.row(static_cast<Eigen::Index>(i)) = program.C.row(result.active[i]);
  return c_ac;
}

void check_licq(const Eigen::MatrixXd& c_ac) {
  if (c_ac.rows() == 0) return;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(c_ac);
  if (c_ac.rows() > c_ac.cols() || svd.singularValues().minCoeff() <= 1e-10)
    throw_numeric("licq", "active constraint rows are not linearly independent");
}

Eigen::MatrixXd bordered_inverse(const Eigen::MatrixXd& hess, const Eigen::MatrixXd& c_ac) {
  const int k = static_cast<int>(hess.rows());
  const int m = static_cast<int>(c_ac.rows());
  Eigen::MatrixXd bordered(k + m, k + m);
  bordered.setZero();
  bordered.topLeftCorner(k, k) = hess;
  if (m > 0) {
    bordered.topRightCorner(k, m) = c_ac.transpose();
    bordered.bottomLeftCorner(m, k) = c_ac;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(bordered);
  if (!lu.isInvertible())
    throw_numeric("licq", "bordered KKT matrix is singular");
  return lu.inverse();
}

Eigen::MatrixXd symmetrize(Eigen::MatrixXd m) { return ((m + m.transpose()) / 2.0).eval(); }

Eigen::VectorXd se_from_cov(const Eigen::MatrixXd& cov) {
  Eigen::VectorXd se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  return se;
}

}  // namespace

InferenceResult sandwich_linear(const ApproxProgram& program, const SolveResult& result,
                                const Eigen::MatrixXd& per_obs_grad,
                                const std::vector<Eigen::MatrixXd>& per_obs_rows) {
  if (program.kind != ProgramKind::quadratic)
    throw_config("argument", "sandwich_linear expects a quadratic program");
  check_optimal(result, true);
  const int k = program.k;
  const int n = static_cast<int>(per_obs_grad.rows());
  const int m = static_cast<int>(result.active.size());
  if (per_obs_grad.cols() != k)
    throw_config("argument", "per-observation gradient width does not match the program");
  if (static_cast<int>(per_obs_rows.size()) != m)
    throw_config("argument",
                 "one per-observation row-influence block is required per active constraint");

  const Eigen::MatrixXd c_ac = active_rows(program, result);
  check_licq(c_ac);
  const Eigen::MatrixXd hess =
      program.Q + 2.0 * program.lambda * Eigen::MatrixXd::Identity(k, k);
  const Eigen::MatrixXd minv = bordered_inverse(hess, c_ac);
  const Eigen::MatrixXd a = minv.topRows(k);  // beta rows, k x (k+m)

  // Stacked influence contributions: gradient block plus multiplier-weighted
  // row influence, then the active-row influence applied to beta.
  Eigen::MatrixXd stack(n, k + m);
  stack.leftCols(k) = per_obs_grad;
  for (int j = 0; j < m; ++j) {
    const auto& rows_j = per_obs_rows[static_cast<size_t>(j)];
    if (rows_j.rows() != n || rows_j.cols() != k)
      throw_config("argument", "row-influence block has the wrong shape");
    const double gamma_j = result.gamma(result.active[static_cast<size_t>(j)]);
    stack.leftCols(k) += gamma_j * rows_j;
    stack.col(k + j) = rows_j * result.beta;
  }
  const Eigen::RowVectorXd means = stack.colwise().mean();
  stack.rowwise() -= means;
  const Eigen::MatrixXd v = stack.transpose() * stack / static_cast<double>(n - 1);

  InferenceResult out;
  out.method = "sandwich_linear";
  out.cov = symmetrize(a * v * a.transpose() / static_cast<double>(n));
  out.se = se_from_cov(out.cov);
  Eigen::MatrixXd flip = Eigen::MatrixXd::Identity(k + m, k + m);
  flip.bottomRightCorner(m, m) *= -1.0;
  out.upsilon_cov = symmetrize(flip * v * flip.transpose());
  out.sc_flags = result.sc_flags;
  return out;
}

InferenceResult sandwich_fixed(const ApproxProgram& program, const SolveResult& result,
                               double var_phi_r, const Eigen::MatrixXd& hessian, int n) {
  check_optimal(result, true);
  const int k = program.k;
  if (hessian.rows() != k || hessian.cols() != k)
    throw_config("argument", "hessian dimensions do not match the program");
  if (!(var_phi_r >= 0.0)) throw_config("argument", "var_phi_r must be >= 0");
  if (n < 1) throw_config("argument", "sample size must be >= 1");

  const Eigen::MatrixXd c_ac = active_rows(program, result);
  check_licq(c_ac);
  // Linear constraints contribute no curvature, so the (1,1) block is just
  // the objective Hessian.
  const Eigen::MatrixXd minv = bordered_inverse(hessian, c_ac);
  const Eigen::MatrixXd kmap = minv.topLeftCorner(k, k);
  const Eigen::MatrixXd sigma = hessian * var_phi_r * hessian.transpose();

  InferenceResult out;
  out.method = "sandwich_fixed";
  out.cov = symmetrize(kmap * sigma * kmap.transpose() / static_cast<double>(n));
  out.se = se_from_cov(out.cov);
  out.sc_flags = result.sc_flags;
  return out;
}

InferenceResult bootstrap(const std::function<std::optional<Eigen::VectorXd>(
                              const std::vector<int>&)>& resolve,
                          int n, int B, SeedSpec seed) {
  if (B < 100) throw_config("argument", "bootstrap requires B >= 100 replicates");
  if (n < 1) throw_config("argument", "bootstrap requires n >= 1");

  std::vector<std::optional<Eigen::VectorXd>> draws(static_cast<size_t>(B));
  parallel_for(B, [&](int b) {
    CounterRng rng(seed.derive(static_cast<std::uint64_t>(b)));
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      idx[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_index(n));
    draws[static_cast<size_t>(b)] = resolve(idx);
  });

  std::vector<Eigen::VectorXd> kept;
  kept.reserve(static_cast<size_t>(B));
  for (auto& d : draws)
    if (d.has_value()) kept.push_back(std::move(*d));
  const int dropped = B - static_cast<int>(kept.size());
  if (dropped > B / 10)
    throw_numeric("bootstrap",
                  std::to_string(dropped) + " of " + std::to_string(B) +
                      " bootstrap replicates were infeasible");
  if (kept.size() < 2) throw_numeric("bootstrap", "too few successful replicates");

  const int k = static_cast<int>(kept.front().size());
  Eigen::MatrixXd draws_mat(kept.size(), k);
  for (size_t i = 0; i < kept.size(); ++i) draws_mat.row(static_cast<Eigen::Index>(i)) = kept[i];
  const Eigen::RowVectorXd mean = draws_mat.colwise().mean();
  draws_mat.rowwise() -= mean;

  InferenceResult out;
  out.method = "bootstrap";
  out.cov = symmetrize(draws_mat.transpose() * draws_mat /
                       static_cast<double>(kept.size() - 1));
  out.se = se_from_cov(out.cov);
  out.dropped_replicates = dropped;
  return out;
}

QuadraticInfluence quadratic_influence(const Dataset& data, const Eigen::MatrixXd& basis,
                                       const Eigen::VectorXd& phi, const ApproxProgram& program,
                                       const SolveResult& result) {
  const int n = data.n();
  const int k = program.k;
  if (basis.rows() != n || basis.cols() != k || phi.size() != n)
    throw_config("argument", "basis/pseudo-outcome shapes do not match the program");

  QuadraticInfluence infl;
  const Eigen::VectorXd fitted = basis * result.beta;
  infl.per_obs_grad = (fitted - phi).asDiagonal() * basis;  // rows (b'beta - phi) b

  for (int j : result.active) {
    const auto& info = program.meta.row_info.at(static_cast<size_t>(j));
    Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(n, k);
    switch (info.origin) {
      case ConstraintSpec::Kind::linear:
        break;  // deterministic row: no sampling influence
      case ConstraintSpec::Kind::positive_class_balance:
        throw_numeric("inference",
                      "no closed-form inference for positive-class-balance constraints; use "
                      "the bootstrap");
      case ConstraintSpec::Kind::statistical_parity:
      case ConstraintSpec::Kind::conditional_parity: {
        const bool conditional = info.origin == ConstraintSpec::Kind::conditional_parity;
        // Ratio-functional influence of (group-0 mean) - (group-1 mean):
        //   u_i (b_i - m_g) / p_g with u the group membership indicator.
        double n0 = 0.0, n1 = 0.0;
        Eigen::RowVectorXd m0 = Eigen::RowVectorXd::Zero(k), m1 = Eigen::RowVectorXd::Zero(k);
        for (int i = 0; i < n; ++i) {
          if (conditional && data.l(i) != info.level) continue;
          if (data.f(i) == 0) {
            m0 += basis.row(i);
            n0 += 1.0;
          } else {
            m1 += basis.row(i);
            n1 += 1.0;
          }
        }
        if (n0 <= 0.0 || n1 <= 0.0)
          throw_data("degenerate-group", "a sensitive-feature group is empty");
        m0 /= n0;
        m1 /= n1;
        const double p0 = n0 / n, p1 = n1 / n;
        for (int i = 0; i < n; ++i) {
          if (conditional && data.l(i) != info.level) continue;
          if (data.f(i) == 0)
            rows.row(i) = (basis.row(i) - m0) / p0;
          else
            rows.row(i) = -(basis.row(i) - m1) / p1;
        }
        rows *= info.sign;
        break;
      }
    }
    infl.per_obs_rows.push_back(std::move(rows));
  }
  return infl;
}

InferenceResult sandwich_for_quadratic(const Dataset& data, const Eigen::MatrixXd& basis,
                                       const Eigen::VectorXd& phi, const ApproxProgram& program,
                                       const SolveResult& result) {
  const auto infl = quadratic_influence(data, basis, phi, program, result);
  return sandwich_linear(program, result, infl.per_obs_grad, infl.per_obs_rows);
}

namespace {

// Rebuilds the assembled constraint system over a resampled index multiset.
// Returns nullopt when a sensitive group vanishes in the resample.
std::optional<std::pair<Eigen::MatrixXd, Eigen::VectorXd>> resampled_constraints(
    const Dataset& data, const Eigen::MatrixXd& basis,
    const std::vector<ConstraintSpec>& constraints, const std::vector<int>& idx,
    const Eigen::VectorXd* balance_weights) {
  const int k = static_cast<int>(basis.cols());
  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> bounds;
  for (const auto& spec : constraints) {
    switch (spec.kind) {
      case ConstraintSpec::Kind::linear:
        for (Eigen::Index rr = 0; rr < spec.C.rows(); ++rr) {
          rows.push_back(spec.C.row(rr));
          bounds.push_back(spec.d(rr));
        }
        break;
      case ConstraintSpec::Kind::statistical_parity:
      case ConstraintSpec::Kind::conditional_parity:
      case ConstraintSpec::Kind::positive_class_balance: {
        const bool conditional = spec.kind == ConstraintSpec::Kind::conditional_parity;
        const bool balance = spec.kind == ConstraintSpec::Kind::positive_class_balance;
        Eigen::RowVectorXd s0 = Eigen::RowVectorXd::Zero(k), s1 = Eigen::RowVectorXd::Zero(k);
        double w0 = 0.0, w1 = 0.0;
        for (int i : idx) {
          if (conditional && data.l(i) != spec.level) continue;
          const double w = balance ? (*balance_weights)(i) : 1.0;
          if (data.f(i) == 0) {
            s0 += w * basis.row(i);
            w0 += w;
          } else {
            s1 += w * basis.row(i);
            w1 += w;
          }
        }
        if (!(w0 > 0.0) || !(w1 > 0.0)) return std::nullopt;  // degenerate resample
        const Eigen::RowVectorXd row = s0 / w0 - s1 / w1;
        rows.push_back(row);
        bounds.push_back(spec.epsilon);
        rows.push_back(-row);
        bounds.push_back(spec.epsilon);
        break;
      }
    }
  }
  Eigen::MatrixXd cons(rows.size(), k);
  Eigen::VectorXd d(rows.size());
  for (size_t rr = 0; rr < rows.size(); ++rr) {
    cons.row(static_cast<Eigen::Index>(rr)) = rows[rr];
    d(static_cast<Eigen::Index>(rr)) = bounds[rr];
  }
  return std::make_pair(std::move(cons), std::move(d));
}

void check_balance_weights(const std::vector<ConstraintSpec>& constraints,
                           const Eigen::VectorXd* balance_weights) {
  for (const auto& spec : constraints)
    if (spec.kind == ConstraintSpec::Kind::positive_class_balance && balance_weights == nullptr)
      throw_config("configuration",
                   "bootstrap with positive-class balance needs the pseudo-weight vector");
}

}  // namespace

InferenceResult bootstrap_quadratic(const Dataset& data, const Eigen::MatrixXd& basis,
                                    const Eigen::VectorXd& phi,
                                    const std::vector<ConstraintSpec>& constraints, double lambda,
                                    int B, SeedSpec seed, const Eigen::VectorXd* balance_weights) {
  const int n = data.n();
  const int k = static_cast<int>(basis.cols());
  check_balance_weights(constraints, balance_weights);

  auto resolve = [&](const std::vector<int>& idx) -> std::optional<Eigen::VectorXd> {
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(k);
    for (int i : idx) {
      q.noalias() += basis.row(i).transpose() * basis.row(i);
      c.noalias() += phi(i) * basis.row(i).transpose();
    }
    q /= static_cast<double>(n);
    c /= static_cast<double>(n);

    auto cons = resampled_constraints(data, basis, constraints, idx, balance_weights);
    if (!cons) return std::nullopt;
    const SolveResult sol = solve_qp(q, c, lambda, cons->first, cons->second);
    if (sol.status != SolveStatus::optimal) return std::nullopt;
    return sol.beta;
  };

  return bootstrap(resolve, n, B, seed);
}

InferenceResult bootstrap_crossentropy(const Dataset& data, const Eigen::MatrixXd& basis,
                                       const Eigen::VectorXd& phi,
                                       const std::vector<ConstraintSpec>& constraints,
                                       double lambda, bool clip01, int B, SeedSpec seed,
                                       const Eigen::VectorXd* balance_weights) {
  const int n = data.n();
  const int k = static_cast<int>(basis.cols());
  check_balance_weights(constraints, balance_weights);
  Eigen::VectorXd phi_used = clip01 ? phi.cwiseMax(0.0).cwiseMin(1.0).eval() : phi;

  auto resolve = [&](const std::vector<int>& idx) -> std::optional<Eigen::VectorXd> {
    Eigen::MatrixXd b(idx.size(), k);
    Eigen::VectorXd p(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) {
      b.row(static_cast<Eigen::Index>(i)) = basis.row(idx[i]);
      p(static_cast<Eigen::Index>(i)) = phi_used(idx[i]);
    }
    auto cons = resampled_constraints(data, basis, constraints, idx, balance_weights);
    if (!cons) return std::nullopt;

    ApproxProgram program;
    program.kind = ProgramKind::smooth_convex;
    program.k = k;
    program.lambda = lambda;
    program.smooth = make_crossentropy_eval(std::move(b), std::move(p), lambda);
    program.C = std::move(cons->first);
    program.d = std::move(cons->second);
    const SolveResult sol = solve_smooth(program);
    if (sol.status != SolveStatus::optimal) return std::nullopt;
    return sol.beta;
  };

  return bootstrap(resolve, n, B, seed);
}

}  // namespace incrementa
