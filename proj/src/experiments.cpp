#include "incrementa/experiments.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "incrementa/errors.hpp"
#include "incrementa/parallel.hpp"
#include "incrementa/solver.hpp"

namespace incrementa {

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

Dataset gen_illustration(int n, SeedSpec seed, bool noise_variance_reading) {
  CounterRng rng(seed);
  Eigen::VectorXd y(n);
  std::vector<int> a(n);
  Eigen::MatrixXd x(n, 1);
  for (int i = 0; i < n; ++i) {
    const double xi = rng.uniform(0.0, 10.0);
    const int ai = rng.bernoulli(expit(2.8 - 0.3 * xi)) ? 1 : 0;
    const double sd = noise_variance_reading ? std::sqrt(xi) : xi;
    const double yi = 1.0 + 0.75 * xi + 0.5 * xi * xi - 10.0 * ai + sd * rng.normal();
    x(i, 0) = xi;
    a[i] = ai;
    y(i) = yi;
  }
  return Dataset(std::move(y), std::move(a), std::move(x), {"x1"});
}

Dataset gen_simulation(int n, SeedSpec seed) {
  CounterRng rng(seed);
  Eigen::VectorXd y(n);
  std::vector<int> a(n);
  Eigen::MatrixXd x(n, 3);
  for (int i = 0; i < n; ++i) {
    const double f = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double x1 = rng.uniform(0.0, 10.0);
    const double x2 = rng.normal(4.0 * f - 2.0, std::sqrt(2.0));
    const double pi = expit(2.5 - 0.3 * x1 - f * x2);
    const int ai = rng.bernoulli(pi) ? 1 : 0;
    const double yi = 0.5 * std::sqrt(x1) + 2.0 * x2 - 5.0 * ai + rng.normal();
    x(i, 0) = x1;
    x(i, 1) = x2;
    x(i, 2) = f;
    a[i] = ai;
    y(i) = yi;
  }
  return Dataset(std::move(y), std::move(a), std::move(x), {"x1", "x2", "f"}, 2);
}

OracleNuisanceFns illustration_truth(bool noise_variance_reading) {
  OracleNuisanceFns truth;
  truth.pi1 = [](const Eigen::RowVectorXd& x) { return expit(2.8 - 0.3 * x(0)); };
  auto mean_fn = [](const Eigen::RowVectorXd& x, int a) {
    return 1.0 + 0.75 * x(0) + 0.5 * x(0) * x(0) - 10.0 * a;
  };
  truth.mu[TransformTag::identity] = mean_fn;
  truth.mu[TransformTag::square] = [mean_fn, noise_variance_reading](const Eigen::RowVectorXd& x,
                                                                     int a) {
    const double m = mean_fn(x, a);
    const double var = noise_variance_reading ? x(0) : x(0) * x(0);
    return m * m + var;
  };
  return truth;
}

OracleNuisanceFns simulation_truth() {
  OracleNuisanceFns truth;
  truth.pi1 = [](const Eigen::RowVectorXd& x) {
    return expit(2.5 - 0.3 * x(0) - x(2) * x(1));
  };
  auto mean_fn = [](const Eigen::RowVectorXd& x, int a) {
    return 0.5 * std::sqrt(x(0)) + 2.0 * x(1) - 5.0 * a;
  };
  truth.mu[TransformTag::identity] = mean_fn;
  truth.mu[TransformTag::square] = [mean_fn](const Eigen::RowVectorXd& x, int a) {
    const double m = mean_fn(x, a);
    return m * m + 1.0;
  };
  return truth;
}

BasisSpec simulation_basis() {
  BasisSpec basis;
  basis.kind = BasisSpec::Kind::raw;
  basis.columns = {0, 1};  // (1, X1, X2); the sensitive flag stays out of f
  basis.include_intercept = true;
  return basis;
}

namespace {

// One streamed Monte Carlo draw of the true-program moments.
struct OracleMoments {
  Eigen::MatrixXd q;
  Eigen::VectorXd c;
  // Per parity-style constraint: weighted basis sums per sensitive group.
  std::vector<Eigen::RowVectorXd> sum0, sum1;
  std::vector<double> w0, w1;
};

Eigen::VectorXd oracle_solve_one(Dgp dgp, const BasisSpec& basis,
                                 const std::vector<ConstraintSpec>& constraints, Increment delta,
                                 SeedSpec seed, long long n_oracle) {
  // Probe dimension and column roles with a single generated row.
  const Dataset probe = dgp == Dgp::illustration ? gen_illustration(1, seed.derive(0))
                                                 : gen_simulation(1, seed.derive(0));
  const int k = static_cast<int>(build_basis(probe, basis).cols());
  const int p = probe.p();

  OracleMoments acc;
  acc.q = Eigen::MatrixXd::Zero(k, k);
  acc.c = Eigen::VectorXd::Zero(k);
  for (const auto& spec : constraints) {
    if (spec.kind == ConstraintSpec::Kind::positive_class_balance)
      throw_config("configuration", "oracle_beta does not support positive-class balance");
    if (spec.kind != ConstraintSpec::Kind::linear) {
      acc.sum0.push_back(Eigen::RowVectorXd::Zero(k));
      acc.sum1.push_back(Eigen::RowVectorXd::Zero(k));
      acc.w0.push_back(0.0);
      acc.w1.push_back(0.0);
    }
  }

  const long long batch_size = 65536;
  long long done = 0;
  CounterRng rng(seed);
  const double d = delta.delta;
  Eigen::MatrixXd x(batch_size, p);
  Eigen::VectorXd cond_mean(batch_size);
  while (done < n_oracle) {
    const int m = static_cast<int>(std::min<long long>(batch_size, n_oracle - done));
    for (int i = 0; i < m; ++i) {
      double pi, m0, m1;
      if (dgp == Dgp::illustration) {
        const double xi = rng.uniform(0.0, 10.0);
        x(i, 0) = xi;
        pi = expit(2.8 - 0.3 * xi);
        m0 = 1.0 + 0.75 * xi + 0.5 * xi * xi;
        m1 = m0 - 10.0;
      } else {
        const double f = rng.bernoulli(0.5) ? 1.0 : 0.0;
        const double x1 = rng.uniform(0.0, 10.0);
        const double x2 = rng.normal(4.0 * f - 2.0, std::sqrt(2.0));
        x(i, 0) = x1;
        x(i, 1) = x2;
        x(i, 2) = f;
        pi = expit(2.5 - 0.3 * x1 - f * x2);
        m0 = 0.5 * std::sqrt(x1) + 2.0 * x2;
        m1 = m0 - 5.0;
      }
      // E[phi_Q | X] under exact nuisances.
      if (delta.is_zero()) cond_mean(i) = m0;
      else if (delta.is_infinite()) cond_mean(i) = m1;
      else cond_mean(i) = (d * pi * m1 + (1.0 - pi) * m0) / (d * pi + 1.0 - pi);
    }
    const Eigen::MatrixXd b = build_basis(x.topRows(m), basis);
    acc.q.selfadjointView<Eigen::Lower>().rankUpdate(b.transpose());
    acc.c.noalias() += b.transpose() * cond_mean.head(m);
    int pc = 0;
    for (const auto& spec : constraints) {
      if (spec.kind == ConstraintSpec::Kind::linear) continue;
      Eigen::VectorXd in0(m), in1(m);
      for (int i = 0; i < m; ++i) {
        const bool in_level = spec.kind != ConstraintSpec::Kind::conditional_parity ||
                              static_cast<int>(x(i, probe.l_col())) == spec.level;
        const bool f1 = static_cast<int>(x(i, probe.f_col())) == 1;
        in0(i) = (in_level && !f1) ? 1.0 : 0.0;
        in1(i) = (in_level && f1) ? 1.0 : 0.0;
      }
      acc.sum0[pc] += in0.transpose() * b;
      acc.sum1[pc] += in1.transpose() * b;
      acc.w0[pc] += in0.sum();
      acc.w1[pc] += in1.sum();
      ++pc;
    }
    done += m;
  }
  acc.q = Eigen::MatrixXd(acc.q.selfadjointView<Eigen::Lower>());
  acc.q /= static_cast<double>(n_oracle);
  acc.c /= static_cast<double>(n_oracle);

  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> bounds;
  int pc = 0;
  for (const auto& spec : constraints) {
    if (spec.kind == ConstraintSpec::Kind::linear) {
      for (Eigen::Index rr = 0; rr < spec.C.rows(); ++rr) {
        rows.push_back(spec.C.row(rr));
        bounds.push_back(spec.d(rr));
      }
      continue;
    }
    if (!(acc.w0[pc] > 0.0) || !(acc.w1[pc] > 0.0))
      throw_numeric("oracle-precision", "a sensitive-feature group is empty in the oracle draw");
    const Eigen::RowVectorXd row = acc.sum0[pc] / acc.w0[pc] - acc.sum1[pc] / acc.w1[pc];
    rows.push_back(row);
    bounds.push_back(spec.epsilon);
    rows.push_back(-row);
    bounds.push_back(spec.epsilon);
    ++pc;
  }
  Eigen::MatrixXd cons(rows.size(), k);
  Eigen::VectorXd dvec(rows.size());
  for (size_t rr = 0; rr < rows.size(); ++rr) {
    cons.row(static_cast<Eigen::Index>(rr)) = rows[rr];
    dvec(static_cast<Eigen::Index>(rr)) = bounds[rr];
  }
  const SolveResult sol = solve_qp(acc.q, acc.c, 0.0, cons, dvec);
  if (sol.status != SolveStatus::optimal)
    throw_numeric("oracle-precision", "true-program solve did not reach optimality");
  return sol.beta;
}

}  // namespace

Eigen::VectorXd oracle_beta(Dgp dgp, const BasisSpec& basis,
                            const std::vector<ConstraintSpec>& constraints, Increment delta,
                            SeedSpec seed, long long n_oracle) {
  if (n_oracle < 1000) throw_config("argument", "n_oracle is too small to certify the oracle");
  const Eigen::VectorXd b1 =
      oracle_solve_one(dgp, basis, constraints, delta, seed.derive(1), n_oracle);
  const Eigen::VectorXd b2 =
      oracle_solve_one(dgp, basis, constraints, delta, seed.derive(2), n_oracle);
  const double gap = (b1 - b2).cwiseAbs().maxCoeff();
  if (gap > 5e-3)
    throw_numeric("oracle-precision",
                  "two independent oracle draws disagree by " + std::to_string(gap) +
                      " (> 5e-3); increase n_oracle");
  return (b1 + b2) / 2.0;
}

IllustrationResult run_illustration(int n, const std::vector<double>& deltas, int reps,
                                    SeedSpec seed) {
  if (n < 20) throw_config("argument", "illustration study needs n >= 20");
  if (reps < 1) throw_config("argument", "reps must be >= 1");
  const double t0 = now_seconds();

  const OracleNuisanceFns truth = illustration_truth();
  IllustrationResult out;
  out.reps.resize(static_cast<size_t>(reps) * deltas.size());

  parallel_for(reps, [&](int rep) {
    const Dataset train =
        gen_illustration(n, seed.derive(static_cast<std::uint64_t>(rep) * 64 + 0));

    // Factual baseline: pi-hat by logistic regression on (1, X); outcome by
    // least squares on (1, X, X^2, A). At prediction time A is imputed with
    // pi-hat.
    const std::vector<int> whole(static_cast<size_t>(n), 0);
    DesignSpec prop_design{{0}, 1, true};
    const auto prop = fit_propensity_logistic(train, prop_design, whole);
    const Eigen::VectorXd prop_coef = prop.fold_coefs.front();

    Eigen::MatrixXd fdesign(n, 4);
    fdesign.col(0).setOnes();
    fdesign.col(1) = train.x().col(0);
    fdesign.col(2) = train.x().col(0).cwiseProduct(train.x().col(0));
    for (int i = 0; i < n; ++i) fdesign(i, 3) = train.a()[i];
    const Eigen::VectorXd theta = fdesign.colPivHouseholderQr().solve(train.y());

    // Counterfactual model: cross-fit nuisances, EIF pseudo-outcomes,
    // unconstrained squared-error program on (1, X, X^2).
    NuisanceConfig ncfg;
    ncfg.propensity_design = prop_design;
    ncfg.outcome_design = DesignSpec{{0}, 2, true};
    ncfg.transforms = {TransformTag::identity};
    ncfg.folds = 2;
    ncfg.seed = seed.derive(static_cast<std::uint64_t>(rep) * 64 + 1);
    const NuisanceFit nuis = fit_nuisances(train, ncfg);

    BasisSpec basis;
    basis.kind = BasisSpec::Kind::polynomial;
    basis.degree = 2;
    basis.columns = {0};

    double train_treated = 0.0;
    for (int i = 0; i < n; ++i) train_treated += train.a()[i];
    train_treated /= n;

    for (size_t di = 0; di < deltas.size(); ++di) {
      const Increment delta{deltas[di]};
      const auto pseudo = pseudo_outcomes(train, nuis, delta);
      const ApproxProgram program = build_l2_program(train, pseudo, basis, {}, 0.0);
      const SolveResult sol = solve_program(program);

      // Test draw under the shifted assignment A* ~ Bernoulli(q(X; delta, pi)).
      CounterRng rng(seed.derive(static_cast<std::uint64_t>(rep) * 64 + 2 + di));
      Eigen::VectorXd xt(n), yt(n);
      double test_treated = 0.0;
      for (int i = 0; i < n; ++i) {
        const double xi = rng.uniform(0.0, 10.0);
        const double pi = expit(2.8 - 0.3 * xi);
        const int ai = rng.bernoulli(q_shift(pi, delta)) ? 1 : 0;
        const double yi =
            1.0 + 0.75 * xi + 0.5 * xi * xi - 10.0 * ai + std::sqrt(xi) * rng.normal();
        xt(i) = xi;
        yt(i) = yi;
        test_treated += ai;
      }
      test_treated /= n;

      double mse_f = 0.0, mse_c = 0.0;
      Eigen::VectorXd pred_f(n), pred_c(n);
      for (int i = 0; i < n; ++i) {
        const double xi = xt(i);
        const double pihat = expit(prop_coef(0) + prop_coef(1) * xi);
        pred_f(i) = theta(0) + theta(1) * xi + theta(2) * xi * xi + theta(3) * pihat;
        pred_c(i) = sol.beta(0) + sol.beta(1) * xi + sol.beta(2) * xi * xi;
        mse_f += (yt(i) - pred_f(i)) * (yt(i) - pred_f(i));
        mse_c += (yt(i) - pred_c(i)) * (yt(i) - pred_c(i));
      }
      mse_f /= n;
      mse_c /= n;

      IllustrationRep& rec = out.reps[static_cast<size_t>(rep) * deltas.size() + di];
      rec.rep = rep;
      rec.delta = delta.delta;
      rec.mse_factual = mse_f;
      rec.mse_counterfactual = mse_c;
      rec.treated_frac_train = train_treated;
      rec.treated_frac_test = test_treated;
      rec.beta = sol.beta;

      if (rep == 0) {
        // Density summaries for the first replication: the shifted
        // propensity q(X; delta, pi-hat) plus realized and predicted
        // counterfactual outcomes.
        auto make_hist = [&](const Eigen::VectorXd& v, const std::string& label, double lo,
                             double hi) {
          Histogram h;
          h.label = label;
          h.delta = delta.delta;
          h.lo = lo;
          h.hi = hi;
          h.counts.assign(40, 0);
          for (Eigen::Index i = 0; i < v.size(); ++i) {
            int bin = static_cast<int>(std::floor((v(i) - lo) / (hi - lo) * 40));
            bin = std::min(std::max(bin, 0), 39);
            ++h.counts[static_cast<size_t>(bin)];
          }
          return h;
        };
        Eigen::VectorXd qvals(n);
        for (int i = 0; i < n; ++i) {
          const double pihat = expit(prop_coef(0) + prop_coef(1) * train.x()(i, 0));
          qvals(i) = q_shift(pihat, delta);
        }
        const double lo = std::min(yt.minCoeff(), std::min(pred_f.minCoeff(), pred_c.minCoeff()));
        const double hi = std::max(yt.maxCoeff(), std::max(pred_f.maxCoeff(), pred_c.maxCoeff()));
        // Only replication 0 writes here, so no synchronization is needed.
        out.histograms.push_back(make_hist(qvals, "q_shift", 0.0, 1.0));
        out.histograms.push_back(make_hist(yt, "outcome_true", lo, hi));
        out.histograms.push_back(make_hist(pred_f, "prediction_factual", lo, hi));
        out.histograms.push_back(make_hist(pred_c, "prediction_counterfactual", lo, hi));
      }
    }
  });

  out.runtime_seconds = now_seconds() - t0;
  return out;
}

RmseStudyResult run_rmse_study(const std::vector<int>& n_set, const std::vector<double>& deltas,
                               const std::vector<double>& r_grid, int reps, double eps,
                               SeedSpec seed, long long n_oracle, bool per_observation_noise) {
  if (reps < 1) throw_config("argument", "reps must be >= 1");
  if (eps < 0.0) throw_config("argument", "parity threshold must be >= 0");
  const double t0 = now_seconds();

  const BasisSpec basis = simulation_basis();
  const std::vector<ConstraintSpec> constraints = {ConstraintSpec::statistical_parity(eps)};
  const OracleNuisanceFns truth = simulation_truth();

  RmseStudyResult out;
  for (size_t di = 0; di < deltas.size(); ++di) {
    out.oracle[deltas[di]] =
        oracle_beta(Dgp::simulation, basis, constraints, Increment{deltas[di]},
                    seed.derive((1ULL << 62) + di), n_oracle);
  }

  std::uint64_t cell_index = 0;
  for (int n : n_set) {
    for (double delta_v : deltas) {
      const Increment delta{delta_v};
      const Eigen::VectorXd& beta_star = out.oracle.at(delta_v);
      for (double r : r_grid) {
        std::vector<double> sq_err(static_cast<size_t>(reps),
                                   std::numeric_limits<double>::quiet_NaN());
        const std::uint64_t base = cell_index * static_cast<std::uint64_t>(reps) * 2;
        parallel_for(reps, [&](int rep) {
          const SeedSpec data_seed = seed.derive(base + 2 * static_cast<std::uint64_t>(rep));
          const SeedSpec corrupt_seed =
              seed.derive(base + 2 * static_cast<std::uint64_t>(rep) + 1);
          const Dataset data = gen_simulation(n, data_seed);
          CorruptionOptions copts;
          copts.per_observation = per_observation_noise;
          const NuisanceFit nuis = corrupted_oracle_nuisances(data, truth, r, corrupt_seed, copts);
          const auto pseudo = pseudo_outcomes(data, nuis, delta);
          const ApproxProgram program = build_l2_program(data, pseudo, basis, constraints, 0.0);
          const SolveResult sol = solve_program(program);
          if (sol.status == SolveStatus::optimal)
            sq_err[static_cast<size_t>(rep)] = (sol.beta - beta_star).squaredNorm();
        });
        RmseCell cell;
        cell.n = n;
        cell.delta = delta_v;
        cell.r = r;
        double sum = 0.0;
        for (double e : sq_err) {
          if (std::isnan(e)) {
            ++cell.dropped;
          } else {
            sum += e;
            ++cell.reps_used;
          }
        }
        cell.rmse = cell.reps_used > 0 ? std::sqrt(sum / cell.reps_used)
                                       : std::numeric_limits<double>::quiet_NaN();
        out.cells.push_back(cell);
        ++cell_index;
      }
    }
  }
  out.runtime_seconds = now_seconds() - t0;
  return out;
}

}  // namespace incrementa
