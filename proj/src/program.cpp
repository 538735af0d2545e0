#include "incrementa/program.hpp"

#include <memory>

#include "incrementa/errors.hpp"

namespace incrementa {

std::string BasisSpec::describe() const {
  std::string s = kind == Kind::raw ? "raw" : "poly:" + std::to_string(degree);
  if (!include_intercept) s += ",no-intercept";
  if (!columns.empty()) {
    s += ",cols=";
    for (size_t i = 0; i < columns.size(); ++i)
      s += (i ? "|" : "") + std::to_string(columns[i]);
  }
  return s;
}

Eigen::MatrixXd build_basis(const Eigen::MatrixXd& x, const BasisSpec& spec) {
  DesignSpec d;
  d.columns = spec.columns;
  d.degree = spec.kind == BasisSpec::Kind::raw ? 1 : spec.degree;
  d.intercept = spec.include_intercept;
  Eigen::MatrixXd b = build_design(x, d);
  if (!b.allFinite()) throw_numeric("basis", "basis expansion produced non-finite values");
  return b;
}

Eigen::MatrixXd build_basis(const Dataset& data, const BasisSpec& spec) {
  return build_basis(data.x(), spec);
}

ConstraintSpec ConstraintSpec::linear(Eigen::MatrixXd C, Eigen::VectorXd d) {
  ConstraintSpec s;
  s.kind = Kind::linear;
  if (C.rows() != d.size()) throw_config("argument", "linear constraint C and d sizes differ");
  s.C = std::move(C);
  s.d = std::move(d);
  return s;
}

ConstraintSpec ConstraintSpec::statistical_parity(double epsilon) {
  if (epsilon < 0.0) throw_config("argument", "fairness threshold must be >= 0");
  ConstraintSpec s;
  s.kind = Kind::statistical_parity;
  s.epsilon = epsilon;
  return s;
}

ConstraintSpec ConstraintSpec::conditional_parity(double epsilon, int level) {
  if (epsilon < 0.0) throw_config("argument", "fairness threshold must be >= 0");
  ConstraintSpec s;
  s.kind = Kind::conditional_parity;
  s.epsilon = epsilon;
  s.level = level;
  return s;
}

ConstraintSpec ConstraintSpec::positive_class_balance(double epsilon) {
  if (epsilon < 0.0) throw_config("argument", "fairness threshold must be >= 0");
  ConstraintSpec s;
  s.kind = Kind::positive_class_balance;
  s.epsilon = epsilon;
  return s;
}

namespace {

Eigen::RowVectorXd weighted_group_gap(const Dataset& data, const Eigen::MatrixXd& b,
                                      const Eigen::VectorXd& w, bool level_filter, int level,
                                      const char* error_category) {
  const int k = static_cast<int>(b.cols());
  Eigen::RowVectorXd sum0 = Eigen::RowVectorXd::Zero(k), sum1 = Eigen::RowVectorXd::Zero(k);
  double w0 = 0.0, w1 = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    if (level_filter && data.l(i) != level) continue;
    if (data.f(i) == 0) {
      sum0 += w(i) * b.row(i);
      w0 += w(i);
    } else {
      sum1 += w(i) * b.row(i);
      w1 += w(i);
    }
  }
  if (!(w0 > 0.0) || !(w1 > 0.0)) {
    if (std::string(error_category) == "degenerate-group")
      throw_data("degenerate-group", "a sensitive-feature group is empty");
    throw_numeric("unstable-balance",
                  "a pseudo-weighted group normalizer is nonpositive; increase n or clip the "
                  "weights to [0,1]");
  }
  return sum0 / w0 - sum1 / w1;
}

}  // namespace

Eigen::RowVectorXd build_parity_rows(const Dataset& data, const BasisSpec& basis,
                                     const ConstraintSpec& variant) {
  if (!data.has_sensitive())
    throw_config("configuration", "sensitive feature required for parity constraints");
  const bool conditional = variant.kind == ConstraintSpec::Kind::conditional_parity;
  if (conditional && !data.has_legitimate())
    throw_config("configuration", "legitimate factor required for conditional parity");
  const Eigen::MatrixXd b = build_basis(data, basis);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(data.n());
  return weighted_group_gap(data, b, ones, conditional, variant.level, "degenerate-group");
}

Eigen::RowVectorXd build_positive_balance_rows(const Dataset& data, const NuisanceFit& nuis,
                                               Increment delta, const BasisSpec& basis) {
  if (!data.has_sensitive())
    throw_config("configuration", "sensitive feature required for positive-class balance");
  if (!nuis.has(TransformTag::positive_indicator))
    throw_config("configuration",
                 "positive-class balance requires positive_indicator nuisance regressions");
  const auto pseudo = pseudo_outcomes(data, nuis, delta, TransformTag::positive_indicator);
  const Eigen::MatrixXd b = build_basis(data, basis);
  return weighted_group_gap(data, b, pseudo.phi, false, 0, "unstable-balance");
}

namespace {

struct AssembledConstraints {
  Eigen::MatrixXd C;
  Eigen::VectorXd d;
  std::vector<ConstraintRowInfo> info;
};

AssembledConstraints assemble_constraints(const Dataset& data, const BasisSpec& basis, int k,
                                          const std::vector<ConstraintSpec>& specs,
                                          const NuisanceFit* nuis, Increment delta,
                                          ProgramMeta& meta) {
  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> bounds;
  std::vector<ConstraintRowInfo> info;
  for (size_t s = 0; s < specs.size(); ++s) {
    const auto& spec = specs[s];
    switch (spec.kind) {
      case ConstraintSpec::Kind::linear: {
        if (spec.C.cols() != k)
          throw_config("argument", "linear constraint width does not match basis dimension");
        for (Eigen::Index r = 0; r < spec.C.rows(); ++r) {
          rows.push_back(spec.C.row(r));
          bounds.push_back(spec.d(r));
          info.push_back({ConstraintSpec::Kind::linear, static_cast<int>(s), 1.0, 0});
        }
        break;
      }
      case ConstraintSpec::Kind::statistical_parity:
      case ConstraintSpec::Kind::conditional_parity: {
        const Eigen::RowVectorXd row = build_parity_rows(data, basis, spec);
        rows.push_back(row);
        bounds.push_back(spec.epsilon);
        info.push_back({spec.kind, static_cast<int>(s), 1.0, spec.level});
        rows.push_back(-row);
        bounds.push_back(spec.epsilon);
        info.push_back({spec.kind, static_cast<int>(s), -1.0, spec.level});
        break;
      }
      case ConstraintSpec::Kind::positive_class_balance: {
        if (nuis == nullptr)
          throw_config("configuration",
                       "positive-class balance requires the nuisance fit at program build time");
        const Eigen::RowVectorXd row = build_positive_balance_rows(data, *nuis, delta, basis);
        rows.push_back(row);
        bounds.push_back(spec.epsilon);
        info.push_back({spec.kind, static_cast<int>(s), 1.0, 0});
        rows.push_back(-row);
        bounds.push_back(spec.epsilon);
        info.push_back({spec.kind, static_cast<int>(s), -1.0, 0});
        meta.warnings.push_back("positive-class balance constraint is experimental; no "
                                "inference guarantees");
        break;
      }
    }
  }
  AssembledConstraints out;
  out.C.resize(static_cast<Eigen::Index>(rows.size()), k);
  out.d.resize(static_cast<Eigen::Index>(rows.size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    out.C.row(static_cast<Eigen::Index>(r)) = rows[r];
    out.d(static_cast<Eigen::Index>(r)) = bounds[r];
  }
  out.info = std::move(info);
  return out;
}

void check_dimensions(const Dataset& data, const PseudoOutcomes& pseudo, int k) {
  if (pseudo.phi.size() != data.n())
    throw_config("argument", "pseudo-outcome length does not match dataset");
  if (k > data.n())
    throw_numeric("over-parameterized", "basis dimension " + std::to_string(k) +
                                            " exceeds the sample size " +
                                            std::to_string(data.n()));
}

ApproxProgram quadratic_program(const Dataset& data, const PseudoOutcomes& pseudo,
                                const BasisSpec& basis,
                                const std::vector<ConstraintSpec>& constraints, double lambda,
                                const PseudoOutcomes* risk_pseudo, const NuisanceFit* nuis,
                                const std::string& loss, TransformTag expected_tag,
                                TransformTag expected_risk_tag) {
  if (lambda < 0.0) throw_config("argument", "lambda must be >= 0");
  if (pseudo.tag != expected_tag)
    throw_config("argument", "pseudo-outcomes carry transform '" + transform_name(pseudo.tag) +
                                 "', expected '" + transform_name(expected_tag) + "'");
  const Eigen::MatrixXd b = build_basis(data, basis);
  const int k = static_cast<int>(b.cols());
  check_dimensions(data, pseudo, k);
  const double n = static_cast<double>(data.n());

  ApproxProgram program;
  program.kind = ProgramKind::quadratic;
  program.k = k;
  program.Q = b.transpose() * b / n;
  program.Q = ((program.Q + program.Q.transpose()) / 2.0).eval();
  program.c = b.transpose() * pseudo.phi / n;
  program.lambda = lambda;
  program.meta.loss = loss;
  program.meta.delta = pseudo.delta.delta;
  program.meta.basis_desc = basis.describe();
  if (risk_pseudo != nullptr) {
    if (risk_pseudo->tag != expected_risk_tag)
      throw_config("argument", "risk pseudo-outcomes carry transform '" +
                                   transform_name(risk_pseudo->tag) + "', expected '" +
                                   transform_name(expected_risk_tag) + "'");
    if (risk_pseudo->delta.delta != pseudo.delta.delta)
      throw_config("argument", "risk pseudo-outcomes were computed at a different delta");
    program.meta.has_risk_const = true;
    program.meta.risk_const = risk_pseudo->phi.mean();
  }
  auto assembled =
      assemble_constraints(data, basis, k, constraints, nuis, pseudo.delta, program.meta);
  program.C = std::move(assembled.C);
  program.d = std::move(assembled.d);
  program.meta.row_info = std::move(assembled.info);
  return program;
}

}  // namespace

ApproxProgram build_l2_program(const Dataset& data, const PseudoOutcomes& pseudo,
                               const BasisSpec& basis,
                               const std::vector<ConstraintSpec>& constraints, double lambda,
                               const PseudoOutcomes* pseudo_square, const NuisanceFit* nuis) {
  return quadratic_program(data, pseudo, basis, constraints, lambda, pseudo_square, nuis, "l2",
                           TransformTag::identity, TransformTag::square);
}

ApproxProgram build_msle_program(const Dataset& data, const PseudoOutcomes& pseudo_log,
                                 const BasisSpec& basis,
                                 const std::vector<ConstraintSpec>& constraints, double lambda,
                                 const PseudoOutcomes* pseudo_log_sq, const NuisanceFit* nuis) {
  return quadratic_program(data, pseudo_log, basis, constraints, lambda, pseudo_log_sq, nuis,
                           "msle", TransformTag::log1p, TransformTag::log1p_square);
}

SmoothEval make_crossentropy_eval(Eigen::MatrixXd basis_rows, Eigen::VectorXd phi,
                                  double lambda) {
  struct State {
    Eigen::MatrixXd b;
    Eigen::VectorXd phi;
    double lambda;
    double n;
  };
  auto state = std::make_shared<State>(State{std::move(basis_rows), std::move(phi), lambda, 0.0});
  state->n = static_cast<double>(state->b.rows());

  SmoothEval eval;
  eval.value = [state](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = state->b * beta;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double t = eta(i);
      // -phi*log(f) - (1-phi)*log(1-f) for f = expit(t), written stably.
      const double log1pe = t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
      sum += log1pe - state->phi(i) * t;
    }
    return sum / state->n + state->lambda * beta.squaredNorm();
  };
  eval.grad = [state](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = state->b * beta;
    const Eigen::VectorXd f = eta.unaryExpr([](double t) { return expit(t); });
    return Eigen::VectorXd(state->b.transpose() * (f - state->phi) / state->n +
                           2.0 * state->lambda * beta);
  };
  eval.hess = [state](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = state->b * beta;
    Eigen::VectorXd w = eta.unaryExpr([](double t) {
      const double f = expit(t);
      return f * (1.0 - f);
    });
    Eigen::MatrixXd h = state->b.transpose() * w.asDiagonal() * state->b / state->n;
    h.diagonal().array() += 2.0 * state->lambda;
    return h;
  };
  return eval;
}

ApproxProgram build_crossentropy_program(const Dataset& data, const PseudoOutcomes& pseudo,
                                         const BasisSpec& basis,
                                         const std::vector<ConstraintSpec>& constraints,
                                         double lambda, bool clip01, const NuisanceFit* nuis) {
  if (lambda < 0.0) throw_config("argument", "lambda must be >= 0");
  if (pseudo.tag != TransformTag::identity)
    throw_config("argument", "cross-entropy expects identity-transform pseudo-outcomes");
  const Eigen::MatrixXd b = build_basis(data, basis);
  const int k = static_cast<int>(b.cols());
  check_dimensions(data, pseudo, k);

  ApproxProgram program;
  program.kind = ProgramKind::smooth_convex;
  program.k = k;
  program.lambda = lambda;
  program.meta.loss = "xent";
  program.meta.delta = pseudo.delta.delta;
  program.meta.basis_desc = basis.describe();

  Eigen::VectorXd phi = pseudo.phi;
  if (clip01) {
    phi = phi.cwiseMax(0.0).cwiseMin(1.0);
  } else if ((pseudo.phi.array() < -0.5).any() || (pseudo.phi.array() > 1.5).any()) {
    program.meta.warnings.push_back(
        "pseudo-outcomes far outside [0,1] with clip01 off; objective may be nonconvex");
  }
  program.smooth = make_crossentropy_eval(b, std::move(phi), lambda);

  auto assembled =
      assemble_constraints(data, basis, k, constraints, nuis, pseudo.delta, program.meta);
  program.C = std::move(assembled.C);
  program.d = std::move(assembled.d);
  program.meta.row_info = std::move(assembled.info);
  return program;
}

double risk_estimate(const ApproxProgram& program, const Eigen::VectorXd& beta) {
  if (beta.size() != program.k)
    throw_config("argument", "beta has length " + std::to_string(beta.size()) + ", expected " +
                                 std::to_string(program.k));
  if (program.kind == ProgramKind::quadratic)
    return 0.5 * beta.dot(program.Q * beta) - program.c.dot(beta) + program.meta.risk_const;
  return program.smooth.value(beta);
}

Eigen::VectorXd predict_outcomes(const std::string& loss, const Eigen::MatrixXd& basis_rows,
                                 const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = basis_rows * beta;
  if (loss == "msle") return eta.unaryExpr([](double t) { return std::expm1(t); });
  if (loss == "xent") return eta.unaryExpr([](double t) { return expit(t); });
  return eta;
}

}  // namespace incrementa
