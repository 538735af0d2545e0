#include "incrementa/nuisance.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "incrementa/errors.hpp"

namespace incrementa {

NuisanceFit::NuisanceFit(Eigen::VectorXd pi1_raw,
                         std::map<TransformTag, std::pair<Eigen::VectorXd, Eigen::VectorXd>> mu,
                         std::vector<int> fold_of, double clip,
                         std::vector<std::string> warnings)
    : pi1_(std::move(pi1_raw)),
      mu_(std::move(mu)),
      fold_of_(std::move(fold_of)),
      clip_(clip),
      warnings_(std::move(warnings)) {
  if (clip_ < 0.0 || clip_ >= 0.5)
    throw_config("argument", "clip must lie in [0, 0.5)");
  const auto n = pi1_.size();
  if (fold_of_.empty()) fold_of_.assign(static_cast<size_t>(n), 0);
  if (static_cast<Eigen::Index>(fold_of_.size()) != n)
    throw_config("argument", "fold assignment length does not match n");
  for (auto& [tag, pair] : mu_) {
    if (pair.first.size() != n || pair.second.size() != n)
      throw_config("argument",
                   "mu lengths for transform '" + transform_name(tag) + "' do not match n");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(pi1_(i)) || pi1_(i) <= 0.0 || pi1_(i) >= 1.0)
      throw_numeric("propensity", "raw propensity outside (0,1) at row " + std::to_string(i));
    if (clip_ > 0.0) pi1_(i) = std::min(std::max(pi1_(i), clip_), 1.0 - clip_);
  }
}

const Eigen::VectorXd& NuisanceFit::mu0(TransformTag tag) const {
  auto it = mu_.find(tag);
  if (it == mu_.end())
    throw_config("configuration",
                 "nuisance fit lacks outcome regressions for transform '" +
                     transform_name(tag) + "'");
  return it->second.first;
}

const Eigen::VectorXd& NuisanceFit::mu1(TransformTag tag) const {
  auto it = mu_.find(tag);
  if (it == mu_.end())
    throw_config("configuration",
                 "nuisance fit lacks outcome regressions for transform '" +
                     transform_name(tag) + "'");
  return it->second.second;
}

namespace {

// Column scales (RMS) for conditioning; zero columns keep scale 1.
Eigen::VectorXd column_scales(const Eigen::MatrixXd& b) {
  Eigen::VectorXd s(b.cols());
  for (Eigen::Index j = 0; j < b.cols(); ++j) {
    const double rms = std::sqrt(b.col(j).squaredNorm() / static_cast<double>(b.rows()));
    s(j) = rms > 0.0 ? rms : 1.0;
  }
  return s;
}

double bernoulli_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& a) {
  // sum a*log(p) + (1-a)*log(1-p) = sum a*eta - log(1+exp(eta)), stably.
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double t = eta(i);
    const double log1pe = t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
    ll += a(i) * t - log1pe;
  }
  return ll;
}

struct FoldSplit {
  std::vector<int> train_rows;
  std::vector<int> test_rows;
};

std::vector<FoldSplit> make_splits(const std::vector<int>& folds, int n) {
  int k = 0;
  for (int f : folds) k = std::max(k, f + 1);
  std::vector<FoldSplit> splits(static_cast<size_t>(k));
  for (int i = 0; i < n; ++i) {
    for (int f = 0; f < k; ++f) {
      if (k == 1 || folds[i] != f) splits[f].train_rows.push_back(i);
      if (folds[i] == f) splits[f].test_rows.push_back(i);
    }
  }
  return splits;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<int>& rows) {
  Eigen::MatrixXd out(rows.size(), m.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

Eigen::VectorXd take_rows(const Eigen::VectorXd& v, const std::vector<int>& rows) {
  Eigen::VectorXd out(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(rows[i]);
  return out;
}

}  // namespace

PropensityFit fit_propensity_logistic(const Dataset& data, const DesignSpec& features,
                                      const std::vector<int>& folds) {
  const Eigen::MatrixXd b_all = build_design(data, features);
  const int n = data.n();
  const int k = static_cast<int>(b_all.cols());
  Eigen::VectorXd a(n);
  for (int i = 0; i < n; ++i) a(i) = data.a()[i];

  PropensityFit fit;
  fit.pi1_raw.resize(n);
  const auto splits = make_splits(folds, n);
  for (const auto& split : splits) {
    const Eigen::MatrixXd b_tr = take_rows(b_all, split.train_rows);
    const Eigen::VectorXd a_tr = take_rows(a, split.train_rows);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(b_tr);
    qr.setThreshold(1e-10);
    if (qr.rank() < k)
      throw_numeric("singularity", "propensity design matrix is rank-deficient on a training fold");

    const Eigen::VectorXd scale = column_scales(b_tr);
    const Eigen::MatrixXd bs = b_tr * scale.cwiseInverse().asDiagonal();
    const auto m = static_cast<double>(bs.rows());

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd eta = bs * theta;
    double ll = bernoulli_loglik(eta, a_tr);
    bool separated = false;
    for (int iter = 0; iter < 200; ++iter) {
      const Eigen::VectorXd p = eta.unaryExpr([](double t) { return expit(t); });
      const Eigen::VectorXd grad = bs.transpose() * (a_tr - p) / m;
      if (grad.cwiseAbs().maxCoeff() <= 1e-9) break;
      Eigen::VectorXd w = p.array() * (1.0 - p.array());
      w = w.cwiseMax(1e-10);
      const Eigen::MatrixXd h = bs.transpose() * w.asDiagonal() * bs / m;
      Eigen::VectorXd step = h.ldlt().solve(grad);
      // Damping: halve until the log-likelihood does not decrease.
      double alpha = 1.0;
      for (int half = 0; half < 40; ++half) {
        const Eigen::VectorXd cand = theta + alpha * step;
        const Eigen::VectorXd eta_c = bs * cand;
        const double ll_c = bernoulli_loglik(eta_c, a_tr);
        if (ll_c >= ll - 1e-14 * std::abs(ll)) {
          theta = cand;
          eta = eta_c;
          ll = ll_c;
          break;
        }
        alpha *= 0.5;
      }
      const Eigen::VectorXd coef = theta.cwiseQuotient(scale);
      if (coef.norm() > 1e4) {
        separated = true;
        break;
      }
    }
    if (separated)
      fit.warnings.push_back("separation: propensity coefficients diverged; predictions clipped");

    const Eigen::VectorXd coef = theta.cwiseQuotient(scale);
    fit.fold_coefs.push_back(coef);
    for (int row : split.test_rows) {
      double p = expit(b_all.row(row).dot(coef));
      // Keep raw predictions inside the open interval; NuisanceFit clips later.
      p = std::min(std::max(p, 1e-12), 1.0 - 1e-12);
      fit.pi1_raw(row) = p;
    }
  }
  return fit;
}

OutcomeFit fit_outcome_ls(const Dataset& data, TransformTag transform, int arm,
                          const DesignSpec& features, const std::vector<int>& folds) {
  if (arm != 0 && arm != 1) throw_config("argument", "arm must be 0 or 1");
  const Eigen::MatrixXd b_all = build_design(data, features);
  const int n = data.n();
  const int k = static_cast<int>(b_all.cols());
  Eigen::VectorXd t(n);
  for (int i = 0; i < n; ++i) t(i) = apply_transform(transform, data.y()(i));

  OutcomeFit fit;
  fit.pred.resize(n);
  const auto splits = make_splits(folds, n);
  for (const auto& split : splits) {
    std::vector<int> arm_rows;
    for (int row : split.train_rows)
      if (data.a()[row] == arm) arm_rows.push_back(row);
    if (static_cast<int>(arm_rows.size()) < k)
      throw_data("insufficient-arm-data",
                 "training fold has " + std::to_string(arm_rows.size()) + " rows with A=" +
                     std::to_string(arm) + " but the design has " + std::to_string(k) +
                     " columns");

    const Eigen::MatrixXd b_tr = take_rows(b_all, arm_rows);
    const Eigen::VectorXd t_tr = take_rows(t, arm_rows);
    const Eigen::VectorXd scale = column_scales(b_tr);
    const Eigen::MatrixXd bs = b_tr * scale.cwiseInverse().asDiagonal();

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(bs);
    qr.setThreshold(1e-10);
    Eigen::VectorXd theta;
    if (qr.rank() < k) {
      const Eigen::MatrixXd gram = bs.transpose() * bs;
      const double ridge = 1e-8 * gram.trace();
      theta = (gram + ridge * Eigen::MatrixXd::Identity(k, k)).ldlt().solve(bs.transpose() * t_tr);
      fit.warnings.push_back("rank-deficient outcome design; ridge fallback applied");
    } else {
      theta = qr.solve(t_tr);
      // Refine on the normal equations until the relative residual is <= 1e-10.
      const Eigen::VectorXd rhs = bs.transpose() * t_tr;
      const double rhs_norm = std::max(rhs.norm(), 1e-300);
      for (int refine = 0; refine < 5; ++refine) {
        const Eigen::VectorXd resid = bs.transpose() * (t_tr - bs * theta);
        if (resid.norm() / rhs_norm <= 1e-10) break;
        theta += qr.solve(t_tr - bs * theta);
      }
    }

    const Eigen::VectorXd coef = theta.cwiseQuotient(scale);
    fit.fold_coefs.push_back(coef);
    for (int row : split.test_rows) fit.pred(row) = b_all.row(row).dot(coef);
  }
  return fit;
}

NuisanceFit corrupted_oracle_nuisances(const Dataset& data, const OracleNuisanceFns& truth,
                                       double r, SeedSpec seed, const CorruptionOptions& opts) {
  if (!(r > 0.0 && r < 0.5))
    throw_config("argument", "rate exponent r must lie in (0, 0.5), got " + std::to_string(r));
  if (!truth.pi1) throw_config("argument", "oracle truth lacks a propensity function");
  const int n = data.n();
  const double mean = std::pow(static_cast<double>(n), -r);
  const double sd = mean;  // N(n^-r, n^-2r)

  CounterRng rng(seed);
  Eigen::VectorXd eps_pi(n), eps_mu(n);
  if (opts.per_observation) {
    for (int i = 0; i < n; ++i) eps_pi(i) = rng.normal(mean, sd);
    for (int i = 0; i < n; ++i) eps_mu(i) = rng.normal(mean, sd);
  } else {
    eps_pi.setConstant(rng.normal(mean, sd));
    eps_mu.setConstant(rng.normal(mean, sd));
  }

  Eigen::VectorXd pi1(n);
  for (int i = 0; i < n; ++i) {
    const double p = truth.pi1(data.x().row(i));
    pi1(i) = expit(logit(std::min(std::max(p, 1e-12), 1.0 - 1e-12)) + eps_pi(i));
    pi1(i) = std::min(std::max(pi1(i), 1e-12), 1.0 - 1e-12);
  }
  std::map<TransformTag, std::pair<Eigen::VectorXd, Eigen::VectorXd>> mu;
  for (const auto& [tag, fn] : truth.mu) {
    Eigen::VectorXd m0(n), m1(n);
    for (int i = 0; i < n; ++i) {
      m0(i) = fn(data.x().row(i), 0) + eps_mu(i);
      m1(i) = fn(data.x().row(i), 1) + eps_mu(i);
    }
    mu.emplace(tag, std::make_pair(std::move(m0), std::move(m1)));
  }
  return NuisanceFit(std::move(pi1), std::move(mu), {}, opts.clip);
}

NuisanceFit exact_nuisances(const Dataset& data, const OracleNuisanceFns& truth,
                            const std::vector<TransformTag>& tags, double clip) {
  const int n = data.n();
  Eigen::VectorXd pi1(n);
  for (int i = 0; i < n; ++i) {
    const double p = truth.pi1(data.x().row(i));
    pi1(i) = std::min(std::max(p, 1e-12), 1.0 - 1e-12);
  }
  std::map<TransformTag, std::pair<Eigen::VectorXd, Eigen::VectorXd>> mu;
  for (TransformTag tag : tags) {
    auto it = truth.mu.find(tag);
    if (it == truth.mu.end())
      throw_config("configuration",
                   "oracle truth lacks mu for transform '" + transform_name(tag) + "'");
    Eigen::VectorXd m0(n), m1(n);
    for (int i = 0; i < n; ++i) {
      m0(i) = it->second(data.x().row(i), 0);
      m1(i) = it->second(data.x().row(i), 1);
    }
    mu.emplace(tag, std::make_pair(std::move(m0), std::move(m1)));
  }
  return NuisanceFit(std::move(pi1), std::move(mu), {}, clip);
}

NuisanceFit fit_nuisances(const Dataset& data, const NuisanceConfig& config) {
  const auto folds = split_folds(data.n(), config.folds, config.seed);
  auto prop = fit_propensity_logistic(data, config.propensity_design, folds);
  std::vector<std::string> warnings = std::move(prop.warnings);
  std::map<TransformTag, std::pair<Eigen::VectorXd, Eigen::VectorXd>> mu;
  for (TransformTag tag : config.transforms) {
    auto f0 = fit_outcome_ls(data, tag, 0, config.outcome_design, folds);
    auto f1 = fit_outcome_ls(data, tag, 1, config.outcome_design, folds);
    warnings.insert(warnings.end(), f0.warnings.begin(), f0.warnings.end());
    warnings.insert(warnings.end(), f1.warnings.begin(), f1.warnings.end());
    mu.emplace(tag, std::make_pair(std::move(f0.pred), std::move(f1.pred)));
  }
  return NuisanceFit(std::move(prop.pi1_raw), std::move(mu), folds, config.clip,
                     std::move(warnings));
}

NuisanceFit import_nuisance_csv(const std::string& path, int n, double clip) {
  std::ifstream in(path);
  if (!in) throw_data("io", "cannot open nuisance file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw_data("empty-input", "nuisance file is empty: " + path);

  std::vector<std::string> names;
  {
    std::stringstream ss(header);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      size_t b = cell.find_first_not_of(" \t\r\n");
      size_t e = cell.find_last_not_of(" \t\r\n");
      names.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
  }
  int pi_idx = -1;
  struct MuCol { TransformTag tag; int arm; int idx; };
  std::vector<MuCol> mu_cols;
  for (size_t j = 0; j < names.size(); ++j) {
    if (names[j] == "pi1") {
      pi_idx = static_cast<int>(j);
    } else if (names[j].rfind("mu0_", 0) == 0) {
      mu_cols.push_back({transform_from_name(names[j].substr(4)), 0, static_cast<int>(j)});
    } else if (names[j].rfind("mu1_", 0) == 0) {
      mu_cols.push_back({transform_from_name(names[j].substr(4)), 1, static_cast<int>(j)});
    } else {
      throw_data("schema", "unrecognized nuisance column '" + names[j] + "'");
    }
  }
  if (pi_idx < 0) throw_data("schema", "nuisance file lacks a pi1 column");

  Eigen::VectorXd pi1(n);
  std::map<TransformTag, std::pair<Eigen::VectorXd, Eigen::VectorXd>> mu;
  for (const auto& mc : mu_cols) {
    if (!mu.count(mc.tag))
      mu.emplace(mc.tag, std::make_pair(Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)));
  }

  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    if (row >= n) throw_data("schema", "nuisance file has more rows than the dataset");
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      errno = 0;
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || errno == ERANGE || !std::isfinite(v))
        throw_data("parse", "bad nuisance value at data row " + std::to_string(row + 1));
      vals.push_back(v);
    }
    if (vals.size() != names.size())
      throw_data("parse", "ragged nuisance row at data row " + std::to_string(row + 1));
    pi1(row) = vals[pi_idx];
    for (const auto& mc : mu_cols) {
      auto& pair = mu.at(mc.tag);
      (mc.arm == 0 ? pair.first : pair.second)(row) = vals[mc.idx];
    }
    ++row;
  }
  if (row != n)
    throw_data("schema", "nuisance file has " + std::to_string(row) + " rows, expected " +
                             std::to_string(n));
  return NuisanceFit(std::move(pi1), std::move(mu), {}, clip);
}

}  // namespace incrementa
