#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "incrementa/rng.hpp"

namespace incrementa {

/// Column roles recognized by the CSV loader. Covariate columns keep their
/// header names; the sensitive feature F and legitimate factor L are
/// designated covariate columns, not separate storage.
enum class ColumnRole { outcome, treatment, covariate, sensitive, legitimate };

/// Immutable observational sample (Y, A, X). Constructed once, then shared
/// freely across threads.
class Dataset {
 public:
  Dataset(Eigen::VectorXd y, std::vector<int> a, Eigen::MatrixXd x,
          std::vector<std::string> x_names, std::optional<int> f_col = std::nullopt,
          std::optional<int> l_col = std::nullopt);

  int n() const { return static_cast<int>(y_.size()); }
  int p() const { return static_cast<int>(x_.cols()); }

  const Eigen::VectorXd& y() const { return y_; }
  const std::vector<int>& a() const { return a_; }
  const Eigen::MatrixXd& x() const { return x_; }
  const std::vector<std::string>& x_names() const { return x_names_; }

  bool has_sensitive() const { return f_col_.has_value(); }
  bool has_legitimate() const { return l_col_.has_value(); }

  /// Sensitive feature value F_i in {0,1}. Requires has_sensitive().
  int f(int i) const;
  /// Legitimate factor level L_i (integer-coded). Requires has_legitimate().
  int l(int i) const;

  int f_col() const;
  int l_col() const;

 private:
  Eigen::VectorXd y_;
  std::vector<int> a_;
  Eigen::MatrixXd x_;
  std::vector<std::string> x_names_;
  std::optional<int> f_col_;
  std::optional<int> l_col_;
};

/// Loads a comma-separated UTF-8 file with a mandatory header row.
/// column_map assigns roles by header name; every header must be mapped.
/// Exactly one outcome and one treatment role are required, and at least one
/// covariate/sensitive/legitimate column. Non-finite cells, non-binary
/// treatment or sensitive values, and ragged rows are rejected with the
/// offending 1-based data row in the message.
Dataset load_csv(const std::string& path, const std::map<std::string, ColumnRole>& column_map);

/// Writes `data` with header y,a,<covariates...>. Reals are printed with 17
/// significant digits so a reload reproduces the values bit for bit.
void write_csv(const Dataset& data, const std::string& path);

/// Deterministic cross-fitting assignment: a Fisher-Yates shuffle of
/// 0..n-1 driven by CounterRng(seed) (swap index j = next_u64() % (i+1),
/// i from n-1 down to 1), then position p in the shuffled order gets fold
/// p % k. Fold sizes differ by at most one; k == 1 assigns all rows fold 0.
std::vector<int> split_folds(int n, int k, SeedSpec seed);

}  // namespace incrementa
