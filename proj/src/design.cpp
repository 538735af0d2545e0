#include "incrementa/design.hpp"

#include "incrementa/errors.hpp"

namespace incrementa {

Eigen::MatrixXd build_design(const Eigen::MatrixXd& x, const DesignSpec& spec) {
  std::vector<int> cols = spec.columns;
  if (cols.empty() && spec.degree > 0)
    for (int j = 0; j < x.cols(); ++j) cols.push_back(j);
  for (int c : cols)
    if (c < 0 || c >= x.cols())
      throw_config("argument", "design column index " + std::to_string(c) + " out of range");

  const int k = (spec.intercept ? 1 : 0) + static_cast<int>(cols.size()) * std::max(spec.degree, 0);
  if (k < 1) throw_config("argument", "design has no columns");

  Eigen::MatrixXd b(x.rows(), k);
  int out = 0;
  if (spec.intercept) b.col(out++).setOnes();
  for (int c : cols) {
    Eigen::VectorXd pow_col = x.col(c);
    for (int d = 1; d <= spec.degree; ++d) {
      b.col(out++) = pow_col;
      if (d < spec.degree) pow_col = pow_col.cwiseProduct(x.col(c));
    }
  }
  return b;
}

Eigen::MatrixXd build_design(const Dataset& data, const DesignSpec& spec) {
  return build_design(data.x(), spec);
}

}  // namespace incrementa
