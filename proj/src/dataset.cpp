#include "incrementa/dataset.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "incrementa/errors.hpp"

namespace incrementa {

Dataset::Dataset(Eigen::VectorXd y, std::vector<int> a, Eigen::MatrixXd x,
                 std::vector<std::string> x_names, std::optional<int> f_col,
                 std::optional<int> l_col)
    : y_(std::move(y)),
      a_(std::move(a)),
      x_(std::move(x)),
      x_names_(std::move(x_names)),
      f_col_(f_col),
      l_col_(l_col) {
  const auto n = y_.size();
  if (n < 1) throw_data("empty-input", "dataset must contain at least one row");
  if (static_cast<Eigen::Index>(a_.size()) != n || x_.rows() != n)
    throw_data("schema", "column lengths differ");
  if (x_names_.size() != static_cast<size_t>(x_.cols()))
    throw_data("schema", "covariate name count does not match matrix width");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(y_(i)))
      throw_data("parse", "non-finite outcome at data row " + std::to_string(i + 1));
    if (a_[i] != 0 && a_[i] != 1)
      throw_data("parse", "treatment must be 0 or 1 at data row " + std::to_string(i + 1));
    for (Eigen::Index j = 0; j < x_.cols(); ++j)
      if (!std::isfinite(x_(i, j)))
        throw_data("parse", "non-finite covariate at data row " + std::to_string(i + 1));
  }
  if (f_col_) {
    if (*f_col_ < 0 || *f_col_ >= x_.cols())
      throw_data("schema", "sensitive column index out of range");
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = x_(i, *f_col_);
      if (v != 0.0 && v != 1.0)
        throw_data("parse",
                   "sensitive feature must be 0 or 1 at data row " + std::to_string(i + 1));
    }
  }
  if (l_col_) {
    if (*l_col_ < 0 || *l_col_ >= x_.cols())
      throw_data("schema", "legitimate-factor column index out of range");
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = x_(i, *l_col_);
      if (v != std::floor(v))
        throw_data("parse", "legitimate factor must be integer-coded at data row " +
                                std::to_string(i + 1));
    }
  }
}

int Dataset::f(int i) const {
  if (!f_col_) throw_config("configuration", "sensitive feature required but not designated");
  return static_cast<int>(x_(i, *f_col_));
}

int Dataset::l(int i) const {
  if (!l_col_) throw_config("configuration", "legitimate factor required but not designated");
  return static_cast<int>(x_(i, *l_col_));
}

int Dataset::f_col() const {
  if (!f_col_) throw_config("configuration", "sensitive feature required but not designated");
  return *f_col_;
}

int Dataset::l_col() const {
  if (!l_col_) throw_config("configuration", "legitimate factor required but not designated");
  return *l_col_;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::string strip(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& cell, int row) {
  const std::string s = strip(cell);
  if (s.empty()) throw_data("parse", "empty cell at data row " + std::to_string(row));
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE)
    throw_data("parse", "non-numeric value '" + s + "' at data row " + std::to_string(row));
  if (!std::isfinite(v))
    throw_data("parse", "non-finite value '" + s + "' at data row " + std::to_string(row));
  return v;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::map<std::string, ColumnRole>& column_map) {
  std::ifstream in(path);
  if (!in) throw_data("io", "cannot open file: " + path);

  std::string header;
  if (!std::getline(in, header)) throw_data("empty-input", "file is empty: " + path);
  const auto names = split_line(header);
  if (names.empty()) throw_data("schema", "header row has no columns");

  std::vector<ColumnRole> roles(names.size());
  int y_idx = -1, a_idx = -1;
  std::vector<int> cov_cols;  // indices into the CSV, in header order
  for (size_t j = 0; j < names.size(); ++j) {
    const std::string name = strip(names[j]);
    auto it = column_map.find(name);
    if (it == column_map.end())
      throw_data("schema", "column '" + name + "' has no role in the column map");
    roles[j] = it->second;
    switch (it->second) {
      case ColumnRole::outcome:
        if (y_idx >= 0) throw_data("schema", "multiple outcome columns");
        y_idx = static_cast<int>(j);
        break;
      case ColumnRole::treatment:
        if (a_idx >= 0) throw_data("schema", "multiple treatment columns");
        a_idx = static_cast<int>(j);
        break;
      default:
        cov_cols.push_back(static_cast<int>(j));
    }
  }
  for (const auto& [name, role] : column_map) {
    bool found = false;
    for (const auto& h : names)
      if (strip(h) == name) found = true;
    if (!found) throw_data("schema", "mapped column '" + name + "' missing from header");
  }
  if (y_idx < 0) throw_data("schema", "no outcome column mapped");
  if (a_idx < 0) throw_data("schema", "no treatment column mapped");
  if (cov_cols.empty()) throw_data("schema", "at least one covariate column is required");

  std::optional<int> f_col, l_col;
  std::vector<std::string> x_names;
  for (size_t c = 0; c < cov_cols.size(); ++c) {
    const int j = cov_cols[c];
    x_names.push_back(strip(names[j]));
    if (roles[j] == ColumnRole::sensitive) {
      if (f_col) throw_data("schema", "multiple sensitive columns");
      f_col = static_cast<int>(c);
    }
    if (roles[j] == ColumnRole::legitimate) {
      if (l_col) throw_data("schema", "multiple legitimate-factor columns");
      l_col = static_cast<int>(c);
    }
  }

  std::vector<double> ys;
  std::vector<int> as;
  std::vector<double> xs;  // row-major staging
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (strip(line).empty()) continue;
    ++row;
    const auto cells = split_line(line);
    if (cells.size() != names.size())
      throw_data("parse", "expected " + std::to_string(names.size()) + " cells, got " +
                              std::to_string(cells.size()) + " at data row " +
                              std::to_string(row));
    ys.push_back(parse_real(cells[y_idx], row));
    const double av = parse_real(cells[a_idx], row);
    if (av != 0.0 && av != 1.0)
      throw_data("parse", "treatment must be 0 or 1, got '" + strip(cells[a_idx]) +
                              "' at data row " + std::to_string(row));
    as.push_back(static_cast<int>(av));
    for (int j : cov_cols) xs.push_back(parse_real(cells[j], row));
  }
  if (row == 0) throw_data("empty-input", "file has a header but no data rows: " + path);

  const int n = row;
  const int p = static_cast<int>(cov_cols.size());
  Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
  Eigen::MatrixXd x(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) x(i, j) = xs[static_cast<size_t>(i) * p + j];

  return Dataset(std::move(y), std::move(as), std::move(x), std::move(x_names), f_col, l_col);
}

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw_data("io", "cannot open file for writing: " + path);
  out << "y,a";
  for (const auto& name : data.x_names()) out << ',' << name;
  out << '\n';
  char buf[64];
  for (int i = 0; i < data.n(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", data.y()(i));
    out << buf << ',' << data.a()[i];
    for (int j = 0; j < data.p(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.x()(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

std::vector<int> split_folds(int n, int k, SeedSpec seed) {
  if (k < 1 || k > n)
    throw_config("argument", "fold count k must satisfy 1 <= k <= n, got k=" + std::to_string(k) +
                                 ", n=" + std::to_string(n));
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng(seed);
  for (int i = n - 1; i >= 1; --i) {
    const auto j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(i) + 1));
    std::swap(order[i], order[j]);
  }
  std::vector<int> fold(n);
  for (int pos = 0; pos < n; ++pos) fold[order[pos]] = pos % k;
  return fold;
}

}  // namespace incrementa
