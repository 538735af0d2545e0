#include "incrementa/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "incrementa/errors.hpp"

namespace incrementa {

Json to_json(const Eigen::VectorXd& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Json to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) throw_data("parse", "expected a JSON array for a vector");
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  if (!j.is_array()) throw_data("parse", "expected a JSON array of rows for a matrix");
  const size_t rows = j.size();
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  const size_t cols = j[0].size();
  Eigen::MatrixXd m(rows, cols);
  for (size_t i = 0; i < rows; ++i) {
    if (j[i].size() != cols) throw_data("parse", "ragged matrix rows in JSON");
    for (size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
  }
  return m;
}

Json solve_result_to_json(const SolveResult& result) {
  Json j;
  j["beta"] = to_json(result.beta);
  j["gamma"] = to_json(result.gamma);
  j["active"] = result.active;
  j["kkt_residual"] = result.kkt_residual;
  j["iterations"] = result.iterations;
  j["status"] = status_name(result.status);
  j["objective"] = result.objective;
  j["sc_flags"] = result.sc_flags;
  j["warnings"] = result.warnings;
  return j;
}

Json inference_to_json(const InferenceResult& result) {
  Json j;
  j["method"] = result.method;
  j["cov"] = to_json(result.cov);
  j["se"] = to_json(result.se);
  if (result.method == "sandwich_linear") j["upsilon_cov"] = to_json(result.upsilon_cov);
  j["licq_ok"] = result.licq_ok;
  j["sc_flags"] = result.sc_flags;
  if (result.method == "bootstrap") j["dropped_replicates"] = result.dropped_replicates;
  j["warnings"] = result.warnings;
  return j;
}

Json program_to_json(const ApproxProgram& program) {
  if (program.kind != ProgramKind::quadratic)
    throw_config("argument", "only quadratic programs serialize to JSON");
  Json j;
  j["schema_version"] = 1;
  j["kind"] = "quadratic";
  j["Q"] = to_json(program.Q);
  j["c"] = to_json(program.c);
  j["C"] = to_json(program.C);
  j["d"] = to_json(program.d);
  j["lambda"] = program.lambda;
  Json meta;
  meta["loss"] = program.meta.loss;
  meta["delta"] = program.meta.delta;
  meta["basis"] = program.meta.basis_desc;
  meta["has_risk_const"] = program.meta.has_risk_const;
  meta["risk_const"] = program.meta.risk_const;
  meta["warnings"] = program.meta.warnings;
  j["meta"] = std::move(meta);
  return j;
}

ApproxProgram program_from_json(const Json& j) {
  ApproxProgram p;
  p.kind = ProgramKind::quadratic;
  p.Q = matrix_from_json(j.at("Q"));
  p.c = vector_from_json(j.at("c"));
  p.k = static_cast<int>(p.Q.rows());
  if (j.contains("C") && !j.at("C").empty()) {
    p.C = matrix_from_json(j.at("C"));
    p.d = vector_from_json(j.at("d"));
  } else {
    p.C = Eigen::MatrixXd(0, p.k);
    p.d = Eigen::VectorXd(0);
  }
  p.lambda = j.value("lambda", 0.0);
  if (j.contains("meta")) {
    p.meta.loss = j["meta"].value("loss", "");
    p.meta.delta = j["meta"].value("delta", 1.0);
    p.meta.basis_desc = j["meta"].value("basis", "");
    p.meta.has_risk_const = j["meta"].value("has_risk_const", false);
    p.meta.risk_const = j["meta"].value("risk_const", 0.0);
  }
  if (p.Q.cols() != p.k || p.c.size() != p.k || (p.C.rows() > 0 && p.C.cols() != p.k) ||
      p.C.rows() != p.d.size())
    throw_data("parse", "inconsistent program dimensions in JSON");
  return p;
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_data("io", "cannot open file for writing: " + path);
  out << contents;
  if (!out) throw_data("io", "failed writing file: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data("io", "cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace incrementa
