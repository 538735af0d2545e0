#pragma once

#include <Eigen/Dense>
#include <string>

#include <json.hpp>

#include "incrementa/inference.hpp"
#include "incrementa/program.hpp"
#include "incrementa/solver.hpp"

namespace incrementa {

// Insertion-ordered JSON keeps artifact bytes stable across reruns.
using Json = nlohmann::ordered_json;

Json to_json(const Eigen::VectorXd& v);
Json to_json(const Eigen::MatrixXd& m);
Eigen::VectorXd vector_from_json(const Json& j);
Eigen::MatrixXd matrix_from_json(const Json& j);

Json solve_result_to_json(const SolveResult& result);
Json inference_to_json(const InferenceResult& result);

/// Debug dump of an assembled quadratic program (Q, c, C, d, lambda, meta).
Json program_to_json(const ApproxProgram& program);

/// Reads a program dump back for the solve-qp command. Only the quadratic
/// kind round-trips; meta is optional.
ApproxProgram program_from_json(const Json& j);

void write_text_file(const std::string& path, const std::string& contents);
std::string read_text_file(const std::string& path);

/// Formats a real with 17 significant digits (CSV round-trip precision).
std::string format_real(double v);

}  // namespace incrementa
