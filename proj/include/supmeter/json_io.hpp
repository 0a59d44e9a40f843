#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "supmeter/matrix.hpp"

namespace supmeter {

/// Nested row arrays.
nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);
std::vector<double> vector_from_json(const nlohmann::json& j);

}  // namespace supmeter
