#include "supmeter/json_io.hpp"

#include "supmeter/errors.hpp"

namespace supmeter {

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw IoError("matrix JSON must be an array of rows");
    const std::size_t rows = j.size();
    const std::size_t cols = rows == 0 ? 0 : j.front().size();
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols) throw IoError("matrix JSON rows are ragged");
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

std::vector<double> vector_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw IoError("vector JSON must be an array");
    return j.get<std::vector<double>>();
}

}  // namespace supmeter
