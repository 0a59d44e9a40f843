#include "supmeter/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "supmeter/errors.hpp"

namespace supmeter {

namespace {

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                         " differ");
    }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("Matrix: data length " + std::to_string(data_.size()) + " != " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw ShapeError("Matrix::from_rows: ragged rows");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::column(std::span<const double> values) {
    return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

void Matrix::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + shape_str(a) + " * " + shape_str(b));
    }
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Matrix out(n, m);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        double* orow = po + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = pa[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = pb + p * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
        }
    }
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: " + shape_str(a) + "^T * " + shape_str(b));
    }
    const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
    Matrix out(n, m);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = pa + p * n;
        const double* brow = pb + p * m;
        for (std::size_t i = 0; i < n; ++i) {
            const double api = arow[i];
            if (api == 0.0) continue;
            double* orow = po + i * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += api * brow[j];
        }
    }
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: " + shape_str(a) + " * " + shape_str(b) + "^T");
    }
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    Matrix out(n, m);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = pa + i * k;
        for (std::size_t j = 0; j < m; ++j) {
            const double* brow = pb + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            po[i * m + j] = acc;
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
    return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    Matrix out = a;
    out += b;
    return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "operator-");
    Matrix out = a;
    auto o = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
    return out;
}

Matrix operator*(double s, const Matrix& a) {
    Matrix out = a;
    for (double& v : out.data()) v *= s;
    return out;
}

Matrix& operator+=(Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "operator+=");
    auto o = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
    return a;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix out = a;
    auto o = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bd[i];
    return out;
}

void add_column_broadcast(Matrix& a, std::span<const double> v) {
    if (v.size() != a.rows()) {
        throw ShapeError("add_column_broadcast: vector length " + std::to_string(v.size()) +
                         " vs " + std::to_string(a.rows()) + " rows");
    }
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double vr = v[r];
        for (double& x : a.row(r)) x += vr;
    }
}

std::vector<double> row_sums(const Matrix& a) {
    std::vector<double> out(a.rows(), 0.0);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        double acc = 0.0;
        for (double x : a.row(r)) acc += x;
        out[r] = acc;
    }
    return out;
}

double frobenius_sq(const Matrix& a) {
    double acc = 0.0;
    for (double x : a.data()) acc += x * x;
    return acc;
}

bool all_finite(const Matrix& a) noexcept {
    return std::all_of(a.data().begin(), a.data().end(), [](double x) { return std::isfinite(x); });
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "max_abs_diff");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    return worst;
}

Matrix column_range(const Matrix& a, std::size_t first, std::size_t count) {
    if (first + count > a.cols()) {
        throw ShapeError("column_range: [" + std::to_string(first) + ", " +
                         std::to_string(first + count) + ") exceeds " + std::to_string(a.cols()));
    }
    Matrix out(a.rows(), count);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto src = a.row(r).subspan(first, count);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

Matrix gather_columns(const Matrix& a, std::span<const std::size_t> indices) {
    Matrix out(a.rows(), indices.size());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto src = a.row(r);
        auto dst = out.row(r);
        for (std::size_t j = 0; j < indices.size(); ++j) {
            if (indices[j] >= a.cols()) throw ShapeError("gather_columns: index out of range");
            dst[j] = src[indices[j]];
        }
    }
    return out;
}

}  // namespace supmeter
