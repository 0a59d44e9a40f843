#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace supmeter {

/// Dense row-major matrix of doubles.
///
/// Column/row meaning is fixed per use site: activations are stored
/// features x samples, weights as out x in.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    /// Builds from nested row lists; all rows must have equal length.
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix identity(std::size_t n);
    /// n x 1 column holding `values`.
    static Matrix column(std::span<const double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    void fill(double value) noexcept;

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a·bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);
Matrix& operator+=(Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);

/// Adds `v` (length a.rows()) to every column.
void add_column_broadcast(Matrix& a, std::span<const double> v);
/// Sum over columns; result has length a.rows().
std::vector<double> row_sums(const Matrix& a);

double frobenius_sq(const Matrix& a);
bool all_finite(const Matrix& a) noexcept;
double max_abs_diff(const Matrix& a, const Matrix& b);

/// Columns `[first, first + count)`.
Matrix column_range(const Matrix& a, std::size_t first, std::size_t count);
/// Columns in the order given by `indices`.
Matrix gather_columns(const Matrix& a, std::span<const std::size_t> indices);

}  // namespace supmeter
