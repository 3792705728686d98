#pragma once

#include <cstddef>
#include <initializer_list>
#include <utility>
#include <vector>

#include "smim/common.hpp"

namespace smim {

/// Dense row-major matrix of 64-bit reals. The universal numeric carrier:
/// minibatches, logits, weight matrices and image blocks all live here.
///
/// Data entering through a public constructor is checked for NaN/Inf;
/// element writes through operator() are unchecked.
class Matrix {
public:
    Matrix() = default;

    // Zero-filled r x c matrix.
    Matrix(std::size_t r, std::size_t c) : rows_(r), cols_(c), data_(r * c, 0.0) {}

    // Takes ownership of a flat row-major buffer. Rejects wrong length and
    // non-finite entries.
    Matrix(std::size_t r, std::size_t c, std::vector<double> flat);

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row_ptr(std::size_t i) { return data_.data() + i * cols_; }
    const double* row_ptr(std::size_t i) const { return data_.data() + i * cols_; }

    std::vector<double>& flat() { return data_; }
    const std::vector<double>& flat() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    // "3x4"-style shape string for error messages.
    std::string shape_str() const;

    bool all_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Which index is collapsed by a reduction. Axis::Rows collapses the row
/// index: one statistic per column, computed over all rows.
enum class Axis { Rows, Cols };

/// Standard matrix product with a fixed summation order: every output cell
/// accumulates over k strictly left to right, so results are reproducible
/// bit-for-bit across runs.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

/// Per-axis mean and population standard deviation (divide by n, not n-1).
/// Empty input is a DomainError.
struct AxisStats {
    std::vector<double> mean;
    std::vector<double> std_dev;
};
AxisStats axis_stats(const Matrix& m, Axis axis);

// Elementwise helpers; shapes must agree.
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace smim
