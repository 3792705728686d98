#include "smim/matrix.hpp"

#include <cmath>
#include <cstdlib>

namespace smim {

namespace {

[[noreturn]] void throw_shape(const char* op, const Matrix& a, const Matrix& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                     b.shape_str());
}

}  // namespace

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> flat)
    : rows_(r), cols_(c), data_(std::move(flat)) {
    if (data_.size() != r * c) {
        throw ShapeError("Matrix: buffer length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str());
    }
    if (!all_finite()) {
        throw DomainError("Matrix: non-finite entry in " + shape_str() + " construction");
    }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> flat;
    flat.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw ShapeError("Matrix::from_rows: ragged row of length " +
                             std::to_string(row.size()) + ", expected " + std::to_string(c));
        }
        flat.insert(flat.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(flat));
}

std::string Matrix::shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw_shape("matmul", a, b);
    const std::size_t m = a.rows(), kk = a.cols(), n = b.cols();
    Matrix out(m, n);
    // i,k,j order: each out(i,j) accumulates over k left to right, and the
    // inner loop streams contiguous rows of b.
    for (std::size_t i = 0; i < m; ++i) {
        double* out_row = out.row_ptr(i);
        const double* a_row = a.row_ptr(i);
        for (std::size_t k = 0; k < kk; ++k) {
            const double aik = a_row[k];
            const double* b_row = b.row_ptr(k);
            for (std::size_t j = 0; j < n; ++j) {
                out_row[j] += aik * b_row[j];
            }
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(j, i) = m(i, j);
        }
    }
    return out;
}

AxisStats axis_stats(const Matrix& m, Axis axis) {
    if (m.empty()) throw DomainError("axis_stats: empty matrix");
    const bool per_col = (axis == Axis::Rows);
    const std::size_t groups = per_col ? m.cols() : m.rows();
    const std::size_t n = per_col ? m.rows() : m.cols();
    AxisStats st;
    st.mean.assign(groups, 0.0);
    st.std_dev.assign(groups, 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            st.mean[per_col ? j : i] += m(i, j);
        }
    }
    for (double& v : st.mean) v /= static_cast<double>(n);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            const std::size_t g = per_col ? j : i;
            const double d = m(i, j) - st.mean[g];
            st.std_dev[g] += d * d;
        }
    }
    for (double& v : st.std_dev) v = std::sqrt(v / static_cast<double>(n));
    return st;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw_shape("add", a, b);
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.flat()[i] += b.flat()[i];
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw_shape("sub", a, b);
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.flat()[i] -= b.flat()[i];
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw_shape("hadamard", a, b);
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.flat()[i] *= b.flat()[i];
    return out;
}

Matrix scale(const Matrix& a, double s) {
    Matrix out = a;
    for (double& v : out.flat()) v *= s;
    return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw_shape("max_abs_diff", a, b);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a.flat()[i] - b.flat()[i]));
    }
    return worst;
}

}  // namespace smim
