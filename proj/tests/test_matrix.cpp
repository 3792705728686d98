#include <cmath>

#include "doctest.h"
#include "smim/matrix.hpp"
#include "smim/rng.hpp"

using namespace smim;

TEST_CASE("matmul identity") {
    const Matrix id = Matrix::from_rows({{1, 0}, {0, 1}});
    const Matrix m = Matrix::from_rows({{1, 2}, {3, 4}});
    const Matrix out = matmul(id, m);
    CHECK(out(0, 0) == 1.0);
    CHECK(out(0, 1) == 2.0);
    CHECK(out(1, 0) == 3.0);
    CHECK(out(1, 1) == 4.0);
}

TEST_CASE("matmul hand example") {
    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    const Matrix b = Matrix::from_rows({{5}, {6}});
    const Matrix out = matmul(a, b);
    CHECK(out.rows() == 2);
    CHECK(out.cols() == 1);
    CHECK(out(0, 0) == 17.0);
    CHECK(out(1, 0) == 39.0);
}

TEST_CASE("matmul dimension mismatch names both shapes") {
    const Matrix a(2, 3);
    const Matrix b(2, 3);
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("2x3"), ShapeError);
}

TEST_CASE("matmul associativity on random 3-chains") {
    RngStream rng(99);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix a = sample_gaussian(rng, 4, 6, 0.0, 1.0);
        const Matrix b = sample_gaussian(rng, 6, 5, 0.0, 1.0);
        const Matrix c = sample_gaussian(rng, 5, 3, 0.0, 1.0);
        const Matrix left = matmul(matmul(a, b), c);
        const Matrix right = matmul(a, matmul(b, c));
        for (std::size_t n = 0; n < left.size(); ++n) {
            const double denom = std::max({std::abs(left.flat()[n]), std::abs(right.flat()[n]), 1.0});
            CHECK(std::abs(left.flat()[n] - right.flat()[n]) / denom < 1e-9);
        }
    }
}

TEST_CASE("transpose of product equals product of transposes") {
    RngStream rng(7);
    const Matrix a = sample_gaussian(rng, 5, 4, 0.0, 2.0);
    const Matrix b = sample_gaussian(rng, 4, 6, 0.0, 2.0);
    const Matrix lhs = transpose(matmul(a, b));
    const Matrix rhs = matmul(transpose(b), transpose(a));
    CHECK(max_abs_diff(lhs, rhs) < 1e-12);
}

TEST_CASE("axis_stats over rows gives per-column stats") {
    const Matrix m = Matrix::from_rows({{1, 3}, {3, 5}});
    const auto st = axis_stats(m, Axis::Rows);
    CHECK(st.mean[0] == doctest::Approx(2.0));
    CHECK(st.mean[1] == doctest::Approx(4.0));
    CHECK(st.std_dev[0] == doctest::Approx(1.0));
    CHECK(st.std_dev[1] == doctest::Approx(1.0));
}

TEST_CASE("axis_stats zero-variance column") {
    const Matrix m = Matrix::from_rows({{5}, {5}});
    const auto st = axis_stats(m, Axis::Rows);
    CHECK(st.mean[0] == 5.0);
    CHECK(st.std_dev[0] == 0.0);
}

TEST_CASE("axis_stats single row has zero std") {
    const Matrix m = Matrix::from_rows({{2, 7}});
    const auto st = axis_stats(m, Axis::Rows);
    CHECK(st.mean[0] == 2.0);
    CHECK(st.mean[1] == 7.0);
    CHECK(st.std_dev[0] == 0.0);
    CHECK(st.std_dev[1] == 0.0);
}

TEST_CASE("axis_stats rejects empty input") {
    CHECK_THROWS_AS(axis_stats(Matrix(), Axis::Rows), DomainError);
}

TEST_CASE("re-standardized matrix has mean 0 and std 1") {
    RngStream rng(3);
    const Matrix m = sample_gaussian(rng, 50, 4, 3.0, 2.5);
    const auto st = axis_stats(m, Axis::Rows);
    Matrix z = m;
    for (std::size_t i = 0; i < z.rows(); ++i) {
        for (std::size_t j = 0; j < z.cols(); ++j) {
            z(i, j) = (z(i, j) - st.mean[j]) / st.std_dev[j];
        }
    }
    const auto st2 = axis_stats(z, Axis::Rows);
    for (std::size_t j = 0; j < z.cols(); ++j) {
        CHECK(std::abs(st2.mean[j]) < 1e-12);
        CHECK(std::abs(st2.std_dev[j] - 1.0) < 1e-12);
    }
}

TEST_CASE("construction rejects non-finite entries") {
    CHECK_THROWS_AS(Matrix(1, 2, {1.0, std::nan("")}), DomainError);
    CHECK_THROWS_AS(Matrix(1, 1, {INFINITY}), DomainError);
    CHECK_THROWS_AS(Matrix(2, 2, {1.0, 2.0, 3.0}), ShapeError);
}
