#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mapnet/linalg.hpp"
#include "mapnet/rng.hpp"

using namespace mapnet;

namespace {

Matrix random_dd_system(int n, Rng& rng) {
    // diagonally dominant, comfortably nonsingular
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) {
        double off = 0.0;
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            m(i, j) = rng.normal();
            off += std::abs(m(i, j));
        }
        m(i, i) = off + 1.0 + rng.uniform();
    }
    return m;
}

} // namespace

TEST_CASE("identity system returns rhs") {
    Rng rng(1);
    Matrix b(4, 3);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j) b(i, j) = rng.normal();
    Matrix x = linear_solve(Matrix::identity(4), b);
    CHECK(max_abs_diff(x, b) == 0.0);
}

TEST_CASE("diagonal system") {
    Matrix m{{2, 0}, {0, 4}};
    Matrix b{{2}, {8}};
    Matrix x = linear_solve(m, b);
    CHECK(x(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(x(1, 0) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("residual oracle on a random 8x8") {
    Rng rng(2);
    Matrix m = random_dd_system(8, rng);
    Matrix b(8, 2);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 2; ++j) b(i, j) = rng.normal();
    Matrix x = linear_solve(m, b);
    const double resid = max_abs_diff(matmul(m, x), b);
    CHECK(resid <= 1e-9 * std::max(1.0, max_abs(b)));
}

TEST_CASE("residual property over 100 random systems up to 25x25") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_int(25));
        Matrix m = random_dd_system(n, rng);
        Matrix b(n, 1 + static_cast<int>(rng.uniform_int(4)));
        for (int i = 0; i < b.rows(); ++i)
            for (int j = 0; j < b.cols(); ++j) b(i, j) = 3.0 * rng.normal();
        Matrix x = linear_solve(m, b);
        CHECK(max_abs_diff(matmul(m, x), b) <= 1e-9 * std::max(1.0, max_abs(b)));
    }
}

TEST_CASE("singular matrix raises with pivot magnitude") {
    Matrix m{{1, 2}, {2, 4}};
    Matrix b{{1}, {1}};
    try {
        linear_solve(m, b);
        FAIL("expected SingularMatrixError");
    } catch (const SingularMatrixError& e) {
        CHECK(e.pivot_magnitude <= 1e-12);
    }
}

TEST_CASE("ill-conditioned matrix rejected by pivot-ratio guard") {
    Matrix m{{1.0, 0.0}, {0.0, 1e-13}};
    CHECK_THROWS_AS(linear_solve(m, Matrix::identity(2)), SingularMatrixError);
}

TEST_CASE("non-square input rejected") {
    CHECK_THROWS_AS(linear_solve(Matrix(2, 3), Matrix(2, 1)), InvalidInputError);
    CHECK_THROWS_AS(linear_solve(Matrix::identity(2), Matrix(3, 1)), InvalidInputError);
}
