#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mapnet/matrix.hpp"
#include "mapnet/rng.hpp"

using namespace mapnet;

namespace {

Matrix random_matrix(int r, int c, Rng& rng, double scale = 1.0) {
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
    return m;
}

// scalar-loop oracle for squared distances
double sq_dist_oracle(const Matrix& z, int i, int j) {
    double acc = 0.0;
    for (int k = 0; k < z.cols(); ++k) {
        const double d = z(i, k) - z(j, k);
        acc += d * d;
    }
    return acc;
}

} // namespace

TEST_CASE("matrix basics") {
    Matrix m{{1, 2}, {3, 4}};
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 2);
    CHECK(m(1, 0) == 3.0);

    Matrix i2 = Matrix::identity(2);
    Matrix p = matmul(m, i2);
    CHECK(p.bitwise_equal(m));

    Matrix t = transpose(m);
    CHECK(t(0, 1) == 3.0);

    CHECK_THROWS_AS(matmul(m, Matrix(3, 2)), InvalidInputError);
    CHECK_THROWS_AS(add(m, Matrix(3, 2)), InvalidInputError);
}

TEST_CASE("finiteness guard") {
    Matrix m(2, 2, 1.0);
    CHECK(m.is_finite());
    m(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK(!m.is_finite());
    CHECK_THROWS_AS(ensure_finite(m, "test"), NumericInstabilityError);
}

TEST_CASE("pairwise_sq_distances identical points") {
    Matrix z{{0}, {0}};
    Matrix d2 = pairwise_sq_distances(z);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(d2(i, j) == 0.0);
}

TEST_CASE("pairwise_sq_distances 1-D gaps") {
    Matrix z{{0}, {3}, {4}};
    Matrix d2 = pairwise_sq_distances(z);
    Matrix want{{0, 9, 16}, {9, 0, 1}, {16, 1, 0}};
    CHECK(max_abs_diff(d2, want) == 0.0);
}

TEST_CASE("pairwise_sq_distances matches scalar oracle") {
    Rng rng(42);
    Matrix z = random_matrix(5, 3, rng);
    Matrix d2 = pairwise_sq_distances(z);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            CHECK(std::abs(d2(i, j) - sq_dist_oracle(z, i, j)) <= 1e-12);
}

TEST_CASE("pairwise_sq_distances empty input") {
    CHECK_THROWS_AS(pairwise_sq_distances(Matrix()), InvalidInputError);
}

TEST_CASE("pairwise_sq_distances property: symmetric nonnegative, oracle to 1e-12") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_int(32));
        const int c = 1 + static_cast<int>(rng.uniform_int(16));
        Matrix z = random_matrix(n, c, rng, 2.0);
        Matrix d2 = pairwise_sq_distances(z);
        for (int i = 0; i < n; ++i) {
            CHECK(d2(i, i) == 0.0);
            for (int j = 0; j < n; ++j) {
                CHECK(d2(i, j) >= 0.0);
                CHECK(d2(i, j) == d2(j, i));
                CHECK(std::abs(d2(i, j) - sq_dist_oracle(z, i, j)) <= 1e-12);
            }
        }
    }
}

TEST_CASE("rng determinism and uniformity basics") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng c(5);
    for (int i = 0; i < 1000; ++i) {
        const double u = c.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(c.uniform_int(7) < 7);
    }

    // same seed and fork path give the same stream; salts separate streams
    Rng p1(9), p2(9);
    CHECK(p1.fork(3).next_u64() == p2.fork(3).next_u64());
    CHECK(p1.fork(3).next_u64() != p1.fork(4).next_u64());
}
