#pragma once

#include <cmath>
#include <vector>

#include "mapnet/matrix.hpp"

namespace mapnet {

namespace detail {

// LU factorization with partial pivoting, kept for repeated right-hand sides.
struct LuFactors {
    Matrix lu;             // combined L (unit diagonal) and U
    std::vector<int> perm; // row permutation
    double min_pivot = 0.0;
    double max_pivot = 0.0;
};

inline LuFactors lu_factor(const Matrix& m) {
    if (m.rows() != m.cols())
        throw InvalidInputError("linear_solve: matrix must be square");
    if (m.rows() == 0)
        throw InvalidInputError("linear_solve: empty matrix");
    const int n = m.rows();
    LuFactors f;
    f.lu = m;
    f.perm.resize(n);
    for (int i = 0; i < n; ++i) f.perm[i] = i;

    for (int col = 0; col < n; ++col) {
        int pivot_row = col;
        double best = std::abs(f.lu(col, col));
        for (int r = col + 1; r < n; ++r) {
            double v = std::abs(f.lu(r, col));
            if (v > best) {
                best = v;
                pivot_row = r;
            }
        }
        if (best == 0.0)
            throw SingularMatrixError("linear_solve: singular matrix", 0.0);
        if (pivot_row != col) {
            for (int j = 0; j < n; ++j) std::swap(f.lu(col, j), f.lu(pivot_row, j));
            std::swap(f.perm[col], f.perm[pivot_row]);
        }
        const double pivot = f.lu(col, col);
        const double apivot = std::abs(pivot);
        f.min_pivot = (col == 0) ? apivot : std::min(f.min_pivot, apivot);
        f.max_pivot = std::max(f.max_pivot, apivot);
        for (int r = col + 1; r < n; ++r) {
            const double factor = f.lu(r, col) / pivot;
            f.lu(r, col) = factor;
            if (factor == 0.0) continue;
            for (int j = col + 1; j < n; ++j) f.lu(r, j) -= factor * f.lu(col, j);
        }
    }
    // Pivot-ratio condition guard; cheap and adequate at this scale.
    if (f.min_pivot <= 0.0 || f.max_pivot / f.min_pivot >= 1e12)
        throw SingularMatrixError("linear_solve: ill-conditioned matrix", f.min_pivot);
    return f;
}

inline Matrix lu_solve(const LuFactors& f, const Matrix& b) {
    const int n = f.lu.rows();
    if (b.rows() != n)
        throw InvalidInputError("linear_solve: right-hand side rows mismatch");
    Matrix x(n, b.cols());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < b.cols(); ++j) x(i, j) = b(f.perm[i], j);
    // forward substitution (L has unit diagonal)
    for (int i = 1; i < n; ++i)
        for (int k = 0; k < i; ++k) {
            const double l = f.lu(i, k);
            if (l == 0.0) continue;
            for (int j = 0; j < b.cols(); ++j) x(i, j) -= l * x(k, j);
        }
    // back substitution
    for (int i = n - 1; i >= 0; --i) {
        for (int k = i + 1; k < n; ++k) {
            const double u = f.lu(i, k);
            if (u == 0.0) continue;
            for (int j = 0; j < b.cols(); ++j) x(i, j) -= u * x(k, j);
        }
        const double d = f.lu(i, i);
        for (int j = 0; j < b.cols(); ++j) x(i, j) /= d;
    }
    return x;
}

} // namespace detail

// Solve M X = B by LU with partial pivoting. Throws SingularMatrixError when
// the pivot ratio suggests the system is not trustworthy.
inline Matrix linear_solve(const Matrix& m, const Matrix& b) {
    auto f = detail::lu_factor(m);
    Matrix x = detail::lu_solve(f, b);
    ensure_finite(x, "linear_solve");
    return x;
}

} // namespace mapnet
