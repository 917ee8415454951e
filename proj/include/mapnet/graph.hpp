#pragma once

#include <cmath>
#include <utility>

#include "mapnet/matrix.hpp"
#include "mapnet/relation.hpp"
#include "mapnet/tape.hpp"

namespace mapnet {

// Adjacency together with the scaling factor that produced it. Following the
// embedding-propagation convention the divisor sigma_sq is the population
// standard deviation of the off-diagonal squared-distance entries.
struct AdjacencyVars {
    Var adjacency;
    Var sigma_sq;
    bool degenerate_sigma = false; // all nodes coincide; fallback sigma_sq = 1
};

namespace detail {

inline Matrix offdiag_mask(int n) {
    Matrix m(n, n, 1.0);
    for (int i = 0; i < n; ++i) m(i, i) = 0.0;
    return m;
}

// Population std of the off-diagonal entries of a square matrix node, with
// the degenerate fallback to a constant 1. Differentiable in the regular
// branch; the fallback is a recorded constant.
inline std::pair<Var, bool> offdiag_std(Tape& t, Var square_mat, int n) {
    const double cnt = static_cast<double>(n) * n - n;
    Var mask = t.constant(offdiag_mask(n));
    Var masked = square_mat * mask;
    Var mean = scale(sum_all(masked), 1.0 / cnt);
    Var dev = (square_mat - mean) * mask;
    Var variance = scale(sum_all(square(dev)), 1.0 / cnt);
    Var sd = sqrt(variance);
    if (t.scalar_value(sd) < 1e-12) return {t.constant(Matrix(1, 1, 1.0)), true};
    return {sd, false};
}

// A = exp(-norms / sigma_sq) with a zeroed diagonal.
inline AdjacencyVars adjacency_from_norms(Tape& t, Var norms, int n) {
    if (n < 2) throw InvalidInputError("adjacency: need at least two nodes");
    AdjacencyVars out;
    auto [sd, degenerate] = offdiag_std(t, norms, n);
    out.sigma_sq = sd;
    out.degenerate_sigma = degenerate;
    out.adjacency = exp(-(norms / sd)) * t.constant(offdiag_mask(n));
    return out;
}

} // namespace detail

// ---- differentiable graph ops -------------------------------------------

// Squared Euclidean distances between all rows of z, as an n x n tape node.
inline Var pairwise_sq_distances(Tape& t, Var z) {
    const Matrix& zm = t.value(z);
    if (zm.rows() < 1 || zm.cols() < 1)
        throw InvalidInputError("pairwise_sq_distances: empty matrix");
    const int n = zm.rows();
    return reshape(row_sum(detail::pairwise_relation_vectors(t, z)), n, n);
}

inline AdjacencyVars gaussian_adjacency(Tape& t, Var d2) {
    const Matrix& m = t.value(d2);
    if (m.rows() != m.cols()) throw InvalidInputError("gaussian_adjacency: matrix not square");
    return detail::adjacency_from_norms(t, d2, m.rows());
}

// Rectified adjacency from a flat (n*n) x c relation matrix whose diagonal
// rows are zero: distances are the l1 norms of the relation vectors.
inline AdjacencyVars adjacency_from_relations(Tape& t, Var relations, int n) {
    Var norms = reshape(row_sum(t.abs(relations)), n, n);
    return detail::adjacency_from_norms(t, norms, n);
}

inline Var symmetric_normalize(Tape& t, Var a) {
    const Matrix& av = t.value(a);
    if (av.rows() != av.cols()) throw InvalidInputError("symmetric_normalize: matrix not square");
    Var deg = row_sum(a);
    const Matrix& degv = t.value(deg);
    for (int i = 0; i < degv.rows(); ++i)
        if (degv(i, 0) <= 0.0)
            throw IsolatedNodeError("symmetric_normalize: zero-degree node", i);
    Var dinv = t.constant(Matrix(1, 1, 1.0)) / sqrt(deg); // n x 1
    return a * matmul(dinv, transpose(dinv));
}

inline Var propagation_matrix(Tape& t, Var s, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw InvalidInputError("propagation_matrix: alpha must be in (0,1)");
    const int n = t.value(s).rows();
    Var ident = t.constant(Matrix::identity(n));
    return scale(solve(ident - scale(s, alpha), ident), 1.0 - alpha);
}

inline Var propagate(Tape& t, Var p, Var z) {
    (void)t;
    return matmul(p, z);
}

// ---- plain-matrix surface --------------------------------------------------

struct GaussianAdjacency {
    Matrix adjacency;
    double sigma_sq = 0.0;
};

inline GaussianAdjacency gaussian_adjacency(const Matrix& d2) {
    if (d2.rows() != d2.cols() || d2.rows() < 2)
        throw InvalidInputError("gaussian_adjacency: need a square matrix with n >= 2");
    for (int i = 0; i < d2.rows(); ++i) {
        if (d2(i, i) != 0.0)
            throw InvalidInputError("gaussian_adjacency: diagonal must be zero");
        for (int j = 0; j < d2.cols(); ++j) {
            if (d2(i, j) < 0.0) throw InvalidInputError("gaussian_adjacency: negative distance");
            if (d2(i, j) != d2(j, i))
                throw InvalidInputError("gaussian_adjacency: matrix not symmetric");
        }
    }
    Tape t;
    auto r = gaussian_adjacency(t, t.constant(d2));
    return {t.value(r.adjacency), t.scalar_value(r.sigma_sq)};
}

inline GaussianAdjacency adjacency_from_relations(const RelationMap& rm) {
    if (!rm.complete())
        throw IncompleteRelationMapError("adjacency_from_relations: relation map is missing blocks");
    if (rm.node_count < 2)
        throw InvalidInputError("adjacency_from_relations: need at least two nodes");
    Tape t;
    auto r = adjacency_from_relations(t, t.constant(rm.vectors), rm.node_count);
    return {t.value(r.adjacency), t.scalar_value(r.sigma_sq)};
}

inline Matrix symmetric_normalize(const Matrix& a) {
    Tape t;
    return t.value(symmetric_normalize(t, t.constant(a)));
}

inline Matrix propagation_matrix(const Matrix& s, double alpha) {
    Tape t;
    return t.value(propagation_matrix(t, t.constant(s), alpha));
}

inline Matrix propagate(const Matrix& p, const Matrix& z) { return matmul(p, z); }

// Truncated-series verification oracle for the closed-form propagation:
// (1 - alpha) * sum_{t=0..k} alpha^t S^t Z, computed iteratively.
inline Matrix neumann_propagate(const Matrix& s, double alpha, const Matrix& z, int k) {
    if (k < 1) throw InvalidInputError("neumann_propagate: k must be >= 1");
    if (s.rows() != s.cols() || s.cols() != z.rows())
        throw InvalidInputError("neumann_propagate: shape mismatch");
    Matrix term = z;
    Matrix acc = z;
    for (int t = 1; t <= k; ++t) {
        term = scale(matmul(s, term), alpha);
        acc = add(acc, term);
    }
    return scale(acc, 1.0 - alpha);
}

// One per-query graph: adjacency, its normalization, and the closed-form
// propagation matrix. Near-zero negative propagation entries (roundoff) are
// clamped here, in the reporting copy only.
struct PropagationGraph {
    int n = 0;
    Matrix adjacency;
    Matrix normalized;
    Matrix propagation;
    double alpha = 0.0;
    double sigma_sq = 0.0;
};

inline PropagationGraph build_propagation_graph(const Matrix& adjacency, double sigma_sq,
                                                double alpha) {
    PropagationGraph g;
    g.n = adjacency.rows();
    g.adjacency = adjacency;
    g.sigma_sq = sigma_sq;
    g.alpha = alpha;
    g.normalized = symmetric_normalize(adjacency);
    g.propagation = propagation_matrix(g.normalized, alpha);
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j) {
            double& v = g.propagation(i, j);
            if (v < 0.0) {
                if (v < -1e-12)
                    throw NumericInstabilityError(
                        "build_propagation_graph: propagation entry below -1e-12");
                v = 0.0;
            }
        }
    return g;
}

} // namespace mapnet
