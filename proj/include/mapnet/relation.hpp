#pragma once

#include <utility>
#include <vector>

#include "mapnet/matrix.hpp"
#include "mapnet/mlp.hpp"
#include "mapnet/tape.hpp"

namespace mapnet {

// Grid of elementwise squared-difference relation vectors r_ij over the nodes
// of one graph. Stored flat: row i*n + j of `vectors` is r_ij. The first
// `support_count` nodes are support samples; the rest are queries, which
// partitions the grid into the ss/sq/qs/qq blocks.
struct RelationMap {
    int node_count = 0;
    int support_count = 0;
    int dim = 0;
    // True when only the support-support block is materialized (semantic maps:
    // query-touching relation vectors are identically zero and never stored).
    bool support_block_only = false;
    Matrix vectors;

    bool complete() const { return !support_block_only; }
    int stored_nodes() const { return support_block_only ? support_count : node_count; }

    const double* vec(int i, int j) const { return vectors.row(i * stored_nodes() + j); }
};

// Relation transfer module h: affine(c->c) -> softplus -> affine(c->c).
// The exact-identity hook bypasses the network entirely; it exists so tests
// can reduce the rectified adjacency to the Gaussian one algebraically.
struct TransferModule {
    Mlp net;
    bool identity_hook = false;

    static TransferModule exact_identity(int dim) {
        TransferModule h;
        h.identity_hook = true;
        h.net.w1 = Matrix(dim, dim);
        h.net.b1 = Matrix(1, dim);
        h.net.w2 = Matrix(dim, dim);
        h.net.b2 = Matrix(1, dim);
        return h;
    }

    static TransferModule make(int dim, Rng& rng) {
        TransferModule h;
        h.net = make_mlp(dim, dim, dim, rng);
        return h;
    }
};

namespace detail {
// (n*n) x c matrix of elementwise squared row differences of z.
inline Var pairwise_relation_vectors(Tape& t, Var z) {
    const int n = t.value(z).rows();
    std::vector<int> left(static_cast<size_t>(n) * n), right(left.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            left[static_cast<size_t>(i) * n + j] = i;
            right[static_cast<size_t>(i) * n + j] = j;
        }
    Var a = gather_rows(z, std::move(left));
    Var b = gather_rows(z, std::move(right));
    return square(a - b);
}

// (n*n) x 1 column that is 0 on diagonal pairs and 1 elsewhere.
inline Matrix offdiag_row_mask(int n) {
    Matrix m(n * n, 1, 1.0);
    for (int i = 0; i < n; ++i) m(i * n + i, 0) = 0.0;
    return m;
}
} // namespace detail

// ---- relation_map ------------------------------------------------------

inline RelationMap relation_map(const Matrix& z, int support_count) {
    if (z.rows() < 1 || z.cols() < 1)
        throw InvalidInputError("relation_map: empty embedding matrix");
    if (support_count < 1 || support_count > z.rows())
        throw InvalidInputError("relation_map: support_count out of range");
    const int n = z.rows();
    const int c = z.cols();
    RelationMap r;
    r.node_count = n;
    r.support_count = support_count;
    r.dim = c;
    r.vectors = Matrix(n * n, c);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double* out = r.vectors.row(i * n + j);
            const double* zi = z.row(i);
            const double* zj = z.row(j);
            for (int k = 0; k < c; ++k) {
                const double d = zi[k] - zj[k];
                out[k] = d * d;
            }
        }
    return r;
}

// Semantic relations exist only between support samples (query semantics are
// zero-initialized); the returned map materializes just that block.
inline RelationMap semantic_support_relations(const Matrix& za_support) {
    if (za_support.rows() < 1 || za_support.cols() < 1)
        throw InvalidEpisodeError("semantic_support_relations: missing support semantics");
    RelationMap r = relation_map(za_support, za_support.rows());
    r.support_block_only = true;
    return r;
}

// ---- transfer_relations --------------------------------------------------

// Differentiable transfer over a flat (n*n) x c relation matrix; diagonal
// pairs are forced back to zero afterwards.
inline Var transfer_relations(Tape& t, const MlpVars& h, Var relations, int n) {
    Var out = apply_mlp(h, relations);
    return out * t.constant(detail::offdiag_row_mask(n));
}

inline RelationMap transfer_relations(const TransferModule& h, const RelationMap& r) {
    if (!r.complete())
        throw IncompleteRelationMapError("transfer_relations: relation map is missing blocks");
    if (r.dim < 1) throw InvalidInputError("transfer_relations: empty relation map");
    if (h.identity_hook) return r;
    if (h.net.in_dim() != r.dim)
        throw InvalidInputError("transfer_relations: dimension mismatch between h and map");
    Tape t;
    MlpVars hv = mlp_on_tape(t, h.net, false);
    Var out = transfer_relations(t, hv, t.constant(r.vectors), r.node_count);
    RelationMap res = r;
    res.vectors = t.value(out);
    return res;
}

// ---- rg_loss ---------------------------------------------------------------

// Mean over off-diagonal support-support pairs of the per-pair mean squared
// difference. Both inputs are flat (s*s) x c blocks.
inline Var rg_loss(Tape& t, Var transferred_ss, Var semantic_ss, int support_count) {
    const int s = support_count;
    if (s < 2) throw InsufficientPairsError("rg_loss: need at least two support samples");
    const int c = t.value(transferred_ss).cols();
    Var per_pair = scale(row_sum(square(transferred_ss - semantic_ss)), 1.0 / c);
    Var masked = per_pair * t.constant(detail::offdiag_row_mask(s));
    return scale(sum_all(masked), 1.0 / (static_cast<double>(s) * s - s));
}

inline double rg_loss(const RelationMap& transferred, const RelationMap& semantic) {
    const int s = semantic.support_count;
    if (transferred.support_count != s)
        throw InvalidInputError("rg_loss: blocks cover different support sets");
    if (transferred.dim != semantic.dim)
        throw InvalidInputError("rg_loss: relation dimension mismatch");
    if (s < 2) throw InsufficientPairsError("rg_loss: need at least two support samples");
    const int c = semantic.dim;
    const int nt = transferred.stored_nodes();
    const int ns = semantic.stored_nodes();
    double total = 0.0;
    for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j) {
            if (i == j) continue;
            const double* a = transferred.vectors.row(i * nt + j);
            const double* b = semantic.vectors.row(i * ns + j);
            double acc = 0.0;
            for (int k = 0; k < c; ++k) {
                const double d = a[k] - b[k];
                acc += d * d;
            }
            total += acc / c;
        }
    return total / (static_cast<double>(s) * s - s);
}

} // namespace mapnet
