#pragma once

#include <cmath>

#include "mapnet/matrix.hpp"
#include "mapnet/rng.hpp"
#include "mapnet/tape.hpp"

namespace mapnet {

// Single-hidden-layer perceptron: affine -> softplus -> affine.
// Weights are row-major (inputs x outputs); biases are 1-row vectors.
struct Mlp {
    Matrix w1, b1, w2, b2;

    int in_dim() const { return w1.rows(); }
    int hidden_dim() const { return w1.cols(); }
    int out_dim() const { return w2.cols(); }
};

inline Mlp make_mlp(int in, int hidden, int out, Rng& rng) {
    if (in < 1 || hidden < 1 || out < 1)
        throw InvalidInputError("make_mlp: dimensions must be positive");
    Mlp m;
    auto init = [&rng](int r, int c) {
        Matrix w(r, c);
        const double a = std::sqrt(6.0 / (r + c));
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) w(i, j) = rng.uniform(-a, a);
        return w;
    };
    m.w1 = init(in, hidden);
    m.b1 = Matrix(1, hidden);
    m.w2 = init(hidden, out);
    m.b2 = Matrix(1, out);
    return m;
}

// Tape-side handle to one Mlp's parameters.
struct MlpVars {
    Var w1, b1, w2, b2;
};

inline MlpVars mlp_on_tape(Tape& t, const Mlp& m, bool as_params) {
    MlpVars v;
    if (as_params) {
        v.w1 = t.param(m.w1);
        v.b1 = t.param(m.b1);
        v.w2 = t.param(m.w2);
        v.b2 = t.param(m.b2);
    } else {
        v.w1 = t.constant(m.w1);
        v.b1 = t.constant(m.b1);
        v.w2 = t.constant(m.w2);
        v.b2 = t.constant(m.b2);
    }
    return v;
}

// Rows of x are samples; bias rows broadcast.
inline Var apply_mlp(const MlpVars& m, Var x) {
    Var h = softplus(matmul(x, m.w1) + m.b1);
    return matmul(h, m.w2) + m.b2;
}

} // namespace mapnet
