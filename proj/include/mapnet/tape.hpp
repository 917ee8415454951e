#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mapnet/linalg.hpp"
#include "mapnet/matrix.hpp"

namespace mapnet {

class Tape;

// Handle to a value recorded on a tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;
    bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode gradient tape over Matrix values. Operations evaluate eagerly
// and record enough to replay the forward pass bit-exactly and to accumulate
// adjoints in a single reverse sweep. One tape per episode; instances are not
// thread-safe, parallelism uses independent tapes.
class Tape {
public:
    enum class Op : uint8_t {
        Constant,
        Param,
        Add,
        Sub,
        Mul,
        Div,
        MatMul,
        Transpose,
        Square,
        Sqrt,
        Exp,
        LogFloored,
        Abs,
        Neg,
        Sigmoid,
        Softplus,
        Scale,
        SumAll,
        RowSum,
        ColSum,
        MeanAll,
        GatherRows,
        ConcatRows,
        ConcatCols,
        Reshape,
        Solve,
    };

    Var constant(Matrix v) { return push_leaf(Op::Constant, std::move(v)); }

    // Registered leaf: receives a gradient buffer of identical shape after
    // every backward pass, even if it does not participate in the loss.
    Var param(Matrix v) {
        Var out = push_leaf(Op::Param, std::move(v));
        params_.push_back(out.id);
        return out;
    }

    const Matrix& value(Var v) const { return nodes_[check(v)].value; }
    double scalar_value(Var v) const {
        const Matrix& m = value(v);
        if (m.rows() != 1 || m.cols() != 1)
            throw InvalidInputError("scalar_value: node is not 1x1");
        return m(0, 0);
    }

    const std::vector<int>& param_ids() const { return params_; }
    size_t size() const { return nodes_.size(); }

    const Matrix& grad(Var v) const {
        if (!has_grads_) throw InvalidInputError("grad: backward has not run");
        return grads_[check(v)];
    }

    // Reverse sweep from a scalar loss node. Gradients for every node are
    // zero-initialized, so parameters off the loss path end up with zeros.
    void backward(Var loss) {
        int root = check(loss);
        const Matrix& lv = nodes_[root].value;
        if (lv.rows() != 1 || lv.cols() != 1)
            throw InvalidInputError("backward: loss must be a 1x1 scalar node");
        grads_.assign(nodes_.size(), Matrix());
        for (size_t i = 0; i < nodes_.size(); ++i)
            grads_[i] = Matrix(nodes_[i].value.rows(), nodes_[i].value.cols());
        grads_[root](0, 0) = 1.0;
        for (int i = root; i >= 0; --i) backprop_node(i);
        has_grads_ = true;
    }

    // Recompute every non-leaf value in recording order. With unchanged leaf
    // values the arithmetic is identical, so results are bitwise equal.
    void replay() {
        for (auto& n : nodes_)
            if (n.op != Op::Constant && n.op != Op::Param) n.value = compute(n);
    }

    // ---- op builders -------------------------------------------------

    Var add(Var a, Var b) { return push_binary(Op::Add, a, b); }
    Var sub(Var a, Var b) { return push_binary(Op::Sub, a, b); }
    Var mul(Var a, Var b) { return push_binary(Op::Mul, a, b); }
    Var div(Var a, Var b) { return push_binary(Op::Div, a, b); }

    Var matmul(Var a, Var b) {
        Node n = make(Op::MatMul, check(a), check(b));
        return push(std::move(n));
    }

    Var transpose(Var a) { return push_unary(Op::Transpose, a); }
    Var square(Var a) { return push_unary(Op::Square, a); }
    Var sqrt(Var a) { return push_unary(Op::Sqrt, a); }
    Var exp(Var a) { return push_unary(Op::Exp, a); }
    Var abs(Var a) { return push_unary(Op::Abs, a); }
    Var neg(Var a) { return push_unary(Op::Neg, a); }
    Var sigmoid(Var a) { return push_unary(Op::Sigmoid, a); }
    Var softplus(Var a) { return push_unary(Op::Softplus, a); }
    Var sum_all(Var a) { return push_unary(Op::SumAll, a); }
    Var row_sum(Var a) { return push_unary(Op::RowSum, a); }
    Var col_sum(Var a) { return push_unary(Op::ColSum, a); }
    Var mean_all(Var a) { return push_unary(Op::MeanAll, a); }

    Var log_floored(Var a, double floor) {
        Node n = make(Op::LogFloored, check(a), -1);
        n.scalar = floor;
        return push(std::move(n));
    }

    Var scale(Var a, double k) {
        Node n = make(Op::Scale, check(a), -1);
        n.scalar = k;
        return push(std::move(n));
    }

    Var gather_rows(Var a, std::vector<int> indices) {
        Node n = make(Op::GatherRows, check(a), -1);
        const int rows = nodes_[n.a].value.rows();
        for (int idx : indices)
            if (idx < 0 || idx >= rows)
                throw InvalidInputError("gather_rows: index out of range");
        n.indices = std::move(indices);
        return push(std::move(n));
    }

    Var concat_rows(Var a, Var b) { return push_binary(Op::ConcatRows, a, b); }
    Var concat_cols(Var a, Var b) { return push_binary(Op::ConcatCols, a, b); }

    Var reshape(Var a, int rows, int cols) {
        Node n = make(Op::Reshape, check(a), -1);
        if (static_cast<size_t>(rows) * cols != nodes_[n.a].value.size())
            throw InvalidInputError("reshape: element count mismatch");
        n.indices = {rows, cols};
        return push(std::move(n));
    }

    // X = M^{-1} B; adjoints use the implicit-function rule
    //   grad_B = M^{-T} grad_X,  grad_M = -grad_B X^T.
    Var solve(Var m, Var b) { return push_binary(Op::Solve, m, b); }

private:
    struct Node {
        Op op;
        int a = -1, b = -1;
        double scalar = 0.0;
        std::vector<int> indices; // GatherRows targets / Reshape dims
        Matrix value;
    };

    std::vector<Node> nodes_;
    std::vector<int> params_;
    std::vector<Matrix> grads_;
    bool has_grads_ = false;

    int check(Var v) const {
        if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
            throw InvalidInputError("variable does not belong to this tape");
        return v.id;
    }

    Node make(Op op, int a, int b) {
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        return n;
    }

    Var push(Node n) {
        n.value = compute(n);
        nodes_.push_back(std::move(n));
        has_grads_ = false;
        return Var{this, static_cast<int>(nodes_.size() - 1)};
    }

    Var push_leaf(Op op, Matrix v) {
        Node n = make(op, -1, -1);
        n.value = std::move(v);
        nodes_.push_back(std::move(n));
        has_grads_ = false;
        return Var{this, static_cast<int>(nodes_.size() - 1)};
    }

    Var push_unary(Op op, Var a) { return push(make(op, check(a), -1)); }
    Var push_binary(Op op, Var a, Var b) { return push(make(op, check(a), check(b))); }

    // ---- broadcasting ------------------------------------------------

    static bool broadcast_ok(int ra, int ca, int rb, int cb) {
        return (ra == rb || ra == 1 || rb == 1) && (ca == cb || ca == 1 || cb == 1);
    }

    template <typename F>
    static Matrix broadcast_apply(const Matrix& a, const Matrix& b, F f, const char* what) {
        if (!broadcast_ok(a.rows(), a.cols(), b.rows(), b.cols()))
            throw InvalidInputError(std::string(what) + ": incompatible shapes");
        const int r = std::max(a.rows(), b.rows());
        const int c = std::max(a.cols(), b.cols());
        Matrix out(r, c);
        for (int i = 0; i < r; ++i) {
            const int ia = a.rows() == 1 ? 0 : i;
            const int ib = b.rows() == 1 ? 0 : i;
            for (int j = 0; j < c; ++j) {
                const int ja = a.cols() == 1 ? 0 : j;
                const int jb = b.cols() == 1 ? 0 : j;
                out(i, j) = f(a(ia, ja), b(ib, jb));
            }
        }
        return out;
    }

    // Sum g down to (rows, cols); inverse of broadcasting for adjoints.
    static Matrix reduce_to(const Matrix& g, int rows, int cols) {
        if (g.rows() == rows && g.cols() == cols) return g;
        Matrix out(rows, cols);
        for (int i = 0; i < g.rows(); ++i) {
            const int oi = rows == 1 ? 0 : i;
            for (int j = 0; j < g.cols(); ++j) out(oi, cols == 1 ? 0 : j) += g(i, j);
        }
        return out;
    }

    static double stable_sigmoid(double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
    }

    static double stable_softplus(double x) {
        return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    }

    // ---- forward -----------------------------------------------------

    Matrix compute(const Node& n) const {
        const Matrix* A = n.a >= 0 ? &nodes_[n.a].value : nullptr;
        const Matrix* B = n.b >= 0 ? &nodes_[n.b].value : nullptr;
        switch (n.op) {
        case Op::Constant:
        case Op::Param:
            return n.value;
        case Op::Add:
            return broadcast_apply(*A, *B, [](double x, double y) { return x + y; }, "add");
        case Op::Sub:
            return broadcast_apply(*A, *B, [](double x, double y) { return x - y; }, "sub");
        case Op::Mul:
            return broadcast_apply(*A, *B, [](double x, double y) { return x * y; }, "mul");
        case Op::Div:
            return broadcast_apply(*A, *B, [](double x, double y) { return x / y; }, "div");
        case Op::MatMul:
            return mapnet::matmul(*A, *B);
        case Op::Transpose:
            return mapnet::transpose(*A);
        case Op::Square:
            return map_unary(*A, [](double x) { return x * x; });
        case Op::Sqrt:
            return map_unary(*A, [](double x) { return std::sqrt(x); });
        case Op::Exp:
            return map_unary(*A, [](double x) { return std::exp(x); });
        case Op::LogFloored: {
            const double floor = n.scalar;
            return map_unary(*A, [floor](double x) { return std::log(x > floor ? x : floor); });
        }
        case Op::Abs:
            return map_unary(*A, [](double x) { return std::abs(x); });
        case Op::Neg:
            return map_unary(*A, [](double x) { return -x; });
        case Op::Sigmoid:
            return map_unary(*A, [](double x) { return stable_sigmoid(x); });
        case Op::Softplus:
            return map_unary(*A, [](double x) { return stable_softplus(x); });
        case Op::Scale: {
            const double k = n.scalar;
            return map_unary(*A, [k](double x) { return k * x; });
        }
        case Op::SumAll: {
            Matrix out(1, 1);
            for (int i = 0; i < A->rows(); ++i)
                for (int j = 0; j < A->cols(); ++j) out(0, 0) += (*A)(i, j);
            return out;
        }
        case Op::RowSum: {
            Matrix out(A->rows(), 1);
            for (int i = 0; i < A->rows(); ++i)
                for (int j = 0; j < A->cols(); ++j) out(i, 0) += (*A)(i, j);
            return out;
        }
        case Op::ColSum: {
            Matrix out(1, A->cols());
            for (int i = 0; i < A->rows(); ++i)
                for (int j = 0; j < A->cols(); ++j) out(0, j) += (*A)(i, j);
            return out;
        }
        case Op::MeanAll: {
            Matrix out(1, 1);
            for (int i = 0; i < A->rows(); ++i)
                for (int j = 0; j < A->cols(); ++j) out(0, 0) += (*A)(i, j);
            out(0, 0) /= static_cast<double>(A->size());
            return out;
        }
        case Op::GatherRows: {
            Matrix out(static_cast<int>(n.indices.size()), A->cols());
            for (size_t p = 0; p < n.indices.size(); ++p)
                for (int j = 0; j < A->cols(); ++j)
                    out(static_cast<int>(p), j) = (*A)(n.indices[p], j);
            return out;
        }
        case Op::ConcatRows: {
            if (A->cols() != B->cols())
                throw InvalidInputError("concat_rows: column mismatch");
            Matrix out(A->rows() + B->rows(), A->cols());
            for (int i = 0; i < A->rows(); ++i)
                for (int j = 0; j < A->cols(); ++j) out(i, j) = (*A)(i, j);
            for (int i = 0; i < B->rows(); ++i)
                for (int j = 0; j < B->cols(); ++j) out(A->rows() + i, j) = (*B)(i, j);
            return out;
        }
        case Op::ConcatCols: {
            if (A->rows() != B->rows())
                throw InvalidInputError("concat_cols: row mismatch");
            Matrix out(A->rows(), A->cols() + B->cols());
            for (int i = 0; i < A->rows(); ++i) {
                for (int j = 0; j < A->cols(); ++j) out(i, j) = (*A)(i, j);
                for (int j = 0; j < B->cols(); ++j) out(i, A->cols() + j) = (*B)(i, j);
            }
            return out;
        }
        case Op::Reshape: {
            Matrix out(n.indices[0], n.indices[1]);
            const double* src = A->data();
            double* dst = out.data();
            for (size_t k = 0; k < out.size(); ++k) dst[k] = src[k];
            return out;
        }
        case Op::Solve:
            return linear_solve(*A, *B);
        }
        throw InvalidInputError("unknown op");
    }

    template <typename F>
    static Matrix map_unary(const Matrix& a, F f) {
        Matrix out(a.rows(), a.cols());
        for (int i = 0; i < a.rows(); ++i)
            for (int j = 0; j < a.cols(); ++j) out(i, j) = f(a(i, j));
        return out;
    }

    // ---- reverse -----------------------------------------------------

    void accumulate(int id, const Matrix& g) {
        Matrix& dst = grads_[id];
        const Matrix reduced = reduce_to(g, dst.rows(), dst.cols());
        for (int i = 0; i < dst.rows(); ++i)
            for (int j = 0; j < dst.cols(); ++j) dst(i, j) += reduced(i, j);
    }

    void backprop_node(int id) {
        const Node& n = nodes_[id];
        const Matrix& g = grads_[id];
        if (n.op == Op::Constant || n.op == Op::Param) return;
        if (max_abs(g) == 0.0) return; // nothing to propagate

        const Matrix* A = n.a >= 0 ? &nodes_[n.a].value : nullptr;
        const Matrix* B = n.b >= 0 ? &nodes_[n.b].value : nullptr;

        switch (n.op) {
        case Op::Add:
            accumulate(n.a, g);
            accumulate(n.b, g);
            break;
        case Op::Sub:
            accumulate(n.a, g);
            accumulate(n.b, map_unary(g, [](double x) { return -x; }));
            break;
        case Op::Mul:
            accumulate(n.a, broadcast_apply(g, *B, [](double x, double y) { return x * y; }, "mul'"));
            accumulate(n.b, broadcast_apply(g, *A, [](double x, double y) { return x * y; }, "mul'"));
            break;
        case Op::Div: {
            accumulate(n.a, broadcast_apply(g, *B, [](double x, double y) { return x / y; }, "div'"));
            Matrix q = broadcast_apply(*A, *B, [](double x, double y) { return -x / (y * y); }, "div'");
            accumulate(n.b, broadcast_apply(g, q, [](double x, double y) { return x * y; }, "div'"));
            break;
        }
        case Op::MatMul:
            accumulate(n.a, mapnet::matmul(g, mapnet::transpose(*B)));
            accumulate(n.b, mapnet::matmul(mapnet::transpose(*A), g));
            break;
        case Op::Transpose:
            accumulate(n.a, mapnet::transpose(g));
            break;
        case Op::Square: {
            Matrix d = *A;
            for (int i = 0; i < d.rows(); ++i)
                for (int j = 0; j < d.cols(); ++j) d(i, j) = 2.0 * d(i, j) * g(i, j);
            accumulate(n.a, d);
            break;
        }
        case Op::Sqrt: {
            // subgradient 0 at the origin
            Matrix d(g.rows(), g.cols());
            for (int i = 0; i < d.rows(); ++i)
                for (int j = 0; j < d.cols(); ++j)
                    d(i, j) = (*A)(i, j) > 0.0 ? g(i, j) * 0.5 / n.value(i, j) : 0.0;
            accumulate(n.a, d);
            break;
        }
        case Op::Exp: {
            Matrix d(g.rows(), g.cols());
            for (int i = 0; i < d.rows(); ++i)
                for (int j = 0; j < d.cols(); ++j) d(i, j) = g(i, j) * n.value(i, j);
            accumulate(n.a, d);
            break;
        }
        case Op::LogFloored: {
            Matrix d(g.rows(), g.cols());
            for (int i = 0; i < d.rows(); ++i)
                for (int j = 0; j < d.cols(); ++j)
                    d(i, j) = (*A)(i, j) > n.scalar ? g(i, j) / (*A)(i, j) : 0.0;
            accumulate(n.a, d);
            break;
        }
        case Op::Abs: {
            Matrix d(g.rows(), g.cols());
            for (int i = 0; i < d.rows(); ++i)
                for (int j = 0; j < d.cols(); ++j) {
                    const double x = (*A)(i, j);
                    d(i, j) = x > 0.0 ? g(i, j) : (x < 0.0 ? -g(i, j) : 0.0);
                }
            accumulate(n.a, d);
            break;
        }
        case Op::Neg:
            accumulate(n.a, map_unary(g, [](double x) { return -x; }));
            break;
        case Op::Sigmoid: {
            Matrix d(g.rows(), g.cols());
            for (int i = 0; i < d.rows(); ++i)
                for (int j = 0; j < d.cols(); ++j) {
                    const double s = n.value(i, j);
                    d(i, j) = g(i, j) * s * (1.0 - s);
                }
            accumulate(n.a, d);
            break;
        }
        case Op::Softplus: {
            Matrix d(g.rows(), g.cols());
            for (int i = 0; i < d.rows(); ++i)
                for (int j = 0; j < d.cols(); ++j)
                    d(i, j) = g(i, j) * stable_sigmoid((*A)(i, j));
            accumulate(n.a, d);
            break;
        }
        case Op::Scale:
            accumulate(n.a, map_unary(g, [k = n.scalar](double x) { return k * x; }));
            break;
        case Op::SumAll: {
            Matrix d(A->rows(), A->cols(), g(0, 0));
            accumulate(n.a, d);
            break;
        }
        case Op::RowSum: {
            Matrix d(A->rows(), A->cols());
            for (int i = 0; i < d.rows(); ++i)
                for (int j = 0; j < d.cols(); ++j) d(i, j) = g(i, 0);
            accumulate(n.a, d);
            break;
        }
        case Op::ColSum: {
            Matrix d(A->rows(), A->cols());
            for (int i = 0; i < d.rows(); ++i)
                for (int j = 0; j < d.cols(); ++j) d(i, j) = g(0, j);
            accumulate(n.a, d);
            break;
        }
        case Op::MeanAll: {
            const double gv = g(0, 0) / static_cast<double>(A->size());
            Matrix d(A->rows(), A->cols(), gv);
            accumulate(n.a, d);
            break;
        }
        case Op::GatherRows: {
            Matrix d(A->rows(), A->cols());
            for (size_t p = 0; p < n.indices.size(); ++p)
                for (int j = 0; j < A->cols(); ++j)
                    d(n.indices[p], j) += g(static_cast<int>(p), j);
            accumulate(n.a, d);
            break;
        }
        case Op::ConcatRows: {
            Matrix da(A->rows(), A->cols());
            Matrix db(B->rows(), B->cols());
            for (int i = 0; i < A->rows(); ++i)
                for (int j = 0; j < A->cols(); ++j) da(i, j) = g(i, j);
            for (int i = 0; i < B->rows(); ++i)
                for (int j = 0; j < B->cols(); ++j) db(i, j) = g(A->rows() + i, j);
            accumulate(n.a, da);
            accumulate(n.b, db);
            break;
        }
        case Op::ConcatCols: {
            Matrix da(A->rows(), A->cols());
            Matrix db(B->rows(), B->cols());
            for (int i = 0; i < A->rows(); ++i) {
                for (int j = 0; j < A->cols(); ++j) da(i, j) = g(i, j);
                for (int j = 0; j < B->cols(); ++j) db(i, j) = g(i, A->cols() + j);
            }
            accumulate(n.a, da);
            accumulate(n.b, db);
            break;
        }
        case Op::Reshape: {
            Matrix d(A->rows(), A->cols());
            const double* src = g.data();
            double* dst = d.data();
            for (size_t k = 0; k < d.size(); ++k) dst[k] = src[k];
            accumulate(n.a, d);
            break;
        }
        case Op::Solve: {
            const Matrix mt = mapnet::transpose(*A);
            const Matrix gb = linear_solve(mt, g);
            accumulate(n.b, gb);
            Matrix gm = mapnet::matmul(gb, mapnet::transpose(n.value));
            for (int i = 0; i < gm.rows(); ++i)
                for (int j = 0; j < gm.cols(); ++j) gm(i, j) = -gm(i, j);
            accumulate(n.a, gm);
            break;
        }
        case Op::Constant:
        case Op::Param:
            break;
        }
    }
};

// Free-function spellings so model code reads like the math.
inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
inline Var operator/(Var a, Var b) { return a.tape->div(a, b); }
inline Var operator-(Var a) { return a.tape->neg(a); }

inline Var matmul(Var a, Var b) { return a.tape->matmul(a, b); }
inline Var transpose(Var a) { return a.tape->transpose(a); }
inline Var square(Var a) { return a.tape->square(a); }
inline Var sqrt(Var a) { return a.tape->sqrt(a); }
inline Var exp(Var a) { return a.tape->exp(a); }
inline Var abs(Var a) { return a.tape->abs(a); }
inline Var sigmoid(Var a) { return a.tape->sigmoid(a); }
inline Var softplus(Var a) { return a.tape->softplus(a); }
inline Var sum_all(Var a) { return a.tape->sum_all(a); }
inline Var row_sum(Var a) { return a.tape->row_sum(a); }
inline Var col_sum(Var a) { return a.tape->col_sum(a); }
inline Var mean_all(Var a) { return a.tape->mean_all(a); }
inline Var log_floored(Var a, double floor) { return a.tape->log_floored(a, floor); }
inline Var scale(Var a, double k) { return a.tape->scale(a, k); }
inline Var gather_rows(Var a, std::vector<int> idx) { return a.tape->gather_rows(a, std::move(idx)); }
inline Var concat_rows(Var a, Var b) { return a.tape->concat_rows(a, b); }
inline Var concat_cols(Var a, Var b) { return a.tape->concat_cols(a, b); }
inline Var reshape(Var a, int r, int c) { return a.tape->reshape(a, r, c); }
inline Var solve(Var m, Var b) { return m.tape->solve(m, b); }

} // namespace mapnet
