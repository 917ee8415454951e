#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mapnet/episodes.hpp"
#include "mapnet/graph.hpp"
#include "mapnet/mlp.hpp"
#include "mapnet/relation.hpp"
#include "mapnet/tape.hpp"

namespace mapnet {

struct ModelDims {
    int d_v = 32;
    int d_a = 16;
    int embed = 16;  // shared embedding dimension c
    int hidden = 64; // hidden width of the f and g encoders
};

// The four learnable components: visual encoder f, semantic encoder g,
// relation transfer h, weight learner w.
struct ModelParams {
    ModelDims dims;
    Mlp f, g, w;
    TransferModule h;

    static int weight_learner_hidden(const ModelDims& dims) {
        return std::min(16, dims.hidden);
    }

    static ModelParams init(const ModelDims& dims, uint64_t seed) {
        ModelParams p;
        p.dims = dims;
        Rng rng(seed);
        p.f = make_mlp(dims.d_v, dims.hidden, dims.embed, rng);
        p.g = make_mlp(dims.d_a, dims.hidden, dims.embed, rng);
        p.h = TransferModule::make(dims.embed, rng);
        // The weight learner stays narrow: under a per-parameter adaptive
        // optimizer the gate's drift speed grows with its parameter count, and
        // a fast gate can shut the semantic path before the encoders align.
        p.w = make_mlp(2 * dims.embed, weight_learner_hidden(dims), 1, rng);
        // Zeroed gate head: every fusion weight starts at exactly 0.5, so the
        // sigmoid is unsaturated and both modalities receive gradient from the
        // first episode on.
        p.w.w2 = Matrix(p.w.w2.rows(), 1);
        p.w.b2 = Matrix(1, 1);
        return p;
    }

    // Fixed enumeration order; the optimizer state and the persistence format
    // both key off it.
    template <typename F> void for_each_param(F&& fn) {
        fn("f.w1", f.w1); fn("f.b1", f.b1); fn("f.w2", f.w2); fn("f.b2", f.b2);
        fn("g.w1", g.w1); fn("g.b1", g.b1); fn("g.w2", g.w2); fn("g.b2", g.b2);
        fn("h.w1", h.net.w1); fn("h.b1", h.net.b1); fn("h.w2", h.net.w2); fn("h.b2", h.net.b2);
        fn("w.w1", w.w1); fn("w.b1", w.b1); fn("w.w2", w.w2); fn("w.b2", w.b2);
    }
    template <typename F> void for_each_param(F&& fn) const {
        const_cast<ModelParams*>(this)->for_each_param(
            [&fn](const char* name, Matrix& m) { fn(name, static_cast<const Matrix&>(m)); });
    }

    bool all_finite() const {
        bool ok = true;
        for_each_param([&ok](const char*, const Matrix& m) { ok = ok && m.is_finite(); });
        return ok;
    }
};

enum class AuxConstraint { None, Instance, Relation };

inline const char* aux_name(AuxConstraint a) {
    switch (a) {
    case AuxConstraint::None: return "none";
    case AuxConstraint::Instance: return "instance";
    case AuxConstraint::Relation: return "relation";
    }
    return "?";
}

// Component switches for ablations plus an optional auxiliary constraint.
struct AblationMode {
    bool vp = true;
    bool sp = true;
    bool rg = true;
    AuxConstraint aux = AuxConstraint::None;

    void validate() const {
        if (rg && !(vp || sp))
            throw InvalidConfigError("mode: rg requires vp or sp (nothing propagates otherwise)");
    }

    std::string tag() const {
        std::string s;
        if (vp) s += "VP+";
        if (sp) s += "SP+";
        if (rg) s += "RG+";
        if (!s.empty()) s.pop_back();
        if (s.empty()) s = "baseline";
        if (aux != AuxConstraint::None) s += std::string("+") + aux_name(aux);
        return s;
    }
};

// Ablation mode grid: baseline, VP, SP, VP+SP, SP+RG, VP+SP+RG.
inline std::vector<AblationMode> ablation_modes() {
    return {
        {false, false, false, AuxConstraint::None}, {true, false, false, AuxConstraint::None},
        {false, true, false, AuxConstraint::None},  {true, true, false, AuxConstraint::None},
        {false, true, true, AuxConstraint::None},   {true, true, true, AuxConstraint::None},
    };
}

struct ForwardOutput {
    Matrix probs;                       // T x N class probabilities per query
    std::vector<double> lambda_support; // per support sample per graph
    std::vector<double> lambda_query;   // per query (1.0 where fusion is bypassed)
    double loss_cls = 0.0;
    double loss_rg = 0.0;
    double loss_aux = 0.0;
    double loss_total = 0.0;
};

struct ParamVars {
    MlpVars f, g, w, h;
    bool h_identity = false;
};

inline ParamVars params_on_tape(Tape& t, const ModelParams& p, bool as_params = true) {
    ParamVars v;
    v.f = mlp_on_tape(t, p.f, as_params);
    v.g = mlp_on_tape(t, p.g, as_params);
    v.h = mlp_on_tape(t, p.h.net, as_params);
    v.w = mlp_on_tape(t, p.w, as_params);
    v.h_identity = p.h.identity_hook;
    return v;
}

// ---- individual operations -------------------------------------------------

inline Var encode_visual(Tape& t, const MlpVars& f, Var x) {
    (void)t;
    return apply_mlp(f, x);
}

inline Matrix encode_visual(const Mlp& f, const Matrix& x) {
    if (x.cols() != f.in_dim())
        throw InvalidInputError("encode_visual: feature dimension mismatch");
    Tape t;
    return t.value(apply_mlp(mlp_on_tape(t, f, false), t.constant(x)));
}

// Support rows are g(a_i); query rows are exact zeros.
inline Var encode_semantic(Tape& t, const MlpVars& g, Var a_support, int query_count,
                           int embed_dim) {
    Var sup = apply_mlp(g, a_support);
    if (query_count == 0) return sup;
    return concat_rows(sup, t.constant(Matrix(query_count, embed_dim)));
}

inline Matrix encode_semantic(const Mlp& g, const Matrix& a_support, int query_count) {
    if (a_support.cols() != g.in_dim())
        throw InvalidInputError("encode_semantic: attribute dimension mismatch");
    Tape t;
    return t.value(
        encode_semantic(t, mlp_on_tape(t, g, false), t.constant(a_support), query_count,
                        g.out_dim()));
}

struct FusedVars {
    Var fused;
    Var lambda; // n x 1 column
};

// lambda = sigmoid(w(zv || za)) per row; fused = lambda*zv + (1-lambda)*za.
inline FusedVars fuse_rows(Tape& t, const MlpVars& w, Var zv, Var za) {
    Var lam = sigmoid(apply_mlp(w, concat_cols(zv, za)));
    Var one = t.constant(Matrix(1, 1, 1.0));
    Var fused = lam * zv + (one - lam) * za;
    return {fused, lam};
}

inline std::pair<Matrix, double> fuse(const Matrix& zv_row, const Matrix& za_row, const Mlp& w) {
    if (zv_row.rows() != 1 || za_row.rows() != 1 || zv_row.cols() != za_row.cols())
        throw InvalidInputError("fuse: expects two rows of equal dimension");
    Tape t;
    FusedVars fv = fuse_rows(t, mlp_on_tape(t, w, false), t.constant(zv_row), t.constant(za_row));
    return {t.value(fv.fused), t.value(fv.lambda)(0, 0)};
}

// N x NK matrix averaging support rows class-wise.
inline Matrix class_mean_matrix(const std::vector<int>& labels, int n_way) {
    std::vector<int> counts(n_way, 0);
    for (int l : labels) {
        if (l < 0 || l >= n_way)
            throw InvalidInputError("class_mean_matrix: label out of range");
        ++counts[l];
    }
    for (int c = 0; c < n_way; ++c)
        if (counts[c] == 0)
            throw InvalidEpisodeError("class_mean_matrix: class " + std::to_string(c) +
                                      " has no support samples");
    Matrix m(n_way, static_cast<int>(labels.size()));
    for (size_t s = 0; s < labels.size(); ++s)
        m(labels[s], static_cast<int>(s)) = 1.0 / counts[labels[s]];
    return m;
}

inline Var prototypes(Tape& t, Var fused_support, const std::vector<int>& labels, int n_way) {
    return matmul(t.constant(class_mean_matrix(labels, n_way)), fused_support);
}

inline Matrix prototypes(const Matrix& fused_support, const std::vector<int>& labels) {
    if (labels.empty() || fused_support.rows() != static_cast<int>(labels.size()))
        throw InvalidInputError("prototypes: label/row mismatch");
    const int n_way = *std::max_element(labels.begin(), labels.end()) + 1;
    return matmul(class_mean_matrix(labels, n_way), fused_support);
}

// Softmax over negative (plain, not squared) Euclidean distances to the
// prototypes. The minimum distance is subtracted as a recorded constant;
// softmax is shift-invariant so values and gradients are unaffected, and the
// denominator stays >= 1.
inline Var classify(Tape& t, Var fused_query, Var protos) {
    Var d = sqrt(row_sum(square(protos - fused_query))); // N x 1
    const Matrix& dv = t.value(d);
    double dmin = dv(0, 0);
    for (int i = 1; i < dv.rows(); ++i) dmin = std::min(dmin, dv(i, 0));
    Var e = exp(-(d - t.constant(Matrix(1, 1, dmin))));
    return transpose(e / sum_all(e)); // 1 x N
}

inline Matrix classify(const Matrix& fused_query, const Matrix& protos) {
    if (fused_query.rows() != 1 || fused_query.cols() != protos.cols())
        throw InvalidInputError("classify: query must be a single row matching prototypes");
    Tape t;
    return t.value(classify(t, t.constant(fused_query), t.constant(protos)));
}

constexpr double kProbFloor = 1e-12;

inline double cls_loss(const Matrix& probs, const std::vector<int>& query_labels) {
    if (probs.rows() != static_cast<int>(query_labels.size()))
        throw InvalidInputError("cls_loss: label/row mismatch");
    double total = 0.0;
    for (int i = 0; i < probs.rows(); ++i) {
        const int y = query_labels[i];
        if (y < 0 || y >= probs.cols()) throw InvalidInputError("cls_loss: label out of range");
        total += -std::log(std::max(probs(i, y), kProbFloor));
    }
    return total / probs.rows();
}

inline Var aux_constraint_loss(Tape& t, AuxConstraint mode, Var zv_support, Var za_support) {
    switch (mode) {
    case AuxConstraint::None:
        return t.constant(Matrix(1, 1, 0.0));
    case AuxConstraint::Instance:
        return mean_all(square(zv_support - za_support));
    case AuxConstraint::Relation: {
        Var rv = detail::pairwise_relation_vectors(t, zv_support);
        Var ra = detail::pairwise_relation_vectors(t, za_support);
        return mean_all(square(rv - ra));
    }
    }
    throw InvalidInputError("aux_constraint_loss: unknown mode");
}

inline double aux_constraint_loss(AuxConstraint mode, const Matrix& zv_support,
                                  const Matrix& za_support) {
    if (mode != AuxConstraint::None && !zv_support.same_shape(za_support))
        throw InvalidInputError("aux_constraint_loss: embedding shape mismatch");
    Tape t;
    return t.scalar_value(
        aux_constraint_loss(t, mode, t.constant(zv_support), t.constant(za_support)));
}

// ---- full forward pass -------------------------------------------------------

struct TapeForward {
    ForwardOutput out;
    Var loss; // total loss node for backward
};

// Inductive protocol: one graph per query over the NK support nodes plus that
// query. The same propagation matrix drives both modalities; vp/sp choose
// which modality consumes it, rg selects the rectified adjacency over the
// Gaussian one.
inline TapeForward map_forward_embedded(Tape& t, Var zv_all, Var za_all, const Episode& ep,
                                        const ParamVars& pv, const AblationMode& mode,
                                        double alpha, double mu) {
    mode.validate();
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidConfigError("map_forward: alpha not in (0,1)");
    if (mu < 0.0) throw InvalidConfigError("map_forward: mu must be >= 0");

    const int nk = ep.support_count();
    const int t_count = ep.query_count();
    const int n_way = ep.n_way;
    const int n = nk + 1; // per-graph node count
    const std::vector<int>& query_labels = ep.query_labels_for_scoring();

    std::vector<int> support_idx(nk);
    for (int i = 0; i < nk; ++i) support_idx[i] = i;

    Var zv_sup = gather_rows(zv_all, support_idx);
    Var za_sup = gather_rows(za_all, support_idx);

    // Episode-level losses on the support block.
    Var l_rg = t.constant(Matrix(1, 1, 0.0));
    if (mode.rg) {
        Var rv_ss = detail::pairwise_relation_vectors(t, zv_sup);
        Var ra_ss = detail::pairwise_relation_vectors(t, za_sup);
        Var rt_ss = pv.h_identity ? rv_ss : transfer_relations(t, pv.h, rv_ss, nk);
        l_rg = rg_loss(t, rt_ss, ra_ss, nk);
    }
    Var l_aux = aux_constraint_loss(t, mode.aux, zv_sup, za_sup);

    const Matrix avg = class_mean_matrix(ep.support_labels, n_way);

    TapeForward res;
    res.out.probs = Matrix(t_count, n_way);
    Var cls_sum = t.constant(Matrix(1, 1, 0.0));

    for (int q = 0; q < t_count; ++q) {
        std::vector<int> idx = support_idx;
        idx.push_back(nk + q);
        Var zv_g = gather_rows(zv_all, idx);
        Var za_g = gather_rows(za_all, idx);

        Var zv_prop = zv_g;
        Var za_prop = za_g;
        if (mode.vp || mode.sp) {
            Var rel = detail::pairwise_relation_vectors(t, zv_g);
            AdjacencyVars adj;
            if (mode.rg) {
                Var rt = pv.h_identity ? rel : transfer_relations(t, pv.h, rel, n);
                adj = adjacency_from_relations(t, rt, n);
            } else {
                adj = detail::adjacency_from_norms(t, reshape(row_sum(rel), n, n), n);
            }
            Var s_norm = symmetric_normalize(t, adj.adjacency);
            Var prop = propagation_matrix(t, s_norm, alpha);
            if (mode.vp) zv_prop = matmul(prop, zv_g);
            if (mode.sp) za_prop = matmul(prop, za_g);
        }

        FusedVars fv = fuse_rows(t, pv.w, zv_prop, za_prop);
        const Matrix& lam = t.value(fv.lambda);
        for (int i = 0; i < nk; ++i) res.out.lambda_support.push_back(lam(i, 0));

        Var fused = fv.fused;
        if (!mode.sp) {
            // The query has no semantic row in this mode: it keeps its visual
            // embedding (equivalent to lambda = 1); supports still fuse.
            fused = concat_rows(gather_rows(fused, support_idx), gather_rows(zv_prop, {nk}));
            res.out.lambda_query.push_back(1.0);
        } else {
            res.out.lambda_query.push_back(lam(nk, 0));
        }

        Var protos = matmul(t.constant(avg), gather_rows(fused, support_idx));
        Var prow = classify(t, gather_rows(fused, {nk}), protos);

        const Matrix& pv_row = t.value(prow);
        for (int c = 0; c < n_way; ++c) res.out.probs(q, c) = pv_row(0, c);

        const int y = query_labels[q];
        if (y < 0 || y >= n_way) throw InvalidEpisodeError("map_forward: query label out of range");
        Var p_true = gather_rows(transpose(prow), {y});
        cls_sum = cls_sum + (-log_floored(p_true, kProbFloor));
    }

    Var l_cls = scale(cls_sum, 1.0 / t_count);
    Var total = l_cls + scale(l_rg, mu) + scale(l_aux, mu);

    res.out.loss_cls = t.scalar_value(l_cls);
    res.out.loss_rg = t.scalar_value(l_rg);
    res.out.loss_aux = t.scalar_value(l_aux);
    res.out.loss_total = t.scalar_value(total);
    res.loss = total;
    ensure_finite(res.out.probs, "map_forward probabilities");
    return res;
}

inline TapeForward map_forward(Tape& t, const Episode& ep, const ParamVars& pv,
                               const ModelDims& dims, const AblationMode& mode, double alpha,
                               double mu) {
    if (ep.support_count() < 1 || ep.query_count() < 1)
        throw InvalidEpisodeError("map_forward: empty support or query set");
    if (ep.support_features.cols() != dims.d_v || ep.query_features.cols() != dims.d_v)
        throw InvalidEpisodeError("map_forward: visual feature dimension mismatch");
    if (ep.support_attributes.cols() != dims.d_a)
        throw InvalidEpisodeError("map_forward: attribute dimension mismatch");

    Var x_all = concat_rows(t.constant(ep.support_features), t.constant(ep.query_features));
    Var zv_all = encode_visual(t, pv.f, x_all);
    Var za_all = encode_semantic(t, pv.g, t.constant(ep.support_attributes), ep.query_count(),
                                 dims.embed);
    return map_forward_embedded(t, zv_all, za_all, ep, pv, mode, alpha, mu);
}

inline ForwardOutput map_forward(const Episode& ep, const ModelParams& params,
                                 const AblationMode& mode, double alpha, double mu) {
    Tape t;
    ParamVars pv = params_on_tape(t, params, false);
    return map_forward(t, ep, pv, params.dims, mode, alpha, mu).out;
}

} // namespace mapnet
