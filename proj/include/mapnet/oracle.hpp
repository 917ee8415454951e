#pragma once

// Scalar-loop reference implementations used by tests and the `oracle` CLI
// command. Everything here is written independently of the tape pipeline:
// plain double loops, a local Gaussian elimination, no shared math helpers.

#include <cmath>
#include <vector>

#include "mapnet/episodes.hpp"
#include "mapnet/model.hpp"

namespace mapnet::oracle {

inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// y = mlp(x) with explicit loops.
inline std::vector<double> mlp_eval(const Mlp& m, const std::vector<double>& x) {
    const int in = m.in_dim(), hid = m.hidden_dim(), out = m.out_dim();
    std::vector<double> h(hid), y(out);
    for (int j = 0; j < hid; ++j) {
        double acc = m.b1(0, j);
        for (int i = 0; i < in; ++i) acc += x[i] * m.w1(i, j);
        h[j] = softplus(acc);
    }
    for (int j = 0; j < out; ++j) {
        double acc = m.b2(0, j);
        for (int i = 0; i < hid; ++i) acc += h[i] * m.w2(i, j);
        y[j] = acc;
    }
    return y;
}

// Dense Gaussian elimination with partial pivoting; solves A X = B in place.
inline std::vector<std::vector<double>> gauss_solve(std::vector<std::vector<double>> a,
                                                    std::vector<std::vector<double>> b) {
    const int n = static_cast<int>(a.size());
    const int m = static_cast<int>(b[0].size());
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        std::swap(a[col], a[piv]);
        std::swap(b[col], b[piv]);
        const double d = a[col][col];
        for (int r = col + 1; r < n; ++r) {
            const double f = a[r][col] / d;
            if (f == 0.0) continue;
            for (int j = col; j < n; ++j) a[r][j] -= f * a[col][j];
            for (int j = 0; j < m; ++j) b[r][j] -= f * b[col][j];
        }
    }
    for (int col = n - 1; col >= 0; --col) {
        const double d = a[col][col];
        for (int j = 0; j < m; ++j) b[col][j] /= d;
        for (int r = 0; r < col; ++r) {
            const double f = a[r][col];
            if (f == 0.0) continue;
            for (int j = 0; j < m; ++j) b[r][j] -= f * b[col][j];
        }
    }
    return b;
}

struct ScriptedForward {
    Matrix probs;
    std::vector<double> lambda_support, lambda_query;
    double loss_cls = 0.0, loss_rg = 0.0, loss_aux = 0.0, loss_total = 0.0;
};

// Step-by-step scripted forward pass for one episode.
inline ScriptedForward scripted_map_forward(const Episode& ep, const ModelParams& params,
                                            const AblationMode& mode, double alpha, double mu) {
    const int nk = ep.support_count();
    const int tq = ep.query_count();
    const int n_way = ep.n_way;
    const int c = params.dims.embed;
    const int n = nk + 1;

    // encode all samples
    std::vector<std::vector<double>> zv(nk + tq), za(nk + tq, std::vector<double>(c, 0.0));
    for (int i = 0; i < nk; ++i) {
        std::vector<double> x(ep.support_features.row(i), ep.support_features.row(i) + params.dims.d_v);
        zv[i] = mlp_eval(params.f, x);
        std::vector<double> a(ep.support_attributes.row(i), ep.support_attributes.row(i) + params.dims.d_a);
        za[i] = mlp_eval(params.g, a);
    }
    for (int q = 0; q < tq; ++q) {
        std::vector<double> x(ep.query_features.row(q), ep.query_features.row(q) + params.dims.d_v);
        zv[nk + q] = mlp_eval(params.f, x);
    }

    auto relation = [c](const std::vector<double>& a, const std::vector<double>& b) {
        std::vector<double> r(c);
        for (int k = 0; k < c; ++k) {
            const double d = a[k] - b[k];
            r[k] = d * d;
        }
        return r;
    };
    auto transfer = [&](const std::vector<double>& r) {
        return params.h.identity_hook ? r : mlp_eval(params.h.net, r);
    };

    ScriptedForward out;
    out.probs = Matrix(tq, n_way);

    // episode-level relation guidance loss on support-support pairs
    if (mode.rg) {
        double acc = 0.0;
        for (int i = 0; i < nk; ++i)
            for (int j = 0; j < nk; ++j) {
                if (i == j) continue;
                const std::vector<double> rt = transfer(relation(zv[i], zv[j]));
                const std::vector<double> ra = relation(za[i], za[j]);
                double pair = 0.0;
                for (int k = 0; k < c; ++k) {
                    const double d = rt[k] - ra[k];
                    pair += d * d;
                }
                acc += pair / c;
            }
        out.loss_rg = acc / (static_cast<double>(nk) * nk - nk);
    }
    if (mode.aux == AuxConstraint::Instance) {
        double acc = 0.0;
        for (int i = 0; i < nk; ++i)
            for (int k = 0; k < c; ++k) {
                const double d = zv[i][k] - za[i][k];
                acc += d * d;
            }
        out.loss_aux = acc / (static_cast<double>(nk) * c);
    } else if (mode.aux == AuxConstraint::Relation) {
        double acc = 0.0;
        for (int i = 0; i < nk; ++i)
            for (int j = 0; j < nk; ++j) {
                const std::vector<double> rv = relation(zv[i], zv[j]);
                const std::vector<double> ra = relation(za[i], za[j]);
                for (int k = 0; k < c; ++k) {
                    const double d = rv[k] - ra[k];
                    acc += d * d;
                }
            }
        out.loss_aux = acc / (static_cast<double>(nk) * nk * c);
    }

    std::vector<int> counts(n_way, 0);
    for (int l : ep.support_labels) ++counts[l];

    double cls_sum = 0.0;
    for (int q = 0; q < tq; ++q) {
        // nodes: supports then this query
        std::vector<std::vector<double>> gzv(n), gza(n);
        for (int i = 0; i < nk; ++i) {
            gzv[i] = zv[i];
            gza[i] = za[i];
        }
        gzv[n - 1] = zv[nk + q];
        gza[n - 1] = std::vector<double>(c, 0.0);

        std::vector<std::vector<double>> tzv = gzv, tza = gza;
        if (mode.vp || mode.sp) {
            // pairwise distances (rectified or plain)
            std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    if (i == j) continue;
                    std::vector<double> r = relation(gzv[i], gzv[j]);
                    if (mode.rg) r = transfer(r);
                    double s = 0.0;
                    for (int k = 0; k < c; ++k) s += mode.rg ? std::abs(r[k]) : r[k];
                    dist[i][j] = s;
                }
            // population std of off-diagonal entries
            double mean = 0.0;
            const double cnt = static_cast<double>(n) * n - n;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    if (i != j) mean += dist[i][j];
            mean /= cnt;
            double var = 0.0;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    if (i != j) var += (dist[i][j] - mean) * (dist[i][j] - mean);
            var /= cnt;
            double sigma = std::sqrt(var);
            if (sigma < 1e-12) sigma = 1.0;

            std::vector<std::vector<double>> adj(n, std::vector<double>(n, 0.0));
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    if (i != j) adj[i][j] = std::exp(-dist[i][j] / sigma);
            std::vector<double> deg(n, 0.0);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) deg[i] += adj[i][j];
            std::vector<std::vector<double>> sys(n, std::vector<double>(n, 0.0));
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    const double s = adj[i][j] / std::sqrt(deg[i] * deg[j]);
                    sys[i][j] = (i == j ? 1.0 : 0.0) - alpha * s;
                }
            std::vector<std::vector<double>> rhs(n, std::vector<double>(n, 0.0));
            for (int i = 0; i < n; ++i) rhs[i][i] = 1.0;
            const auto inv = gauss_solve(sys, rhs);
            std::vector<std::vector<double>> prop(n, std::vector<double>(n));
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) prop[i][j] = (1.0 - alpha) * inv[i][j];

            auto apply = [&](const std::vector<std::vector<double>>& zin) {
                std::vector<std::vector<double>> zo(n, std::vector<double>(c, 0.0));
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j)
                        for (int k = 0; k < c; ++k) zo[i][k] += prop[i][j] * zin[j][k];
                return zo;
            };
            if (mode.vp) tzv = apply(gzv);
            if (mode.sp) tza = apply(gza);
        }

        // fuse
        std::vector<std::vector<double>> fused(n, std::vector<double>(c));
        for (int i = 0; i < n; ++i) {
            std::vector<double> cat(2 * c);
            for (int k = 0; k < c; ++k) {
                cat[k] = tzv[i][k];
                cat[c + k] = tza[i][k];
            }
            const double lam = sigmoid(mlp_eval(params.w, cat)[0]);
            const bool is_query = i == n - 1;
            if (is_query && !mode.sp) {
                fused[i] = tzv[i];
                out.lambda_query.push_back(1.0);
            } else {
                for (int k = 0; k < c; ++k) fused[i][k] = lam * tzv[i][k] + (1.0 - lam) * tza[i][k];
                if (is_query) out.lambda_query.push_back(lam);
            }
            if (!is_query) out.lambda_support.push_back(lam);
        }

        // prototypes and probabilities
        std::vector<std::vector<double>> proto(n_way, std::vector<double>(c, 0.0));
        for (int i = 0; i < nk; ++i)
            for (int k = 0; k < c; ++k)
                proto[ep.support_labels[i]][k] += fused[i][k] / counts[ep.support_labels[i]];
        std::vector<double> expd(n_way);
        double denom = 0.0;
        for (int cc = 0; cc < n_way; ++cc) {
            double d2 = 0.0;
            for (int k = 0; k < c; ++k) {
                const double d = fused[n - 1][k] - proto[cc][k];
                d2 += d * d;
            }
            expd[cc] = std::exp(-std::sqrt(d2));
            denom += expd[cc];
        }
        for (int cc = 0; cc < n_way; ++cc) out.probs(q, cc) = expd[cc] / denom;

        const int y = ep.query_labels_for_scoring()[q];
        cls_sum += -std::log(std::max(out.probs(q, y), 1e-12));
    }
    out.loss_cls = cls_sum / tq;
    out.loss_total = out.loss_cls + mu * out.loss_rg + mu * out.loss_aux;
    return out;
}

} // namespace mapnet::oracle
