#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mapnet/tape.hpp"

namespace mapnet {

// A scalar-valued function of a set of parameter matrices, expressed by
// recording it on a tape. The checker calls it repeatedly on fresh tapes.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

namespace detail {
inline double eval_scalar(const ScalarFn& f, const std::vector<Matrix>& params) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const auto& p : params) vars.push_back(tape.param(p));
    Var loss = f(tape, vars);
    double v = tape.scalar_value(loss);
    if (!std::isfinite(v))
        throw NumericInstabilityError("finite_diff_check: non-finite loss during perturbation");
    return v;
}
} // namespace detail

// Central-difference check of the tape's reverse sweep. Returns the maximum
// over all parameter entries of
//   |analytic - central_difference| / max(1e-8, |central_difference|).
inline double finite_diff_check(const ScalarFn& f, std::vector<Matrix> params,
                                double step = 1e-5) {
    if (step <= 0.0) throw InvalidInputError("finite_diff_check: step must be positive");

    std::vector<Matrix> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(params.size());
        for (const auto& p : params) vars.push_back(tape.param(p));
        Var loss = f(tape, vars);
        tape.backward(loss);
        for (Var v : vars) analytic.push_back(tape.grad(v));
    }

    double max_rel = 0.0;
    for (size_t p = 0; p < params.size(); ++p) {
        Matrix& m = params[p];
        for (int i = 0; i < m.rows(); ++i) {
            for (int j = 0; j < m.cols(); ++j) {
                const double saved = m(i, j);
                m(i, j) = saved + step;
                const double fp = detail::eval_scalar(f, params);
                m(i, j) = saved - step;
                const double fm = detail::eval_scalar(f, params);
                m(i, j) = saved;
                const double fd = (fp - fm) / (2.0 * step);
                const double rel =
                    std::abs(analytic[p](i, j) - fd) / std::max(1e-8, std::abs(fd));
                if (rel > max_rel) max_rel = rel;
            }
        }
    }
    return max_rel;
}

} // namespace mapnet
