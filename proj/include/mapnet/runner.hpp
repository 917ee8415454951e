#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "mapnet/config.hpp"
#include "mapnet/gradcheck.hpp"
#include "mapnet/oracle.hpp"
#include "mapnet/report.hpp"
#include "mapnet/trainer.hpp"

namespace mapnet {

// Exit codes shared by the CLI and the command runners.
constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfigError = 2;

inline Dataset obtain_dataset(const RunSettings& rs) {
    if (!rs.features_path.empty() || !rs.attributes_path.empty()) {
        if (rs.features_path.empty() || rs.attributes_path.empty())
            throw InvalidConfigError(
                "features_path and attributes_path must both be set to load a dataset");
        return load_embeddings(rs.features_path, rs.attributes_path);
    }
    return synth_generate(rs.synth, rs.train.seed);
}

inline int run_synth(const RunSettings& rs, const std::string& out_prefix) {
    Dataset ds = synth_generate(rs.synth, rs.train.seed);
    const std::string fpath = out_prefix + ".features";
    const std::string apath = out_prefix + ".attributes";
    save_dataset(ds, fpath, apath);
    std::printf("synth: wrote %d samples / %d classes to %s and %s\n", ds.sample_count(),
                ds.class_count(), fpath.c_str(), apath.c_str());
    return kExitOk;
}

inline int run_train(const RunSettings& rs, const std::string& out_prefix) {
    Dataset ds = obtain_dataset(rs);
    TrainResult tr = train(ds, rs.train);
    for (const EpochLog& e : tr.log) std::printf("%s\n", format_epoch_log(e).c_str());
    const std::string ppath = out_prefix + ".params";
    save_params(tr.params, ppath);
    write_file(out_prefix + ".log", training_log_text(tr));
    std::printf("train: best val_acc %.6g at epoch %d, params written to %s\n",
                tr.best_val_accuracy, tr.best_epoch, ppath.c_str());
    return kExitOk;
}

inline int run_eval(const RunSettings& rs, const std::string& out_prefix) {
    Dataset ds = obtain_dataset(rs);
    ModelParams params;
    if (!rs.params_path.empty()) {
        params = load_params(rs.params_path);
        if (params.dims.d_v != ds.d_v() || params.dims.d_a != ds.d_a())
            throw InvalidConfigError("loaded parameters do not match dataset dimensions");
    } else {
        ModelDims dims{ds.d_v(), ds.d_a(), rs.train.embed_dim, rs.train.hidden_dim};
        params = ModelParams::init(dims, rs.train.seed);
    }
    EvalReport rep = evaluate(params, ds, Split::Test, rs.train, rs.train.eval_episodes);
    write_file(out_prefix + ".json", eval_document(rs, rep).dump(2) + "\n");
    std::printf("eval: accuracy %.4g%% +- %.4g%% over %d episodes (%.2fs)\n", rep.accuracy,
                rep.ci95, rep.episode_count, rep.wall_time);
    return kExitOk;
}

inline int run_ablate(const RunSettings& rs, const std::string& out_prefix) {
    Dataset ds = obtain_dataset(rs);
    std::vector<AblationRow> rows = ablation_run(ds, rs.train);
    write_file(out_prefix + ".json", ablation_document(rs, rows).dump(2) + "\n");
    write_file(out_prefix + ".csv", ablation_csv(rows));
    for (const auto& row : rows)
        std::printf("ablate: %-12s accuracy %.4g%% +- %.4g%%\n", row.mode.tag().c_str(),
                    row.report.accuracy, row.report.ci95);
    return kExitOk;
}

inline int run_lambda(const RunSettings& rs, const std::string& out_prefix) {
    Dataset ds = obtain_dataset(rs);
    std::vector<LambdaStat> stats = lambda_sweep(ds, rs.train, rs.lambda_shots);
    write_file(out_prefix + ".json", lambda_document(rs, stats).dump(2) + "\n");
    for (const auto& st : stats)
        std::printf("lambda: K=%d support %.6g query %.6g\n", st.k_shot,
                    st.report.lambda_mean_support, st.report.lambda_mean_query);
    return kExitOk;
}

// ---- gradcheck ------------------------------------------------------------

inline ParamVars param_vars_from_list(const std::vector<Var>& v) {
    if (v.size() != 16) throw InvalidInputError("expected 16 parameter matrices");
    ParamVars pv;
    pv.f = {v[0], v[1], v[2], v[3]};
    pv.g = {v[4], v[5], v[6], v[7]};
    pv.h = {v[8], v[9], v[10], v[11]};
    pv.w = {v[12], v[13], v[14], v[15]};
    pv.h_identity = false;
    return pv;
}

inline std::vector<Matrix> param_matrices(const ModelParams& p) {
    std::vector<Matrix> out;
    out.reserve(16);
    p.for_each_param([&out](const char*, const Matrix& m) { out.push_back(m); });
    return out;
}

// Every ablation mode row plus both auxiliary-constraint modes.
inline std::vector<AblationMode> gradcheck_modes() {
    std::vector<AblationMode> modes = ablation_modes();
    modes.push_back({true, true, false, AuxConstraint::Instance});
    modes.push_back({true, true, false, AuxConstraint::Relation});
    return modes;
}

struct GradCheckCase {
    AblationMode mode;
    double max_rel_error = 0.0;
};

// Full-pipeline finite-difference suite on a 3-way 2-shot episode.
inline std::vector<GradCheckCase> gradcheck_suite(uint64_t seed, double step = 1e-5) {
    // Every generator field is pinned so the check point cannot drift with
    // project defaults; a finite-difference suite is only meaningful at a
    // point where no parameter entry has a vanishing true gradient.
    SynthSpec spec;
    spec.train_classes = 4;
    spec.val_classes = 2;
    spec.test_classes = 2;
    spec.samples_per_class = 6;
    spec.d_v = 8;
    spec.d_a = 6;
    spec.noise_scale = 0.6;
    spec.coupling_scale = 1.0;
    spec.center_jitter = 0.3;
    spec.attr_sparsity = 0.5;
    Dataset ds = synth_generate(spec, seed);
    Rng rng(seed);
    Episode ep = sample_episode(ds, Split::Train, 3, 2, 3, rng);

    ModelDims dims{spec.d_v, spec.d_a, 6, 8};
    ModelParams params = ModelParams::init(dims, seed);

    std::vector<GradCheckCase> cases;
    for (const AblationMode& mode : gradcheck_modes()) {
        ScalarFn fn = [&ep, &dims, &mode](Tape& t, const std::vector<Var>& vars) {
            return map_forward(t, ep, param_vars_from_list(vars), dims, mode, 0.2, 1.0).loss;
        };
        cases.push_back({mode, finite_diff_check(fn, param_matrices(params), step)});
    }
    return cases;
}

// The verification point is fixed: at an f64 loss of order 1 and step 1e-5 a
// single ulp of rounding in one loss evaluation already reads as ~1e-3
// relative error on an entry whose true gradient vanishes, so the suite runs
// where every parameter entry carries real gradient.
constexpr uint64_t kGradcheckSeed = 7;

inline int run_gradcheck(const RunSettings&) {
    const auto cases = gradcheck_suite(kGradcheckSeed);
    double worst = 0.0;
    for (const auto& c : cases) {
        std::printf("gradcheck: %-22s max_rel_error %.3g\n", c.mode.tag().c_str(),
                    c.max_rel_error);
        worst = std::max(worst, c.max_rel_error);
    }
    std::printf("gradcheck: overall max relative error %.3g (tolerance 1e-4)\n", worst);
    return worst <= 1e-4 ? kExitOk : kExitCheckFailed;
}

// ---- oracle ----------------------------------------------------------------

struct OracleSummary {
    double neumann_gap = 0.0;  // closed form vs 64-term series
    double scripted_gap = 0.0; // tape pipeline vs scalar-loop script
};

inline OracleSummary oracle_suite(uint64_t seed) {
    OracleSummary sum;
    Rng rng(seed);

    // Closed-form propagation against the truncated Neumann series.
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_int(19)); // up to 20
        const int c = 1 + static_cast<int>(rng.uniform_int(8));
        Matrix z(n, c);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) z(i, j) = rng.normal();
        auto ga = gaussian_adjacency(pairwise_sq_distances(z));
        Matrix s = symmetric_normalize(ga.adjacency);
        Matrix closed = propagate(propagation_matrix(s, 0.2), z);
        Matrix series = neumann_propagate(s, 0.2, z, 64);
        sum.neumann_gap = std::max(sum.neumann_gap, max_abs_diff(closed, series));
    }

    // End-to-end scripted oracle across every mode, including aux constraints.
    SynthSpec spec;
    spec.train_classes = 4;
    spec.val_classes = 2;
    spec.test_classes = 2;
    spec.samples_per_class = 6;
    spec.d_v = 8;
    spec.d_a = 6;
    spec.noise_scale = 0.6;
    spec.coupling_scale = 1.0;
    spec.center_jitter = 0.3;
    spec.attr_sparsity = 0.5;
    Dataset ds = synth_generate(spec, seed + 1);
    Rng erng(seed + 2);
    ModelDims dims{spec.d_v, spec.d_a, 6, 8};
    ModelParams params = ModelParams::init(dims, seed + 3);
    for (int trial = 0; trial < 5; ++trial) {
        Episode ep = sample_episode(ds, Split::Train, 3, 2, 3, erng);
        for (const AblationMode& mode : gradcheck_modes()) {
            ForwardOutput got = map_forward(ep, params, mode, 0.2, 1.0);
            oracle::ScriptedForward want =
                oracle::scripted_map_forward(ep, params, mode, 0.2, 1.0);
            sum.scripted_gap = std::max(sum.scripted_gap, max_abs_diff(got.probs, want.probs));
            sum.scripted_gap =
                std::max(sum.scripted_gap, std::abs(got.loss_total - want.loss_total));
            sum.scripted_gap = std::max(sum.scripted_gap, std::abs(got.loss_rg - want.loss_rg));
            sum.scripted_gap =
                std::max(sum.scripted_gap, std::abs(got.loss_aux - want.loss_aux));
        }
    }
    return sum;
}

inline int run_oracle(const RunSettings& rs) {
    OracleSummary sum = oracle_suite(rs.train.seed);
    std::printf("oracle: closed-form vs Neumann(64) max gap %.3g (tolerance 1e-8)\n",
                sum.neumann_gap);
    std::printf("oracle: pipeline vs scripted forward max gap %.3g (tolerance 1e-10)\n",
                sum.scripted_gap);
    return (sum.neumann_gap <= 1e-8 && sum.scripted_gap <= 1e-10) ? kExitOk : kExitCheckFailed;
}

} // namespace mapnet
