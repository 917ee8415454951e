#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mapnet/episodes.hpp"
#include "mapnet/model.hpp"

namespace mapnet {

struct TrainConfig {
    int epochs = 20;
    int episodes_per_epoch = 100;
    int val_episodes = 60;
    int n_way = 5;
    int k_shot = 1;
    int query_count = 15;
    double alpha = 0.2;
    double mu = 0.1;
    double lr = 1e-3;
    double lr_decay = 0.1;
    int decay_every = 8;
    uint64_t seed = 1;
    AblationMode mode;
    int embed_dim = 16;
    int hidden_dim = 64;
    int eval_episodes = 1000;
    int threads = 0; // 0 = deterministic single-threaded

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidConfigError("alpha must be in (0,1)");
        if (lr <= 0.0) throw InvalidConfigError("lr must be > 0");
        if (!(lr_decay > 0.0 && lr_decay <= 1.0))
            throw InvalidConfigError("lr_decay must be in (0,1]");
        if (epochs < 0 || episodes_per_epoch < 1 || val_episodes < 1 || eval_episodes < 1)
            throw InvalidConfigError("episode counts must be positive");
        if (decay_every < 1) throw InvalidConfigError("decay_every must be >= 1");
        if (n_way < 2 || k_shot < 1 || query_count < 1)
            throw InvalidConfigError("episode shape out of range");
        if (mu < 0.0) throw InvalidConfigError("mu must be >= 0");
        if (embed_dim < 1 || hidden_dim < 1) throw InvalidConfigError("model dims out of range");
        if (threads < 0) throw InvalidConfigError("threads must be >= 0");
        mode.validate();
    }
};

struct EvalReport {
    double accuracy = 0.0; // percent
    double ci95 = 0.0;     // percent half-width
    int episode_count = 0;
    double lambda_mean_support = 0.0;
    double lambda_mean_query = 0.0;
    AblationMode mode;
    uint64_t seed = 0;
    double wall_time = 0.0; // seconds; reported on stdout, never in files
};

// 1.96 * population std / sqrt(n), exactly as reported.
inline double ci95_half_width(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= n;
    return 1.96 * std::sqrt(var) / std::sqrt(n);
}

// ---- optimizer ----------------------------------------------------------

struct AdamState {
    std::vector<Matrix> m, v; // aligned with ModelParams::for_each_param order
    long step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

// Standard adaptive-moment update with bias correction. Gradients are given
// in parameter enumeration order.
inline void optimizer_step(ModelParams& params, const std::vector<Matrix>& grads,
                           AdamState& state, double lr) {
    if (state.m.empty()) {
        params.for_each_param([&state](const char*, const Matrix& p) {
            state.m.emplace_back(p.rows(), p.cols());
            state.v.emplace_back(p.rows(), p.cols());
        });
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    size_t k = 0;
    params.for_each_param([&](const char* name, Matrix& p) {
        if (k >= grads.size()) throw InvalidInputError("optimizer_step: gradient list too short");
        const Matrix& g = grads[k];
        if (!g.same_shape(p)) throw InvalidInputError("optimizer_step: gradient shape mismatch");
        if (!g.is_finite())
            throw TrainingDivergedError("optimizer_step: non-finite gradient", name);
        Matrix& m = state.m[k];
        Matrix& v = state.v[k];
        for (int i = 0; i < p.rows(); ++i)
            for (int j = 0; j < p.cols(); ++j) {
                const double gij = g(i, j);
                m(i, j) = state.beta1 * m(i, j) + (1.0 - state.beta1) * gij;
                v(i, j) = state.beta2 * v(i, j) + (1.0 - state.beta2) * gij * gij;
                const double mhat = m(i, j) / bc1;
                const double vhat = v(i, j) / bc2;
                p(i, j) -= lr * mhat / (std::sqrt(vhat) + state.eps);
            }
        ++k;
    });
}

// ---- evaluation ---------------------------------------------------------

inline double episode_accuracy(const ForwardOutput& out, const Episode& ep) {
    const auto& labels = ep.query_labels_for_scoring();
    int correct = 0;
    for (int q = 0; q < out.probs.rows(); ++q) {
        int best = 0;
        for (int c = 1; c < out.probs.cols(); ++c)
            if (out.probs(q, c) > out.probs(q, best)) best = c;
        if (best == labels[q]) ++correct;
    }
    return 100.0 * correct / out.probs.rows();
}

namespace detail {

struct EpisodeStats {
    double accuracy = 0.0;
    double lambda_sup_sum = 0.0;
    long lambda_sup_n = 0;
    double lambda_q_sum = 0.0;
    long lambda_q_n = 0;
};

inline EpisodeStats eval_one(const ModelParams& params, const Dataset& ds, Split split,
                             const TrainConfig& cfg, Rng rng) {
    Episode ep = sample_episode(ds, split, cfg.n_way, cfg.k_shot, cfg.query_count, rng);
    ForwardOutput out = map_forward(ep, params, cfg.mode, cfg.alpha, cfg.mu);
    EpisodeStats st;
    st.accuracy = episode_accuracy(out, ep);
    for (double l : out.lambda_support) {
        st.lambda_sup_sum += l;
        ++st.lambda_sup_n;
    }
    for (double l : out.lambda_query) {
        st.lambda_q_sum += l;
        ++st.lambda_q_n;
    }
    return st;
}

constexpr uint64_t kTrainStream = 0x747261696eULL;
constexpr uint64_t kValStream = 0x76616cULL;
constexpr uint64_t kEvalStream = 0x6576616cULL;

} // namespace detail

// Episode i always draws from stream fork(seed_stream, i), so the parallel
// fan-out reproduces the single-threaded report exactly: work is indexed, the
// reduction runs in index order after the join.
inline EvalReport evaluate(const ModelParams& params, const Dataset& ds, Split split,
                           const TrainConfig& cfg, int episode_count) {
    const auto t0 = std::chrono::steady_clock::now();
    if (episode_count < 1) throw InvalidConfigError("evaluate: episode_count must be >= 1");
    if (ds.classes_of(split).empty())
        throw InvalidConfigError("evaluate: split has no classes");

    const Rng base = Rng(cfg.seed).fork(detail::kEvalStream);
    std::vector<detail::EpisodeStats> stats(episode_count);

    auto worker = [&](int start, int stride) {
        for (int i = start; i < episode_count; i += stride)
            stats[i] = detail::eval_one(params, ds, split, cfg, base.fork(i));
    };

    const int threads = std::min(cfg.threads, episode_count);
    if (threads <= 1) {
        worker(0, 1);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(threads);
        pool.reserve(threads);
        for (int w = 0; w < threads; ++w)
            pool.emplace_back([&, w]() {
                try {
                    worker(w, threads);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    EvalReport rep;
    rep.episode_count = episode_count;
    rep.mode = cfg.mode;
    rep.seed = cfg.seed;
    std::vector<double> accs(episode_count);
    double ls = 0.0, lq = 0.0;
    long lsn = 0, lqn = 0;
    for (int i = 0; i < episode_count; ++i) {
        accs[i] = stats[i].accuracy;
        ls += stats[i].lambda_sup_sum;
        lsn += stats[i].lambda_sup_n;
        lq += stats[i].lambda_q_sum;
        lqn += stats[i].lambda_q_n;
    }
    double mean = 0.0;
    for (double a : accs) mean += a;
    rep.accuracy = mean / episode_count;
    rep.ci95 = ci95_half_width(accs);
    rep.lambda_mean_support = lsn > 0 ? ls / lsn : 0.0;
    rep.lambda_mean_query = lqn > 0 ? lq / lqn : 0.0;
    rep.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

// ---- training -------------------------------------------------------------

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_acc = 0.0;
    double lr = 0.0;
};

inline std::string format_epoch_log(const EpochLog& e) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "epoch %d train_loss %.6g val_acc %.6g lr %.6g", e.epoch,
                  e.train_loss, e.val_acc, e.lr);
    return buf;
}

struct TrainResult {
    ModelParams params; // validation-best checkpoint
    std::vector<EpochLog> log;
    double best_val_accuracy = 0.0;
    int best_epoch = 0;
};

inline std::vector<Var> param_var_list(const ParamVars& pv) {
    return {pv.f.w1, pv.f.b1, pv.f.w2, pv.f.b2, pv.g.w1, pv.g.b1, pv.g.w2, pv.g.b2,
            pv.h.w1, pv.h.b1, pv.h.w2, pv.h.b2, pv.w.w1, pv.w.b1, pv.w.w2, pv.w.b2};
}

// Episodic meta-training: one optimizer step per episode, validation after
// every epoch on a fixed episode set, returns the parameters with the best
// validation accuracy (ties broken by earliest epoch).
inline TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    ModelDims dims{ds.d_v(), ds.d_a(), cfg.embed_dim, cfg.hidden_dim};
    ModelParams params = ModelParams::init(dims, cfg.seed);

    TrainResult res;
    res.params = params;
    if (cfg.epochs == 0) return res;

    Rng train_rng = Rng(cfg.seed).fork(detail::kTrainStream);
    const Rng val_base = Rng(cfg.seed).fork(detail::kValStream);
    AdamState adam;
    double best_acc = -1.0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr =
            cfg.lr * std::pow(cfg.lr_decay, static_cast<double>((epoch - 1) / cfg.decay_every));
        double loss_sum = 0.0;
        for (int e = 0; e < cfg.episodes_per_epoch; ++e) {
            Episode ep = sample_episode(ds, Split::Train, cfg.n_way, cfg.k_shot,
                                        cfg.query_count, train_rng);
            Tape tape;
            ParamVars pv = params_on_tape(tape, params, true);
            TapeForward fwd = map_forward(tape, ep, pv, params.dims, cfg.mode, cfg.alpha, cfg.mu);
            tape.backward(fwd.loss);
            std::vector<Matrix> grads;
            grads.reserve(16);
            for (Var v : param_var_list(pv)) grads.push_back(tape.grad(v));
            optimizer_step(params, grads, adam, lr);
            loss_sum += fwd.out.loss_total;
        }

        double val_sum = 0.0;
        for (int i = 0; i < cfg.val_episodes; ++i)
            val_sum += detail::eval_one(params, ds, Split::Val, cfg, val_base.fork(i)).accuracy;
        const double val_acc = val_sum / cfg.val_episodes;

        res.log.push_back({epoch, loss_sum / cfg.episodes_per_epoch, val_acc, lr});
        if (val_acc > best_acc) {
            best_acc = val_acc;
            res.params = params;
            res.best_epoch = epoch;
            res.best_val_accuracy = val_acc;
        }
    }
    return res;
}

// ---- ablation harness -------------------------------------------------------

struct AblationRow {
    AblationMode mode;
    EvalReport report;
    TrainResult training;
};

// Trains and evaluates one model per mode row with shared seed and data.
inline std::vector<AblationRow> ablation_run(const Dataset& ds, const TrainConfig& base_cfg) {
    std::vector<AblationRow> rows;
    for (const AblationMode& mode : ablation_modes()) {
        TrainConfig cfg = base_cfg;
        cfg.mode = mode;
        AblationRow row;
        row.mode = mode;
        row.training = train(ds, cfg);
        row.report = evaluate(row.training.params, ds, Split::Test, cfg, cfg.eval_episodes);
        rows.push_back(std::move(row));
    }
    return rows;
}

struct LambdaStat {
    int k_shot = 0;
    EvalReport report;
};

// Trains per shot count and reports the mean fusion weight for support and
// query samples separately. Diagnostic only; trends are recorded, not judged.
inline std::vector<LambdaStat> lambda_sweep(const Dataset& ds, const TrainConfig& base_cfg,
                                            const std::vector<int>& shot_list) {
    if (shot_list.empty()) throw InvalidConfigError("lambda_sweep: empty shot list");
    std::vector<LambdaStat> out;
    for (int k : shot_list) {
        TrainConfig cfg = base_cfg;
        cfg.k_shot = k;
        TrainResult tr = train(ds, cfg);
        LambdaStat stat;
        stat.k_shot = k;
        stat.report = evaluate(tr.params, ds, Split::Test, cfg, cfg.eval_episodes);
        out.push_back(stat);
    }
    return out;
}

} // namespace mapnet
