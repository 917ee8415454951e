#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mapnet/config.hpp"
#include "mapnet/model.hpp"
#include "mapnet/trainer.hpp"

namespace mapnet {

using ordered_json = nlohmann::ordered_json;

// ---- JSON reports -----------------------------------------------------------
//
// Report files must be byte-identical for identical config and seed, so they
// carry no wall-clock fields; timing goes to stdout.

inline ordered_json mode_to_json(const AblationMode& m) {
    return ordered_json{{"vp", m.vp}, {"sp", m.sp}, {"rg", m.rg}, {"aux", aux_name(m.aux)}};
}

inline ordered_json report_to_json(const EvalReport& r) {
    ordered_json j;
    j["accuracy"] = r.accuracy;
    j["ci95"] = r.ci95;
    j["episode_count"] = r.episode_count;
    j["lambda_mean_support"] = r.lambda_mean_support;
    j["lambda_mean_query"] = r.lambda_mean_query;
    j["mode"] = mode_to_json(r.mode);
    j["seed"] = r.seed;
    return j;
}

// Every key the config surface understands, with its resolved value; embedded
// in each report so a run can be reproduced from the report alone.
inline ordered_json resolved_config_json(const RunSettings& rs) {
    const TrainConfig& t = rs.train;
    const SynthSpec& s = rs.synth;
    ordered_json j;
    j["epochs"] = t.epochs;
    j["episodes_per_epoch"] = t.episodes_per_epoch;
    j["val_episodes"] = t.val_episodes;
    j["eval_episodes"] = t.eval_episodes;
    j["n_way"] = t.n_way;
    j["k_shot"] = t.k_shot;
    j["query_count"] = t.query_count;
    j["alpha"] = t.alpha;
    j["mu"] = t.mu;
    j["lr"] = t.lr;
    j["lr_decay"] = t.lr_decay;
    j["decay_every"] = t.decay_every;
    j["seed"] = t.seed;
    j["threads"] = t.threads;
    j["embed_dim"] = t.embed_dim;
    j["hidden_dim"] = t.hidden_dim;
    j["vp"] = t.mode.vp;
    j["sp"] = t.mode.sp;
    j["rg"] = t.mode.rg;
    j["aux"] = aux_name(t.mode.aux);
    j["synth_train_classes"] = s.train_classes;
    j["synth_val_classes"] = s.val_classes;
    j["synth_test_classes"] = s.test_classes;
    j["synth_samples_per_class"] = s.samples_per_class;
    j["synth_dv"] = s.d_v;
    j["synth_da"] = s.d_a;
    j["synth_noise"] = s.noise_scale;
    j["synth_coupling"] = s.coupling_scale;
    j["synth_center_jitter"] = s.center_jitter;
    j["synth_attr_sparsity"] = s.attr_sparsity;
    j["features_path"] = rs.features_path;
    j["attributes_path"] = rs.attributes_path;
    j["params_path"] = rs.params_path;
    j["lambda_shots"] = rs.lambda_shots;
    return j;
}

inline ordered_json eval_document(const RunSettings& rs, const EvalReport& rep) {
    ordered_json j;
    j["command"] = "eval";
    j["seed"] = rs.train.seed;
    j["config"] = resolved_config_json(rs);
    j["report"] = report_to_json(rep);
    return j;
}

inline ordered_json ablation_document(const RunSettings& rs,
                                      const std::vector<AblationRow>& rows) {
    ordered_json j;
    j["command"] = "ablate";
    j["seed"] = rs.train.seed;
    j["config"] = resolved_config_json(rs);
    ordered_json arr = ordered_json::array();
    for (const auto& row : rows) {
        ordered_json r = report_to_json(row.report);
        r["tag"] = row.mode.tag();
        r["best_epoch"] = row.training.best_epoch;
        r["best_val_accuracy"] = row.training.best_val_accuracy;
        arr.push_back(std::move(r));
    }
    j["rows"] = std::move(arr);
    return j;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out << "vp,sp,rg,aux,accuracy,ci95,episode_count,lambda_mean_support,lambda_mean_query\n";
    char buf[64];
    auto num = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (const auto& row : rows) {
        out << (row.mode.vp ? 1 : 0) << ',' << (row.mode.sp ? 1 : 0) << ','
            << (row.mode.rg ? 1 : 0) << ',' << aux_name(row.mode.aux) << ','
            << num(row.report.accuracy) << ',' << num(row.report.ci95) << ','
            << row.report.episode_count << ',' << num(row.report.lambda_mean_support) << ','
            << num(row.report.lambda_mean_query) << '\n';
    }
    return out.str();
}

inline ordered_json lambda_document(const RunSettings& rs, const std::vector<LambdaStat>& stats) {
    ordered_json j;
    j["command"] = "lambda";
    j["seed"] = rs.train.seed;
    j["config"] = resolved_config_json(rs);
    ordered_json arr = ordered_json::array();
    for (const auto& st : stats) {
        ordered_json r;
        r["k_shot"] = st.k_shot;
        r["lambda_mean_support"] = st.report.lambda_mean_support;
        r["lambda_mean_query"] = st.report.lambda_mean_query;
        // recorded, not asserted
        r["query_minus_support"] =
            st.report.lambda_mean_query - st.report.lambda_mean_support;
        r["accuracy"] = st.report.accuracy;
        r["ci95"] = st.report.ci95;
        arr.push_back(std::move(r));
    }
    j["shots"] = std::move(arr);
    return j;
}

inline std::string training_log_text(const TrainResult& tr) {
    std::string out;
    for (const EpochLog& e : tr.log) {
        out += format_epoch_log(e);
        out += '\n';
    }
    return out;
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(path + ": cannot open for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open");
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// ---- parameter persistence ---------------------------------------------------
//
// Headered binary file: magic "MAPNET01", then per component
// (u32 name length, name, u32 rows, u32 cols, row-major little-endian f64).

namespace detail {

inline void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline uint32_t get_u32(const std::string& s, size_t& pos, const std::string& path) {
    if (pos + 4 > s.size()) throw FormatError(path + ": truncated record");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
    pos += 4;
    return v;
}

inline double get_f64(const std::string& s, size_t& pos, const std::string& path) {
    if (pos + 8 > s.size()) throw FormatError(path + ": truncated values");
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
    pos += 8;
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

} // namespace detail

constexpr const char* kParamsMagic = "MAPNET01";

inline void save_params(const ModelParams& params, const std::string& path) {
    std::string out = kParamsMagic;
    params.for_each_param([&out](const char* name, const Matrix& m) {
        const std::string n = name;
        detail::put_u32(out, static_cast<uint32_t>(n.size()));
        out += n;
        detail::put_u32(out, static_cast<uint32_t>(m.rows()));
        detail::put_u32(out, static_cast<uint32_t>(m.cols()));
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < m.cols(); ++j) detail::put_f64(out, m(i, j));
    });
    write_file(path, out);
}

inline ModelParams load_params(const std::string& path) {
    const std::string s = read_file(path);
    if (s.size() < 8 || s.compare(0, 8, kParamsMagic) != 0)
        throw FormatError(path + ": bad magic, not a MAPNET01 parameter file");
    std::map<std::string, Matrix> rec;
    size_t pos = 8;
    while (pos < s.size()) {
        const uint32_t nlen = detail::get_u32(s, pos, path);
        if (pos + nlen > s.size()) throw FormatError(path + ": truncated name");
        std::string name = s.substr(pos, nlen);
        pos += nlen;
        const uint32_t rows = detail::get_u32(s, pos, path);
        const uint32_t cols = detail::get_u32(s, pos, path);
        if (rows == 0 || cols == 0 || rows > 1u << 20 || cols > 1u << 20)
            throw FormatError(path + ": implausible matrix shape for '" + name + "'");
        Matrix m(static_cast<int>(rows), static_cast<int>(cols));
        for (uint32_t i = 0; i < rows; ++i)
            for (uint32_t j = 0; j < cols; ++j)
                m(static_cast<int>(i), static_cast<int>(j)) = detail::get_f64(s, pos, path);
        if (!rec.emplace(std::move(name), std::move(m)).second)
            throw FormatError(path + ": duplicate component");
    }

    ModelParams p;
    p.h.identity_hook = false;
    bool missing = false;
    p.for_each_param([&](const char* name, Matrix& m) {
        auto it = rec.find(name);
        if (it == rec.end()) {
            missing = true;
            return;
        }
        m = it->second;
        rec.erase(it);
    });
    if (missing) throw FormatError(path + ": missing model component");
    if (!rec.empty())
        throw FormatError(path + ": unknown component '" + rec.begin()->first + "'");

    p.dims.d_v = p.f.w1.rows();
    p.dims.d_a = p.g.w1.rows();
    p.dims.hidden = p.f.w1.cols();
    p.dims.embed = p.f.w2.cols();
    if (p.g.w2.cols() != p.dims.embed || p.h.net.w1.rows() != p.dims.embed ||
        p.w.w1.rows() != 2 * p.dims.embed || p.w.w2.cols() != 1)
        throw FormatError(path + ": inconsistent component shapes");
    return p;
}

} // namespace mapnet
