#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mapnet/episodes.hpp"
#include "mapnet/trainer.hpp"

namespace mapnet {

// Fully-resolved run settings: every field has a documented default, a config
// file value, or an override. Config files are flat UTF-8 `key = value` lines
// with `#` comments.
struct RunSettings {
    TrainConfig train;
    SynthSpec synth;
    std::string features_path;   // with attributes_path: load instead of synth
    std::string attributes_path;
    std::string params_path;     // eval/lambda: trained parameters to load
    std::vector<int> lambda_shots = {1, 5};
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline long cfg_long(const std::string& v, const std::string& where) {
    long out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw InvalidConfigError(where + ": expected integer, got '" + v + "'");
    return out;
}

inline uint64_t cfg_u64(const std::string& v, const std::string& where) {
    uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw InvalidConfigError(where + ": expected unsigned integer, got '" + v + "'");
    return out;
}

inline double cfg_double(const std::string& v, const std::string& where) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw InvalidConfigError(where + ": expected number, got '" + v + "'");
    return out;
}

inline bool cfg_bool(const std::string& v, const std::string& where) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw InvalidConfigError(where + ": expected true/false, got '" + v + "'");
}

inline std::vector<int> cfg_int_list(const std::string& v, const std::string& where) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(static_cast<int>(cfg_long(item, where)));
    }
    if (out.empty()) throw InvalidConfigError(where + ": empty list");
    return out;
}

inline void check_range(bool ok, const std::string& where, const std::string& what) {
    if (!ok) throw InvalidConfigError(where + ": value out of range (" + what + ")");
}

// Applies one key; `where` names the key and its source line for diagnostics.
inline void apply_key(RunSettings& rs, const std::string& key, const std::string& value,
                      const std::string& where) {
    TrainConfig& t = rs.train;
    SynthSpec& sy = rs.synth;
    auto as_int = [&](long lo, long hi) {
        long v = cfg_long(value, where);
        check_range(v >= lo && v <= hi, where,
                    "expected [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
        return static_cast<int>(v);
    };

    if (key == "epochs") t.epochs = as_int(0, 1000000);
    else if (key == "episodes_per_epoch") t.episodes_per_epoch = as_int(1, 10000000);
    else if (key == "val_episodes") t.val_episodes = as_int(1, 10000000);
    else if (key == "eval_episodes") t.eval_episodes = as_int(1, 10000000);
    else if (key == "n_way") t.n_way = as_int(2, 10000);
    else if (key == "k_shot") t.k_shot = as_int(1, 10000);
    else if (key == "query_count") t.query_count = as_int(1, 1000000);
    else if (key == "alpha") {
        t.alpha = cfg_double(value, where);
        check_range(t.alpha > 0.0 && t.alpha < 1.0, where, "alpha in (0,1)");
    } else if (key == "mu") {
        t.mu = cfg_double(value, where);
        check_range(t.mu >= 0.0, where, "mu >= 0");
    } else if (key == "lr") {
        t.lr = cfg_double(value, where);
        check_range(t.lr > 0.0, where, "lr > 0");
    } else if (key == "lr_decay") {
        t.lr_decay = cfg_double(value, where);
        check_range(t.lr_decay > 0.0 && t.lr_decay <= 1.0, where, "lr_decay in (0,1]");
    } else if (key == "decay_every") t.decay_every = as_int(1, 1000000);
    else if (key == "seed") t.seed = cfg_u64(value, where);
    else if (key == "threads") t.threads = as_int(0, 4096);
    else if (key == "embed_dim") t.embed_dim = as_int(1, 65536);
    else if (key == "hidden_dim") t.hidden_dim = as_int(1, 65536);
    else if (key == "vp") t.mode.vp = cfg_bool(value, where);
    else if (key == "sp") t.mode.sp = cfg_bool(value, where);
    else if (key == "rg") t.mode.rg = cfg_bool(value, where);
    else if (key == "aux") {
        if (value == "none") t.mode.aux = AuxConstraint::None;
        else if (value == "instance") t.mode.aux = AuxConstraint::Instance;
        else if (value == "relation") t.mode.aux = AuxConstraint::Relation;
        else
            throw InvalidConfigError(where + ": aux must be none|instance|relation, got '" +
                                     value + "'");
    } else if (key == "synth_train_classes") sy.train_classes = as_int(0, 1000000);
    else if (key == "synth_val_classes") sy.val_classes = as_int(0, 1000000);
    else if (key == "synth_test_classes") sy.test_classes = as_int(0, 1000000);
    else if (key == "synth_samples_per_class") sy.samples_per_class = as_int(1, 1000000);
    else if (key == "synth_dv") sy.d_v = as_int(1, 65536);
    else if (key == "synth_da") sy.d_a = as_int(1, 65536);
    else if (key == "synth_noise") {
        sy.noise_scale = cfg_double(value, where);
        check_range(sy.noise_scale > 0.0, where, "synth_noise > 0");
    } else if (key == "synth_coupling") {
        sy.coupling_scale = cfg_double(value, where);
        check_range(sy.coupling_scale >= 0.0, where, "synth_coupling >= 0");
    } else if (key == "synth_center_jitter") {
        sy.center_jitter = cfg_double(value, where);
        check_range(sy.center_jitter >= 0.0, where, "synth_center_jitter >= 0");
    } else if (key == "synth_attr_sparsity") {
        sy.attr_sparsity = cfg_double(value, where);
        check_range(sy.attr_sparsity >= 0.0 && sy.attr_sparsity < 1.0, where,
                    "synth_attr_sparsity in [0,1)");
    } else if (key == "features_path") rs.features_path = value;
    else if (key == "attributes_path") rs.attributes_path = value;
    else if (key == "params_path") rs.params_path = value;
    else if (key == "lambda_shots") rs.lambda_shots = cfg_int_list(value, where);
    else
        throw InvalidConfigError(where + ": unknown key '" + key + "'");
}

} // namespace detail

// Parses a config text; `source` names it in diagnostics. Unknown keys are
// rejected, not ignored.
inline RunSettings parse_config_text(const std::string& text, const std::string& source,
                                     RunSettings rs = {}) {
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        const std::string where = source + ":" + std::to_string(lineno);
        if (eq == std::string::npos)
            throw InvalidConfigError(where + ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw InvalidConfigError(where + ": empty key");
        detail::apply_key(rs, key, value, where + " key '" + key + "'");
    }
    return rs;
}

// File + repeatable `key=value` overrides (overrides win).
inline RunSettings parse_config(const std::string& path,
                                const std::vector<std::string>& overrides) {
    RunSettings rs;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw InvalidConfigError(path + ": cannot open config file");
        std::stringstream buf;
        buf << in.rdbuf();
        rs = parse_config_text(buf.str(), path);
    }
    for (const std::string& ov : overrides) {
        const size_t eq = ov.find('=');
        if (eq == std::string::npos)
            throw InvalidConfigError("override '" + ov + "': expected key=value");
        const std::string key = detail::trim(ov.substr(0, eq));
        const std::string value = detail::trim(ov.substr(eq + 1));
        detail::apply_key(rs, key, value, "override key '" + key + "'");
    }
    return rs;
}

} // namespace mapnet
