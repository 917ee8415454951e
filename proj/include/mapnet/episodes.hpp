#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mapnet/linalg.hpp"
#include "mapnet/matrix.hpp"
#include "mapnet/rng.hpp"

namespace mapnet {

enum class Split { Train, Val, Test };

inline const char* split_name(Split s) {
    switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    }
    return "?";
}

// Feature vectors with per-class semantic attributes and a class-level split.
struct Dataset {
    Matrix features;               // sample_count x d_v
    std::vector<int> labels;       // dense class id per sample
    Matrix class_attributes;       // class_count x d_a
    std::vector<Split> class_split;

    int sample_count() const { return features.rows(); }
    int class_count() const { return class_attributes.rows(); }
    int d_v() const { return features.cols(); }
    int d_a() const { return class_attributes.cols(); }

    std::vector<int> classes_of(Split s) const {
        std::vector<int> out;
        for (int c = 0; c < class_count(); ++c)
            if (class_split[c] == s) out.push_back(c);
        return out;
    }

    std::vector<std::vector<int>> samples_by_class() const {
        std::vector<std::vector<int>> by_class(class_count());
        for (int i = 0; i < sample_count(); ++i) by_class[labels[i]].push_back(i);
        return by_class;
    }

    void validate() const {
        if (static_cast<int>(labels.size()) != sample_count())
            throw InvalidInputError("dataset: label count mismatch");
        if (static_cast<int>(class_split.size()) != class_count())
            throw InvalidInputError("dataset: split count mismatch");
        for (int l : labels)
            if (l < 0 || l >= class_count())
                throw InvalidInputError("dataset: sample references class " + std::to_string(l) +
                                        " with no attribute vector");
    }
};

// One N-way K-shot task. Query attributes are never stored here, and query
// labels sit behind a scoring-only accessor: the forward pass receives just
// the query features.
class Episode {
public:
    Matrix support_features;   // NK x d_v
    Matrix support_attributes; // NK x d_a
    std::vector<int> support_labels;
    Matrix query_features;     // T x d_v
    int n_way = 0;
    int k_shot = 0;

    Episode() = default;
    Episode(Matrix sf, Matrix sa, std::vector<int> sl, Matrix qf, std::vector<int> ql, int n,
            int k)
        : support_features(std::move(sf)), support_attributes(std::move(sa)),
          support_labels(std::move(sl)), query_features(std::move(qf)), n_way(n), k_shot(k),
          query_labels_(std::move(ql)) {}

    int support_count() const { return support_features.rows(); }
    int query_count() const { return query_features.rows(); }

    // For loss computation and accuracy scoring only.
    const std::vector<int>& query_labels_for_scoring() const { return query_labels_; }

private:
    std::vector<int> query_labels_;
};

// Synthetic paired-modality task generator. Attributes determine visual class
// centers through a fixed random linear coupling, so the semantic modality
// carries real class information that propagation can exploit.
struct SynthSpec {
    int train_classes = 50;
    int val_classes = 10;
    int test_classes = 20;
    int samples_per_class = 40;
    int d_v = 32;
    int d_a = 16;
    double noise_scale = 1.2;      // per-sample visual noise
    double coupling_scale = 1.8;   // strength of the attribute-to-visual map
    double center_jitter = 0.5;    // class perturbation off the coupled center
    double attr_sparsity = 0.5;    // probability a given attribute dim is zero

    int total_classes() const { return train_classes + val_classes + test_classes; }

    void validate() const {
        if (total_classes() < 1) throw InvalidConfigError("synth: no classes configured");
        if (samples_per_class < 1) throw InvalidConfigError("synth: samples_per_class < 1");
        if (d_v < 1 || d_a < 1) throw InvalidConfigError("synth: dimensions must be positive");
        if (noise_scale <= 0.0) throw InvalidConfigError("synth: noise_scale must be > 0");
        if (attr_sparsity < 0.0 || attr_sparsity >= 1.0)
            throw InvalidConfigError("synth: attr_sparsity must be in [0,1)");
    }
};

inline Dataset synth_generate(const SynthSpec& spec, uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    const int classes = spec.total_classes();

    Dataset ds;
    ds.class_attributes = Matrix(classes, spec.d_a);
    ds.class_split.resize(classes);
    for (int c = 0; c < classes; ++c) {
        ds.class_split[c] = c < spec.train_classes                      ? Split::Train
                            : c < spec.train_classes + spec.val_classes ? Split::Val
                                                                        : Split::Test;
        for (int j = 0; j < spec.d_a; ++j) {
            const bool zero = rng.uniform() < spec.attr_sparsity;
            ds.class_attributes(c, j) = zero ? 0.0 : rng.uniform();
        }
    }

    // Fixed coupling map; scaled so center gaps stay O(1) in d_a.
    Matrix coupling(spec.d_v, spec.d_a);
    const double cscale = spec.coupling_scale / std::sqrt(static_cast<double>(spec.d_a));
    for (int i = 0; i < spec.d_v; ++i)
        for (int j = 0; j < spec.d_a; ++j) coupling(i, j) = cscale * rng.normal();
    {
        // full-rank guard on the coupling map
        Matrix gram = matmul(transpose(coupling), coupling);
        try {
            detail::lu_factor(gram);
        } catch (const SingularMatrixError&) {
            throw InvalidConfigError("synth: coupling map is rank-deficient");
        }
    }

    ds.features = Matrix(classes * spec.samples_per_class, spec.d_v);
    ds.labels.resize(static_cast<size_t>(classes) * spec.samples_per_class);
    int row = 0;
    for (int c = 0; c < classes; ++c) {
        std::vector<double> center(spec.d_v, 0.0);
        for (int i = 0; i < spec.d_v; ++i) {
            double v = 0.0;
            for (int j = 0; j < spec.d_a; ++j) v += coupling(i, j) * ds.class_attributes(c, j);
            center[i] = v + spec.center_jitter * rng.normal();
        }
        for (int s = 0; s < spec.samples_per_class; ++s, ++row) {
            ds.labels[row] = c;
            for (int i = 0; i < spec.d_v; ++i)
                ds.features(row, i) = center[i] + spec.noise_scale * rng.normal();
        }
    }
    ds.validate();
    return ds;
}

// Uniform class and sample selection without replacement; labels remapped to
// [0, N) in the order classes were drawn.
inline Episode sample_episode(const Dataset& ds, Split split, int n_way, int k_shot,
                              int query_count, Rng& rng) {
    if (n_way < 2) throw InvalidConfigError("sample_episode: n_way must be >= 2");
    if (k_shot < 1 || query_count < 1)
        throw InvalidConfigError("sample_episode: k_shot and query_count must be >= 1");
    if (query_count % n_way != 0)
        throw InvalidConfigError("sample_episode: query_count " + std::to_string(query_count) +
                                 " not divisible by n_way " + std::to_string(n_way));
    const std::vector<int> classes = ds.classes_of(split);
    if (static_cast<int>(classes.size()) < n_way)
        throw InvalidConfigError("sample_episode: split " + std::string(split_name(split)) +
                                 " has " + std::to_string(classes.size()) + " classes, need " +
                                 std::to_string(n_way));
    const int per_class_q = query_count / n_way;
    const int need = k_shot + per_class_q;

    const auto by_class = ds.samples_by_class();
    const std::vector<int> pick = rng.sample_without_replacement(
        static_cast<int>(classes.size()), n_way);

    Matrix sf(n_way * k_shot, ds.d_v());
    Matrix sa(n_way * k_shot, ds.d_a());
    std::vector<int> sl(static_cast<size_t>(n_way) * k_shot);
    Matrix qf(query_count, ds.d_v());
    std::vector<int> ql(query_count);

    for (int w = 0; w < n_way; ++w) {
        const int cls = classes[pick[w]];
        const auto& pool = by_class[cls];
        if (static_cast<int>(pool.size()) < need)
            throw InvalidConfigError("sample_episode: class " + std::to_string(cls) + " has " +
                                     std::to_string(pool.size()) + " samples, need " +
                                     std::to_string(need));
        const std::vector<int> chosen =
            rng.sample_without_replacement(static_cast<int>(pool.size()), need);
        for (int s = 0; s < k_shot; ++s) {
            const int srow = pool[chosen[s]];
            const int drow = w * k_shot + s;
            for (int j = 0; j < ds.d_v(); ++j) sf(drow, j) = ds.features(srow, j);
            for (int j = 0; j < ds.d_a(); ++j) sa(drow, j) = ds.class_attributes(cls, j);
            sl[drow] = w;
        }
        for (int q = 0; q < per_class_q; ++q) {
            const int srow = pool[chosen[k_shot + q]];
            const int drow = w * per_class_q + q;
            for (int j = 0; j < ds.d_v(); ++j) qf(drow, j) = ds.features(srow, j);
            ql[drow] = w;
        }
    }
    return Episode(std::move(sf), std::move(sa), std::move(sl), std::move(qf), std::move(ql),
                   n_way, k_shot);
}

// ---- file ingestion ---------------------------------------------------------
//
// Features file:   "#features <sample_count> <d_v>" then per line
//                  "sample_id class_id v_1 ... v_{d_v}".
// Attributes file: "#attributes <class_count> <d_a>" then per line
//                  "class_id split a_1 ... a_{d_a}" with split in {train,val,test}.

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline double parse_double(const std::string& tok, const std::string& where) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size())
        throw FormatError(where + ": bad number '" + tok + "'");
    return v;
}

inline long parse_long(const std::string& tok, const std::string& where) {
    long v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size())
        throw FormatError(where + ": bad integer '" + tok + "'");
    return v;
}

inline std::string loc(const std::string& path, int line) {
    return path + ":" + std::to_string(line);
}

} // namespace detail

inline Dataset load_embeddings(const std::string& features_path,
                               const std::string& attributes_path) {
    using detail::loc;
    Dataset ds;
    std::map<long, int> class_index; // file class id -> dense id

    {
        std::ifstream in(attributes_path);
        if (!in) throw FormatError(attributes_path + ": cannot open");
        std::string line;
        int lineno = 1;
        if (!std::getline(in, line)) throw FormatError(loc(attributes_path, 1) + ": empty file");
        auto head = detail::split_fields(line);
        if (head.size() != 3 || head[0] != "#attributes")
            throw FormatError(loc(attributes_path, 1) + ": malformed header, expected "
                                                        "'#attributes <class_count> <d_a>'");
        const long count = detail::parse_long(head[1], loc(attributes_path, 1));
        const long d_a = detail::parse_long(head[2], loc(attributes_path, 1));
        if (count < 1 || d_a < 1)
            throw FormatError(loc(attributes_path, 1) + ": non-positive header counts");

        ds.class_attributes = Matrix(static_cast<int>(count), static_cast<int>(d_a));
        ds.class_split.resize(count);
        std::vector<long> original_ids;
        int seen = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto f = detail::split_fields(line);
            if (f.empty()) continue;
            if (seen >= count)
                throw FormatError(loc(attributes_path, lineno) +
                                  ": more attribute rows than declared " + std::to_string(count));
            if (static_cast<long>(f.size()) != 2 + d_a)
                throw FormatError(loc(attributes_path, lineno) + ": expected " +
                                  std::to_string(2 + d_a) + " fields, got " +
                                  std::to_string(f.size()));
            const long cid = detail::parse_long(f[0], loc(attributes_path, lineno));
            if (class_index.count(cid))
                throw FormatError(loc(attributes_path, lineno) + ": duplicate class id " +
                                  std::to_string(cid));
            Split sp;
            if (f[1] == "train") sp = Split::Train;
            else if (f[1] == "val") sp = Split::Val;
            else if (f[1] == "test") sp = Split::Test;
            else
                throw FormatError(loc(attributes_path, lineno) + ": unknown split '" + f[1] +
                                  "'");
            class_index[cid] = seen;
            original_ids.push_back(cid);
            ds.class_split[seen] = sp;
            for (long j = 0; j < d_a; ++j)
                ds.class_attributes(seen, static_cast<int>(j)) =
                    detail::parse_double(f[2 + j], loc(attributes_path, lineno));
            ++seen;
        }
        if (seen != count)
            throw FormatError(attributes_path + ": header declares " + std::to_string(count) +
                              " classes but file has " + std::to_string(seen));
    }

    {
        std::ifstream in(features_path);
        if (!in) throw FormatError(features_path + ": cannot open");
        std::string line;
        int lineno = 1;
        if (!std::getline(in, line)) throw FormatError(loc(features_path, 1) + ": empty file");
        auto head = detail::split_fields(line);
        if (head.size() != 3 || head[0] != "#features")
            throw FormatError(loc(features_path, 1) + ": malformed header, expected "
                                                      "'#features <sample_count> <d_v>'");
        const long count = detail::parse_long(head[1], loc(features_path, 1));
        const long d_v = detail::parse_long(head[2], loc(features_path, 1));
        if (count < 1 || d_v < 1)
            throw FormatError(loc(features_path, 1) + ": non-positive header counts");

        ds.features = Matrix(static_cast<int>(count), static_cast<int>(d_v));
        ds.labels.resize(count);
        int seen = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto f = detail::split_fields(line);
            if (f.empty()) continue;
            if (seen >= count)
                throw FormatError(loc(features_path, lineno) + ": more feature rows than declared " +
                                  std::to_string(count));
            if (static_cast<long>(f.size()) != 2 + d_v)
                throw FormatError(loc(features_path, lineno) + ": expected " +
                                  std::to_string(2 + d_v) + " fields, got " +
                                  std::to_string(f.size()));
            const long cid = detail::parse_long(f[1], loc(features_path, lineno));
            auto it = class_index.find(cid);
            if (it == class_index.end())
                throw FormatError(loc(features_path, lineno) + ": class id " +
                                  std::to_string(cid) + " not present in attribute file");
            ds.labels[seen] = it->second;
            for (long j = 0; j < d_v; ++j)
                ds.features(seen, static_cast<int>(j)) =
                    detail::parse_double(f[2 + j], loc(features_path, lineno));
            ++seen;
        }
        if (seen != count)
            throw FormatError(features_path + ": header declares " + std::to_string(count) +
                              " samples but file has " + std::to_string(seen));
    }

    ds.validate();
    return ds;
}

// Writes with %.17g so a reload reproduces every double bit-exactly.
inline void save_dataset(const Dataset& ds, const std::string& features_path,
                         const std::string& attributes_path) {
    char buf[64];
    auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    {
        std::ofstream out(attributes_path, std::ios::binary);
        if (!out) throw FormatError(attributes_path + ": cannot open for writing");
        out << "#attributes " << ds.class_count() << " " << ds.d_a() << "\n";
        for (int c = 0; c < ds.class_count(); ++c) {
            out << c << " " << split_name(ds.class_split[c]);
            for (int j = 0; j < ds.d_a(); ++j) out << " " << fmt(ds.class_attributes(c, j));
            out << "\n";
        }
    }
    {
        std::ofstream out(features_path, std::ios::binary);
        if (!out) throw FormatError(features_path + ": cannot open for writing");
        out << "#features " << ds.sample_count() << " " << ds.d_v() << "\n";
        for (int i = 0; i < ds.sample_count(); ++i) {
            out << i << " " << ds.labels[i];
            for (int j = 0; j < ds.d_v(); ++j) out << " " << fmt(ds.features(i, j));
            out << "\n";
        }
    }
}

} // namespace mapnet
