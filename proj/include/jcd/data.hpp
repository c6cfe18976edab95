#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "jcd/errors.hpp"
#include "jcd/losses.hpp"
#include "jcd/model.hpp"
#include "jcd/rng.hpp"
#include "jcd/tensor.hpp"

// Dataset plumbing: the snippet-feature binary format, the manifest schema,
// train-time snippet sampling, batch assembly with designated same-class
// pairs, and the synthetic conjoint-action generator.
//
// Feature file layout (all integers little-endian):
//   offset  0: magic "JCDF"
//   offset  4: version, u16 (currently 1)
//   offset  6: T, u32        (snippet count, > 0)
//   offset 10: F2, u32       (feature width, > 0)
//   offset 14: payload, T*F2 float32, row-major (snippet-major)

namespace jcd {

constexpr uint16_t kFeatureFileVersion = 1;

struct FeatureMatrix {
    int t_len = 0;
    int f2 = 0;
    std::vector<float> data; // row-major [t_len x f2]

    float at(int t, int f) const { return data[static_cast<size_t>(t) * f2 + f]; }
};

template <typename Real>
Tensor<Real> to_tensor(const FeatureMatrix& m) {
    std::vector<Real> v(m.data.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<Real>(m.data[i]);
    return Tensor<Real>({m.t_len, m.f2}, std::move(v));
}

namespace detail {

inline void put_u16(std::string& buf, uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline uint16_t get_u16(const unsigned char* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

inline uint32_t get_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

} // namespace detail

inline void write_feature_file(const std::string& path, const FeatureMatrix& m) {
    if (m.t_len <= 0 || m.f2 <= 0 ||
        m.data.size() != static_cast<size_t>(m.t_len) * static_cast<size_t>(m.f2))
        throw ArgError("feature file: inconsistent matrix dims");
    std::string header = "JCDF";
    detail::put_u16(header, kFeatureFileVersion);
    detail::put_u32(header, static_cast<uint32_t>(m.t_len));
    detail::put_u32(header, static_cast<uint32_t>(m.f2));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("feature file: cannot open for writing: " + path);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(m.data.data()),
              static_cast<std::streamsize>(m.data.size() * sizeof(float)));
    if (!out) throw FormatError("feature file: write failed: " + path);
}

inline FeatureMatrix load_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("feature file: cannot open: " + path);
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data());

    if (raw.size() < 14)
        throw FormatError("feature file: header truncated at byte offset " + std::to_string(raw.size()) +
                          " (need 14 bytes): " + path);
    if (std::memcmp(p, "JCDF", 4) != 0)
        throw FormatError("feature file: bad magic at byte offset 0: " + path);
    const uint16_t version = detail::get_u16(p + 4);
    if (version != kFeatureFileVersion)
        throw FormatError("feature file: unsupported version " + std::to_string(version) +
                          " at byte offset 4: " + path);
    const uint32_t t_len = detail::get_u32(p + 6);
    const uint32_t f2 = detail::get_u32(p + 10);
    if (t_len == 0 || f2 == 0)
        throw FormatError("feature file: degenerate dims T=" + std::to_string(t_len) +
                          " F2=" + std::to_string(f2) + " at byte offset 6: " + path);
    const size_t expected = static_cast<size_t>(t_len) * f2 * sizeof(float);
    const size_t actual = raw.size() - 14;
    if (actual != expected)
        throw FormatError("feature file: payload length mismatch, expected " + std::to_string(expected) +
                          " bytes, got " + std::to_string(actual) + " (payload at byte offset 14): " + path);

    FeatureMatrix m;
    m.t_len = static_cast<int>(t_len);
    m.f2 = static_cast<int>(f2);
    m.data.resize(static_cast<size_t>(t_len) * f2);
    std::memcpy(m.data.data(), p + 14, expected);
    for (size_t i = 0; i < m.data.size(); ++i)
        if (!std::isfinite(m.data[i]))
            throw DataError("feature file: non-finite value at element " + std::to_string(i) + ": " + path);
    return m;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct GtSegment {
    std::string video_id;
    double t_start = 0;
    double t_end = 0;
    int class_index = -1;
};

struct VideoRecord {
    std::string video_id;
    std::string feature_path; // relative to the manifest directory
    double fps = 25.0;
    std::vector<int> label_indices;
    std::vector<GtSegment> segments; // evaluation only; empty for training-only data
    FeatureMatrix features;          // cached after first access
    bool features_loaded = false;
};

struct Dataset {
    std::vector<std::string> classes;
    std::vector<std::vector<std::string>> conjoint_sets; // optional class grouping tags
    std::vector<VideoRecord> videos;
    std::string root_dir; // directory feature paths resolve against

    int num_classes() const { return static_cast<int>(classes.size()); }

    int class_index(const std::string& name) const {
        for (size_t i = 0; i < classes.size(); ++i)
            if (classes[i] == name) return static_cast<int>(i);
        return -1;
    }

    const FeatureMatrix& features(size_t video) {
        auto& v = videos[video];
        if (!v.features_loaded) {
            const auto path = root_dir.empty()
                                  ? v.feature_path
                                  : (std::filesystem::path(root_dir) / v.feature_path).string();
            v.features = load_features(path);
            v.features_loaded = true;
        }
        return v.features;
    }

    void load_all_features() {
        for (size_t i = 0; i < videos.size(); ++i) features(i);
    }

    std::vector<GtSegment> all_segments() const {
        std::vector<GtSegment> out;
        for (const auto& v : videos)
            out.insert(out.end(), v.segments.begin(), v.segments.end());
        return out;
    }
};

inline Dataset load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("manifest: cannot open: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest: invalid JSON: " + std::string(e.what()));
    }

    Dataset ds;
    ds.root_dir = std::filesystem::path(path).parent_path().string();
    if (!j.contains("classes") || !j["classes"].is_array() || j["classes"].empty())
        throw ConfigError("manifest: 'classes' must be a non-empty array");
    for (const auto& c : j["classes"]) ds.classes.push_back(c.get<std::string>());
    std::set<std::string> uniq(ds.classes.begin(), ds.classes.end());
    if (uniq.size() != ds.classes.size()) throw ConfigError("manifest: duplicate class names");

    if (j.contains("conjoint_sets")) {
        for (const auto& grp : j["conjoint_sets"]) {
            std::vector<std::string> names;
            for (const auto& n : grp) {
                const auto name = n.get<std::string>();
                if (ds.class_index(name) < 0)
                    throw ConfigError("manifest: conjoint set names unknown class '" + name + "'");
                names.push_back(name);
            }
            ds.conjoint_sets.push_back(std::move(names));
        }
    }

    if (!j.contains("videos") || !j["videos"].is_array())
        throw ConfigError("manifest: 'videos' must be an array");
    for (const auto& jv : j["videos"]) {
        VideoRecord v;
        v.video_id = jv.at("video_id").get<std::string>();
        v.feature_path = jv.at("feature_path").get<std::string>();
        v.fps = jv.value("fps", 25.0);
        if (v.fps <= 0) throw ConfigError("manifest: fps must be > 0 for video " + v.video_id);
        for (const auto& lbl : jv.at("labels")) {
            const auto name = lbl.get<std::string>();
            const int idx = ds.class_index(name);
            if (idx < 0)
                throw ConfigError("manifest: video " + v.video_id + " labels unknown class '" + name + "'");
            v.label_indices.push_back(idx);
        }
        if (jv.contains("segments")) {
            for (const auto& js : jv["segments"]) {
                GtSegment s;
                s.video_id = v.video_id;
                s.t_start = js.at("t_start").get<double>();
                s.t_end = js.at("t_end").get<double>();
                const auto name = js.at("class").get<std::string>();
                s.class_index = ds.class_index(name);
                if (s.class_index < 0)
                    throw ConfigError("manifest: segment in " + v.video_id + " names unknown class '" + name + "'");
                if (!(s.t_end > s.t_start))
                    throw ConfigError("manifest: segment in " + v.video_id + " has t_end <= t_start");
                v.segments.push_back(std::move(s));
            }
        }
        ds.videos.push_back(std::move(v));
    }
    return ds;
}

inline void save_manifest(const Dataset& ds, const std::string& path) {
    nlohmann::json j;
    j["classes"] = ds.classes;
    if (!ds.conjoint_sets.empty()) j["conjoint_sets"] = ds.conjoint_sets;
    j["videos"] = nlohmann::json::array();
    for (const auto& v : ds.videos) {
        nlohmann::json jv;
        jv["video_id"] = v.video_id;
        jv["feature_path"] = v.feature_path;
        jv["fps"] = v.fps;
        jv["labels"] = nlohmann::json::array();
        for (int c : v.label_indices) jv["labels"].push_back(ds.classes[static_cast<size_t>(c)]);
        if (!v.segments.empty()) {
            jv["segments"] = nlohmann::json::array();
            for (const auto& s : v.segments) {
                jv["segments"].push_back({{"t_start", s.t_start},
                                          {"t_end", s.t_end},
                                          {"class", ds.classes[static_cast<size_t>(s.class_index)]}});
            }
        }
        j["videos"].push_back(std::move(jv));
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("manifest: cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Snippet sampling
// ---------------------------------------------------------------------------

struct SampledFeatures {
    FeatureMatrix features;
    std::vector<int> index_map; // sampled row -> original snippet index
};

// Train mode: stratified sampling, one index per equal interval of the
// original sequence (indices repeat when t_out exceeds the input length).
// Eval mode keeps every snippet.
inline SampledFeatures sample_snippets(const FeatureMatrix& x, int t_out, Mode mode, Rng& rng) {
    if (x.t_len < 1) throw ArgError("sample_snippets: empty input");
    SampledFeatures out;
    if (mode == Mode::Eval) {
        out.features = x;
        out.index_map.resize(static_cast<size_t>(x.t_len));
        for (int i = 0; i < x.t_len; ++i) out.index_map[static_cast<size_t>(i)] = i;
        return out;
    }
    if (t_out < 1) throw ArgError("sample_snippets: t_out must be >= 1");
    out.features.t_len = t_out;
    out.features.f2 = x.f2;
    out.features.data.resize(static_cast<size_t>(t_out) * x.f2);
    out.index_map.resize(static_cast<size_t>(t_out));
    const int64_t t_in = x.t_len;
    for (int i = 0; i < t_out; ++i) {
        const int64_t lo = static_cast<int64_t>(i) * t_in / t_out;
        int64_t hi = static_cast<int64_t>(i + 1) * t_in / t_out;
        if (hi <= lo) hi = lo + 1;
        const int idx = static_cast<int>(lo + rng.range(0, hi - lo));
        out.index_map[static_cast<size_t>(i)] = idx;
        std::copy_n(x.data.data() + static_cast<size_t>(idx) * x.f2, x.f2,
                    out.features.data.data() + static_cast<size_t>(i) * x.f2);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Batch assembly
// ---------------------------------------------------------------------------

struct Batch {
    std::vector<int> video_indices;
    std::vector<CaslPair> pairs; // positions within video_indices
};

// Draws num_pairs same-class pairs of distinct videos (distinct classes per
// pair) and fills the rest of the batch uniformly from the remaining videos.
inline Batch build_batch(const Dataset& ds, int batch_size, int num_pairs, Rng& rng) {
    if (batch_size < 2 * num_pairs)
        throw ConfigError("build_batch: batch_size too small for the requested pairs");

    std::vector<std::vector<int>> videos_per_class(static_cast<size_t>(ds.num_classes()));
    for (size_t vi = 0; vi < ds.videos.size(); ++vi)
        for (int c : ds.videos[vi].label_indices)
            videos_per_class[static_cast<size_t>(c)].push_back(static_cast<int>(vi));

    std::vector<int> eligible;
    for (int c = 0; c < ds.num_classes(); ++c)
        if (videos_per_class[static_cast<size_t>(c)].size() >= 2) eligible.push_back(c);
    if (static_cast<int>(eligible.size()) < num_pairs)
        throw ConfigError("build_batch: need " + std::to_string(num_pairs) +
                          " classes with >= 2 videos, found " + std::to_string(eligible.size()));

    Batch batch;
    std::set<int> used;
    rng.shuffle(eligible);
    for (int p = 0; p < num_pairs; ++p) {
        const int cls = eligible[static_cast<size_t>(p)];
        const auto& pool = videos_per_class[static_cast<size_t>(cls)];
        const int a = pool[static_cast<size_t>(rng.range(0, static_cast<int64_t>(pool.size())))];
        int b = a;
        while (b == a) b = pool[static_cast<size_t>(rng.range(0, static_cast<int64_t>(pool.size())))];

        CaslPair pair;
        pair.first = static_cast<int>(batch.video_indices.size());
        pair.second = pair.first + 1;
        const auto& la = ds.videos[static_cast<size_t>(a)].label_indices;
        const auto& lb = ds.videos[static_cast<size_t>(b)].label_indices;
        for (int c : la)
            if (std::find(lb.begin(), lb.end(), c) != lb.end()) pair.shared_classes.push_back(c);
        batch.pairs.push_back(std::move(pair));
        batch.video_indices.push_back(a);
        batch.video_indices.push_back(b);
        used.insert(a);
        used.insert(b);
    }

    std::vector<int> remaining;
    for (size_t vi = 0; vi < ds.videos.size(); ++vi)
        if (!used.count(static_cast<int>(vi))) remaining.push_back(static_cast<int>(vi));
    while (static_cast<int>(batch.video_indices.size()) < batch_size) {
        if (!remaining.empty()) {
            const auto pick = static_cast<size_t>(rng.range(0, static_cast<int64_t>(remaining.size())));
            batch.video_indices.push_back(remaining[pick]);
            remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
        } else {
            batch.video_indices.push_back(
                static_cast<int>(rng.range(0, static_cast<int64_t>(ds.videos.size()))));
        }
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Synthetic conjoint-action generator
// ---------------------------------------------------------------------------

// Classes inside one conjoint set share a common-phase prototype and differ
// in their definite-phase prototype. Each action instance is a run of
// common-phase snippets followed by definite-phase snippets; the ground
// truth spans both phases.
struct SynthConfig {
    std::vector<std::vector<std::string>> conjoint_sets{{"jump_high", "jump_long"},
                                                        {"throw_disc", "throw_ball"}};
    int feature_dim = 64;
    int snippets_per_video = 60;
    int num_videos = 200;
    int actions_min = 1;
    int actions_max = 2;
    int common_len_min = 6;
    int common_len_max = 12;
    int definite_len_min = 3;
    int definite_len_max = 6;
    double noise_std = 0.1;
    double background_std = 0.1;
    double fps = 25.0;
    uint64_t seed = 1;

    void validate() const {
        if (conjoint_sets.empty()) throw ConfigError("synth config: need at least one conjoint set");
        std::set<std::string> names;
        for (const auto& grp : conjoint_sets) {
            if (grp.empty()) throw ConfigError("synth config: empty conjoint set");
            for (const auto& n : grp)
                if (!names.insert(n).second)
                    throw ConfigError("synth config: duplicate class name '" + n + "'");
        }
        if (feature_dim < 1 || snippets_per_video < 1 || num_videos < 1)
            throw ConfigError("synth config: dims must be positive");
        if (actions_min < 1 || actions_max < actions_min)
            throw ConfigError("synth config: bad actions_per_video range");
        if (common_len_min < 1 || common_len_max < common_len_min || definite_len_min < 1 ||
            definite_len_max < definite_len_min)
            throw ConfigError("synth config: phase length ranges must be >= 1 and ordered");
        const int worst = actions_max * (common_len_max + definite_len_max) + (actions_max - 1);
        if (worst > snippets_per_video)
            throw ConfigError("synth config: actions cannot fit: worst case " + std::to_string(worst) +
                              " snippets > T=" + std::to_string(snippets_per_video));
        if (noise_std < 0 || background_std < 0) throw ConfigError("synth config: negative noise");
        if (fps <= 0) throw ConfigError("synth config: fps must be > 0");
    }
};

struct SynthInstance {
    int start = 0;        // first snippet
    int common_len = 0;   // leading common-phase snippets
    int definite_len = 0; // trailing definite-phase snippets
    int class_index = -1;
};

struct SynthOutput {
    Dataset dataset; // features held in memory; write_dataset persists them
    std::vector<std::vector<double>> common_prototypes;   // per conjoint set
    std::vector<std::vector<double>> definite_prototypes; // per class
    std::vector<std::vector<SynthInstance>> instances;    // per video
};

namespace detail {

inline std::vector<double> unit_vector(int dim, Rng& rng) {
    std::vector<double> v(static_cast<size_t>(dim));
    double norm2 = 0;
    for (auto& x : v) {
        x = rng.normal();
        norm2 += x * x;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : v) x *= inv;
    return v;
}

// Draw a unit vector nearly orthogonal (|cos| < 0.5) to all accepted ones.
inline std::vector<double> rejection_prototype(int dim, const std::vector<std::vector<double>>& accepted,
                                               Rng& rng) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        auto cand = unit_vector(dim, rng);
        bool ok = true;
        for (const auto& prev : accepted) {
            double cosv = 0;
            for (int i = 0; i < dim; ++i) cosv += cand[static_cast<size_t>(i)] * prev[static_cast<size_t>(i)];
            if (std::abs(cosv) >= 0.5) {
                ok = false;
                break;
            }
        }
        if (ok) return cand;
    }
    throw ConfigError("synth config: prototype rejection sampling failed after 1000 tries "
                      "(feature_dim too small for the requested class count)");
}

} // namespace detail

inline SynthOutput synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);

    SynthOutput out;
    Dataset& ds = out.dataset;
    std::vector<int> class_to_set;
    for (size_t s = 0; s < cfg.conjoint_sets.size(); ++s) {
        for (const auto& name : cfg.conjoint_sets[s]) {
            ds.classes.push_back(name);
            class_to_set.push_back(static_cast<int>(s));
        }
    }
    ds.conjoint_sets = cfg.conjoint_sets;

    std::vector<std::vector<double>> accepted;
    for (size_t s = 0; s < cfg.conjoint_sets.size(); ++s) {
        out.common_prototypes.push_back(detail::rejection_prototype(cfg.feature_dim, accepted, rng));
        accepted.push_back(out.common_prototypes.back());
    }
    for (int c = 0; c < ds.num_classes(); ++c) {
        out.definite_prototypes.push_back(detail::rejection_prototype(cfg.feature_dim, accepted, rng));
        accepted.push_back(out.definite_prototypes.back());
    }

    const double snippet_seconds = 16.0 / cfg.fps;
    for (int vi = 0; vi < cfg.num_videos; ++vi) {
        VideoRecord v;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "synth_%04d", vi);
        v.video_id = idbuf;
        v.feature_path = std::string("features/") + idbuf + ".jcdf";
        v.fps = cfg.fps;

        const auto bg_proto = detail::rejection_prototype(cfg.feature_dim, accepted, rng);
        accepted.push_back(bg_proto);

        const int cls = static_cast<int>(rng.range(0, ds.num_classes()));
        v.label_indices = {cls};
        const int n_act = static_cast<int>(rng.range(cfg.actions_min, cfg.actions_max + 1));

        std::vector<SynthInstance> placed;
        int occupied = 0;
        for (int a = 0; a < n_act; ++a) {
            SynthInstance inst;
            inst.class_index = cls;
            inst.common_len = static_cast<int>(rng.range(cfg.common_len_min, cfg.common_len_max + 1));
            inst.definite_len = static_cast<int>(rng.range(cfg.definite_len_min, cfg.definite_len_max + 1));
            occupied += inst.common_len + inst.definite_len;
            placed.push_back(inst);
        }
        // distribute the free snippets into n_act+1 gaps via sorted cuts;
        // one background snippet is forced between adjacent instances
        const int free_snips = cfg.snippets_per_video - occupied - (n_act - 1);
        std::vector<int> cuts(static_cast<size_t>(n_act));
        for (auto& c : cuts) c = static_cast<int>(rng.range(0, free_snips + 1));
        std::sort(cuts.begin(), cuts.end());
        int cursor = cuts[0];
        for (int a = 0; a < n_act; ++a) {
            placed[static_cast<size_t>(a)].start = cursor;
            cursor += placed[static_cast<size_t>(a)].common_len + placed[static_cast<size_t>(a)].definite_len;
            if (a + 1 < n_act) {
                const int gap = cuts[static_cast<size_t>(a + 1)] - cuts[static_cast<size_t>(a)];
                cursor += 1 + gap;
            }
        }

        FeatureMatrix feats;
        feats.t_len = cfg.snippets_per_video;
        feats.f2 = cfg.feature_dim;
        feats.data.resize(static_cast<size_t>(feats.t_len) * feats.f2);
        for (int t = 0; t < feats.t_len; ++t)
            for (int f = 0; f < cfg.feature_dim; ++f)
                feats.data[static_cast<size_t>(t) * cfg.feature_dim + f] = static_cast<float>(
                    bg_proto[static_cast<size_t>(f)] + rng.normal(0.0, cfg.background_std));
        for (const auto& inst : placed) {
            const auto& common = out.common_prototypes[static_cast<size_t>(class_to_set[static_cast<size_t>(inst.class_index)])];
            const auto& definite = out.definite_prototypes[static_cast<size_t>(inst.class_index)];
            for (int t = inst.start; t < inst.start + inst.common_len + inst.definite_len; ++t) {
                const auto& proto = t < inst.start + inst.common_len ? common : definite;
                for (int f = 0; f < cfg.feature_dim; ++f)
                    feats.data[static_cast<size_t>(t) * cfg.feature_dim + f] = static_cast<float>(
                        proto[static_cast<size_t>(f)] + rng.normal(0.0, cfg.noise_std));
            }
            GtSegment seg;
            seg.video_id = v.video_id;
            seg.class_index = inst.class_index;
            seg.t_start = inst.start * snippet_seconds;
            seg.t_end = (inst.start + inst.common_len + inst.definite_len) * snippet_seconds;
            v.segments.push_back(std::move(seg));
        }

        v.features = std::move(feats);
        v.features_loaded = true;
        out.instances.push_back(std::move(placed));
        ds.videos.push_back(std::move(v));
    }
    return out;
}

// Persists a dataset whose features are in memory: features/*.jcdf plus
// manifest.json under out_dir.
inline void write_dataset(const Dataset& ds, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "features");
    for (const auto& v : ds.videos) {
        if (!v.features_loaded)
            throw ArgError("write_dataset: features not in memory for " + v.video_id);
        write_feature_file((fs::path(out_dir) / v.feature_path).string(), v.features);
    }
    save_manifest(ds, (fs::path(out_dir) / "manifest.json").string());
}

} // namespace jcd
