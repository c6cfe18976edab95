#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "jcd/data.hpp"
#include "jcd/rng.hpp"

namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static int counter = 0;
    auto dir = fs::temp_directory_path() / ("jcd_data_test_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter++));
    fs::create_directories(dir);
    return dir;
}

jcd::FeatureMatrix random_matrix(jcd::Rng& rng, int t_len, int f2) {
    jcd::FeatureMatrix m;
    m.t_len = t_len;
    m.f2 = f2;
    m.data.resize(static_cast<size_t>(t_len) * f2);
    for (auto& v : m.data) v = static_cast<float>(rng.normal());
    return m;
}

void corrupt_byte(const fs::path& p, size_t offset, char value) {
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(offset));
    f.write(&value, 1);
}

} // namespace

TEST_CASE("feature file round-trip is bit-exact") {
    jcd::Rng rng(3);
    auto dir = temp_dir();
    auto m = random_matrix(rng, 17, 9);
    const auto path = (dir / "v.jcdf").string();
    jcd::write_feature_file(path, m);
    auto back = jcd::load_features(path);
    REQUIRE(back.t_len == m.t_len);
    REQUIRE(back.f2 == m.f2);
    REQUIRE(back.data == m.data);
}

TEST_CASE("feature file corruption is rejected with diagnostics") {
    jcd::Rng rng(4);
    auto dir = temp_dir();
    auto m = random_matrix(rng, 5, 3);
    const auto path = dir / "v.jcdf";
    jcd::write_feature_file(path.string(), m);

    SECTION("missing file") {
        REQUIRE_THROWS_AS(jcd::load_features((dir / "nope.jcdf").string()), jcd::FormatError);
    }
    SECTION("bad magic") {
        corrupt_byte(path, 0, 'X');
        REQUIRE_THROWS_WITH(jcd::load_features(path.string()),
                            Catch::Matchers::ContainsSubstring("magic"));
    }
    SECTION("bad version") {
        corrupt_byte(path, 4, 9);
        REQUIRE_THROWS_WITH(jcd::load_features(path.string()),
                            Catch::Matchers::ContainsSubstring("version"));
    }
    SECTION("truncated payload") {
        fs::resize_file(path, fs::file_size(path) - 4);
        try {
            jcd::load_features(path.string());
            FAIL("expected FormatError");
        } catch (const jcd::FormatError& e) {
            const std::string msg = e.what();
            REQUIRE(msg.find("expected 60 bytes") != std::string::npos);
            REQUIRE(msg.find("got 56") != std::string::npos);
        }
    }
    SECTION("nan payload") {
        const uint32_t nan_bits = 0x7fc00000u;
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(14 + 4 * 4);
        f.write(reinterpret_cast<const char*>(&nan_bits), 4);
        f.close();
        REQUIRE_THROWS_AS(jcd::load_features(path.string()), jcd::DataError);
    }
    SECTION("zero snippet count") {
        corrupt_byte(path, 6, 0);
        REQUIRE_THROWS_AS(jcd::load_features(path.string()), jcd::FormatError);
    }
}

TEST_CASE("stratified snippet sampling") {
    jcd::Rng rng(8);

    SECTION("exact fit is the identity") {
        auto m = random_matrix(rng, 6, 2);
        auto s = jcd::sample_snippets(m, 6, jcd::Mode::Train, rng);
        REQUIRE(s.index_map == std::vector<int>{0, 1, 2, 3, 4, 5});
        REQUIRE(s.features.data == m.data);
    }
    SECTION("stratification bounds") {
        auto m = random_matrix(rng, 4, 1);
        for (int iter = 0; iter < 50; ++iter) {
            auto s = jcd::sample_snippets(m, 2, jcd::Mode::Train, rng);
            REQUIRE(s.index_map[0] >= 0);
            REQUIRE(s.index_map[0] <= 1);
            REQUIRE(s.index_map[1] >= 2);
            REQUIRE(s.index_map[1] <= 3);
        }
    }
    SECTION("eval keeps everything") {
        auto m = random_matrix(rng, 9, 3);
        auto s = jcd::sample_snippets(m, 4, jcd::Mode::Eval, rng);
        REQUIRE(s.features.data == m.data);
        REQUIRE(s.index_map.size() == 9);
        REQUIRE(s.index_map[8] == 8);
    }
    SECTION("upsampling repeats but never decreases") {
        auto m = random_matrix(rng, 3, 1);
        for (int iter = 0; iter < 30; ++iter) {
            auto s = jcd::sample_snippets(m, 7, jcd::Mode::Train, rng);
            for (size_t i = 1; i < s.index_map.size(); ++i)
                REQUIRE(s.index_map[i] >= s.index_map[i - 1]);
        }
    }
    SECTION("downsampling is strictly increasing") {
        for (int iter = 0; iter < 30; ++iter) {
            const int t_in = static_cast<int>(rng.range(5, 40));
            const int t_out = static_cast<int>(rng.range(2, t_in + 1));
            auto m = random_matrix(rng, t_in, 1);
            auto s = jcd::sample_snippets(m, t_out, jcd::Mode::Train, rng);
            for (size_t i = 1; i < s.index_map.size(); ++i)
                REQUIRE(s.index_map[i] > s.index_map[i - 1]);
        }
    }
}

namespace {

jcd::Dataset toy_dataset(int classes, int videos_per_class) {
    jcd::Dataset ds;
    for (int c = 0; c < classes; ++c) ds.classes.push_back("class_" + std::to_string(c));
    int id = 0;
    for (int c = 0; c < classes; ++c) {
        for (int v = 0; v < videos_per_class; ++v) {
            jcd::VideoRecord rec;
            rec.video_id = "v" + std::to_string(id++);
            rec.label_indices = {c};
            ds.videos.push_back(std::move(rec));
        }
    }
    return ds;
}

} // namespace

TEST_CASE("build_batch marks pairs and fills deterministically") {
    auto ds = toy_dataset(5, 8); // 40 videos
    jcd::Rng r1(10), r2(10);
    auto b1 = jcd::build_batch(ds, 20, 3, r1);
    auto b2 = jcd::build_batch(ds, 20, 3, r2);
    REQUIRE(b1.video_indices == b2.video_indices);

    REQUIRE(b1.video_indices.size() == 20);
    REQUIRE(b1.pairs.size() == 3);
    std::set<int> pair_classes;
    for (const auto& p : b1.pairs) {
        REQUIRE(p.second == p.first + 1);
        const auto& va = ds.videos[static_cast<size_t>(b1.video_indices[static_cast<size_t>(p.first)])];
        const auto& vb = ds.videos[static_cast<size_t>(b1.video_indices[static_cast<size_t>(p.second)])];
        REQUIRE(va.video_id != vb.video_id);
        REQUIRE_FALSE(p.shared_classes.empty());
        REQUIRE(va.label_indices[0] == p.shared_classes[0]);
        REQUIRE(vb.label_indices[0] == p.shared_classes[0]);
        pair_classes.insert(p.shared_classes[0]);
    }
    REQUIRE(pair_classes.size() == 3); // distinct classes across pairs
}

TEST_CASE("build_batch with exactly three two-video classes is forced") {
    auto ds = toy_dataset(3, 2);
    jcd::Rng rng(11);
    auto b = jcd::build_batch(ds, 6, 3, rng);
    std::set<int> vids(b.video_indices.begin(), b.video_indices.end());
    REQUIRE(vids.size() == 6); // every video used exactly once
}

TEST_CASE("build_batch rejects datasets without enough pairable classes") {
    auto ds = toy_dataset(2, 2);
    jcd::Rng rng(12);
    REQUIRE_THROWS_AS(jcd::build_batch(ds, 10, 3, rng), jcd::ConfigError);
}

TEST_CASE("synthetic generator defaults and determinism") {
    jcd::SynthConfig cfg;
    cfg.num_videos = 24; // smaller for test speed; full default count checked by the CLI suite
    auto out1 = jcd::synth_generate(cfg);
    auto out2 = jcd::synth_generate(cfg);

    REQUIRE(out1.dataset.classes.size() == 4);
    REQUIRE(out1.dataset.conjoint_sets.size() == 2);
    REQUIRE(out1.dataset.videos.size() == 24);

    for (size_t v = 0; v < out1.dataset.videos.size(); ++v) {
        REQUIRE(out1.dataset.videos[v].features.data == out2.dataset.videos[v].features.data);
        REQUIRE(out1.dataset.videos[v].video_id == out2.dataset.videos[v].video_id);
    }

    jcd::SynthConfig other = cfg;
    other.seed = cfg.seed + 1;
    auto out3 = jcd::synth_generate(other);
    REQUIRE(out3.dataset.videos[0].features.data != out1.dataset.videos[0].features.data);
}

TEST_CASE("synthetic instances never overlap and ground truth spans both phases") {
    jcd::SynthConfig cfg;
    cfg.num_videos = 40;
    cfg.actions_min = 2;
    cfg.actions_max = 2;
    auto out = jcd::synth_generate(cfg);
    const double sp = 16.0 / cfg.fps;
    for (size_t v = 0; v < out.dataset.videos.size(); ++v) {
        const auto& segs = out.dataset.videos[v].segments;
        REQUIRE(segs.size() == 2);
        REQUIRE(segs[1].t_start >= segs[0].t_end); // separated by >= 1 background snippet
        for (size_t i = 0; i < segs.size(); ++i) {
            const auto& inst = out.instances[v][i];
            REQUIRE(segs[i].t_start == Catch::Approx(inst.start * sp));
            REQUIRE(segs[i].t_end ==
                    Catch::Approx((inst.start + inst.common_len + inst.definite_len) * sp));
        }
    }
}

TEST_CASE("noiseless generation shares common-phase features across sibling classes") {
    jcd::SynthConfig cfg;
    cfg.num_videos = 30;
    cfg.noise_std = 0.0;
    auto out = jcd::synth_generate(cfg);

    // find one video of each class in set 0 and compare their common rows
    int va = -1, vb = -1;
    for (size_t v = 0; v < out.dataset.videos.size(); ++v) {
        const int cls = out.dataset.videos[v].label_indices[0];
        if (cls == 0 && va < 0) va = static_cast<int>(v);
        if (cls == 1 && vb < 0) vb = static_cast<int>(v);
    }
    REQUIRE(va >= 0);
    REQUIRE(vb >= 0);
    const auto& fa = out.dataset.videos[static_cast<size_t>(va)].features;
    const auto& fb = out.dataset.videos[static_cast<size_t>(vb)].features;
    const auto& ia = out.instances[static_cast<size_t>(va)][0];
    const auto& ib = out.instances[static_cast<size_t>(vb)][0];
    for (int f = 0; f < cfg.feature_dim; ++f)
        REQUIRE(fa.at(ia.start, f) == fb.at(ib.start, f)); // identical, not just close

    // definite-phase rows differ across the sibling classes
    bool any_diff = false;
    for (int f = 0; f < cfg.feature_dim; ++f)
        if (fa.at(ia.start + ia.common_len, f) != fb.at(ib.start + ib.common_len, f)) any_diff = true;
    REQUIRE(any_diff);
}

TEST_CASE("nearest-prototype classification of definite snippets is near perfect") {
    jcd::SynthConfig cfg; // defaults: dim 64, noise 0.1
    cfg.num_videos = 60;
    auto out = jcd::synth_generate(cfg);

    int total = 0, correct = 0;
    for (size_t v = 0; v < out.dataset.videos.size(); ++v) {
        const auto& feats = out.dataset.videos[v].features;
        for (const auto& inst : out.instances[v]) {
            for (int t = inst.start + inst.common_len;
                 t < inst.start + inst.common_len + inst.definite_len; ++t) {
                int best = -1;
                double best_d = 1e300;
                for (size_t c = 0; c < out.definite_prototypes.size(); ++c) {
                    double d = 0;
                    for (int f = 0; f < cfg.feature_dim; ++f) {
                        const double diff = feats.at(t, f) - out.definite_prototypes[c][static_cast<size_t>(f)];
                        d += diff * diff;
                    }
                    if (d < best_d) {
                        best_d = d;
                        best = static_cast<int>(c);
                    }
                }
                ++total;
                if (best == inst.class_index) ++correct;
            }
        }
    }
    REQUIRE(total > 0);
    REQUIRE(static_cast<double>(correct) / total >= 0.99);
}

TEST_CASE("synth config validation fires before any generation work") {
    jcd::SynthConfig cfg;
    cfg.feature_dim = 2; // cannot host that many near-orthogonal prototypes
    REQUIRE_THROWS_AS(jcd::synth_generate(cfg), jcd::ConfigError);

    jcd::SynthConfig bad;
    bad.actions_max = 10;
    bad.common_len_max = 30;
    REQUIRE_THROWS_AS(jcd::synth_generate(bad), jcd::ConfigError);
}

TEST_CASE("dataset write and manifest reload round-trip") {
    jcd::SynthConfig cfg;
    cfg.num_videos = 6;
    auto out = jcd::synth_generate(cfg);
    auto dir = temp_dir();
    jcd::write_dataset(out.dataset, dir.string());

    auto ds = jcd::load_manifest((dir / "manifest.json").string());
    REQUIRE(ds.classes == out.dataset.classes);
    REQUIRE(ds.conjoint_sets == out.dataset.conjoint_sets);
    REQUIRE(ds.videos.size() == out.dataset.videos.size());
    for (size_t v = 0; v < ds.videos.size(); ++v) {
        REQUIRE(ds.features(v).data == out.dataset.videos[v].features.data);
        REQUIRE(ds.videos[v].segments.size() == out.dataset.videos[v].segments.size());
        REQUIRE(ds.videos[v].label_indices == out.dataset.videos[v].label_indices);
    }
}

TEST_CASE("manifest validation rejects unknown classes and bad fps") {
    auto dir = temp_dir();
    const auto path = dir / "manifest.json";
    {
        std::ofstream f(path);
        f << R"({"classes":["a"],"videos":[{"video_id":"v","feature_path":"x.jcdf","fps":25,"labels":["b"]}]})";
    }
    REQUIRE_THROWS_AS(jcd::load_manifest(path.string()), jcd::ConfigError);
    {
        std::ofstream f(path);
        f << R"({"classes":["a"],"videos":[{"video_id":"v","feature_path":"x.jcdf","fps":0,"labels":["a"]}]})";
    }
    REQUIRE_THROWS_AS(jcd::load_manifest(path.string()), jcd::ConfigError);
    {
        std::ofstream f(path);
        f << R"(not json)";
    }
    REQUIRE_THROWS_AS(jcd::load_manifest(path.string()), jcd::FormatError);
}
