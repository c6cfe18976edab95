#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "jcd/inference.hpp"
#include "jcd/rng.hpp"

namespace {

std::vector<jcd::Proposal> random_proposals(jcd::Rng& rng, int n, int classes = 1) {
    std::vector<jcd::Proposal> props;
    for (int i = 0; i < n; ++i) {
        jcd::Proposal p;
        p.video_id = "v";
        p.t_start = rng.uniform(0, 50);
        p.t_end = p.t_start + rng.uniform(0.5, 20);
        p.score = rng.uniform(0.01, 1.0);
        p.class_index = static_cast<int>(rng.range(0, classes));
        props.push_back(std::move(p));
    }
    return props;
}

} // namespace

TEST_CASE("inference config defaults follow the documented grid") {
    jcd::InferenceConfig cfg;
    REQUIRE(cfg.actionness_thresholds.size() == 16);
    REQUIRE(cfg.actionness_thresholds.front() == Catch::Approx(0.05));
    REQUIRE(cfg.actionness_thresholds.back() == Catch::Approx(0.95));
    REQUIRE_NOTHROW(cfg.validate());

    cfg.actionness_thresholds = {0.5, 0.4};
    REQUIRE_THROWS_AS(cfg.validate(), jcd::ConfigError);
    cfg = jcd::InferenceConfig{};
    cfg.video_score_threshold = 1.5;
    REQUIRE_THROWS_AS(cfg.validate(), jcd::ConfigError);
}

TEST_CASE("select_classes filters on the video-level class score") {
    // T=2, three columns (two foreground + background); k=1
    // columns: fg0 strong, fg1 weak, bg strong
    std::vector<double> s{0.9, 0.05, 0.6, /* t=1 */ 0.8, 0.10, 0.7};
    auto kept = jcd::select_classes(s, 2, 3, 1, 0.2);
    REQUIRE(kept == std::vector<int>{0}); // background never returned

    // logit row chosen so the class softmax is exactly [0.50, 0.15, 0.35]
    std::vector<double> exact{std::log(0.50), std::log(0.15), std::log(0.35)};
    REQUIRE(jcd::select_classes(exact, 1, 3, 1, 0.2) == std::vector<int>{0});

    // all foreground below threshold -> empty set (4 fg classes + bg)
    std::vector<double> weak{0.01, 0.01, 0.01, 0.01, 0.95};
    REQUIRE(jcd::select_classes(weak, 1, 5, 1, 0.2).empty());
}

TEST_CASE("select_classes keeps a class sitting exactly on the threshold") {
    // symmetric scores: three identical columns give p = 1/3 each
    std::vector<double> s{0.5, 0.5, 0.5};
    auto kept = jcd::select_classes(s, 1, 3, 1, 1.0 / 3.0);
    REQUIRE(kept == std::vector<int>{0, 1}); // >= keeps boundary classes
}

TEST_CASE("generate_segments emits maximal runs per threshold") {
    std::vector<double> a{0.1, 0.8, 0.9, 0.2};
    auto segs = jcd::generate_segments(a, {0.5});
    REQUIRE(segs == std::vector<jcd::SnippetSegment>{{1, 2}});

    std::vector<double> split{0.9, 0.1, 0.9};
    segs = jcd::generate_segments(split, {0.5});
    REQUIRE(segs == std::vector<jcd::SnippetSegment>{{0, 0}, {2, 2}});
}

TEST_CASE("segments at a higher threshold nest inside segments at a lower one") {
    jcd::Rng rng(5);
    for (int iter = 0; iter < 50; ++iter) {
        std::vector<double> a(40);
        for (auto& v : a) v = rng.u01();
        auto lo = jcd::generate_segments(a, {0.3});
        auto hi = jcd::generate_segments(a, {0.9});
        for (const auto& h : hi) {
            bool contained = false;
            for (const auto& l : lo)
                if (l.first <= h.first && h.second <= l.second) contained = true;
            REQUIRE(contained);
        }
    }
}

TEST_CASE("score_proposal computes the outer-inner contrast") {
    // single class column: [0, 0, 0.9, 0.9, 0, 0]
    std::vector<double> s{0, 0, 0.9, 0.9, 0, 0};
    REQUIRE(jcd::score_proposal(s, 6, 1, {2, 3}, 0, 0.25) == Catch::Approx(0.9));

    std::vector<double> flat(6, 0.4);
    REQUIRE(jcd::score_proposal(flat, 6, 1, {1, 3}, 0, 0.25) == Catch::Approx(0.0).margin(1e-12));

    // whole-video segment has empty margins: psi equals the inner mean
    REQUIRE(jcd::score_proposal(s, 6, 1, {0, 5}, 0, 0.25) == Catch::Approx(0.3));
}

TEST_CASE("nms analytic cases") {
    jcd::Proposal a{"v", 0, 10, 0.9, 0};
    jcd::Proposal b{"v", 1, 11, 0.8, 0};
    // IoU = 9/11 > 0.7 -> only the stronger survives
    auto kept = jcd::nms({a, b}, 0.7);
    REQUIRE(kept.size() == 1);
    REQUIRE(kept[0].score == 0.9);

    jcd::Proposal c{"v", 20, 25, 0.5, 0};
    kept = jcd::nms({a, c}, 0.7);
    REQUIRE(kept.size() == 2);
}

TEST_CASE("nms keeps no overlapping pair and ignores input order") {
    jcd::Rng rng(9);
    for (int iter = 0; iter < 200; ++iter) {
        auto props = random_proposals(rng, static_cast<int>(rng.range(1, 12)));
        auto kept = jcd::nms(props, 0.7);
        for (size_t i = 0; i < kept.size(); ++i)
            for (size_t j = i + 1; j < kept.size(); ++j)
                REQUIRE(jcd::temporal_iou(kept[i].t_start, kept[i].t_end, kept[j].t_start,
                                          kept[j].t_end) <= 0.7);

        auto shuffled = props;
        rng.shuffle(shuffled);
        auto kept2 = jcd::nms(shuffled, 0.7);
        REQUIRE(kept.size() == kept2.size());
        for (size_t i = 0; i < kept.size(); ++i) {
            REQUIRE(kept[i].t_start == kept2[i].t_start);
            REQUIRE(kept[i].score == kept2[i].score);
        }
    }
}

namespace {

struct Fixture {
    std::vector<double> scores; // [T x 3], classes = {fg0, fg1, bg}
    std::vector<double> a_ness;
    int t_len = 30;

    Fixture() {
        scores.assign(static_cast<size_t>(t_len) * 3, 0.0);
        a_ness.assign(static_cast<size_t>(t_len), 0.05);
        for (int t = 0; t < t_len; ++t) {
            const bool inside = t >= 10 && t <= 19;
            scores[static_cast<size_t>(t) * 3 + 0] = inside ? 0.85 : 0.02;
            scores[static_cast<size_t>(t) * 3 + 1] = 0.02;
            scores[static_cast<size_t>(t) * 3 + 2] = inside ? 0.05 : 0.90;
            if (inside) a_ness[static_cast<size_t>(t)] = 0.9;
        }
    }
};

} // namespace

TEST_CASE("localize on a clean synthetic action") {
    Fixture fx;
    jcd::InferenceConfig cfg;
    cfg.snippet_seconds = 16.0 / 25.0;
    auto props = jcd::localize_scores(fx.scores, fx.t_len, 3, fx.a_ness, cfg, 3, "demo");

    REQUIRE_FALSE(props.empty());
    for (const auto& p : props) {
        REQUIRE(p.class_index == 0); // weak class filtered out
        REQUIRE(p.t_end > p.t_start);
        REQUIRE(p.t_start >= 0.0);
        REQUIRE(p.t_end <= fx.t_len * cfg.snippet_seconds + 1e-9);
        REQUIRE(p.score > 0.0);
    }
    // exactly one surviving proposal overlaps the true span at IoU >= 0.5
    const double gt_start = 10 * cfg.snippet_seconds, gt_end = 20 * cfg.snippet_seconds;
    int covering = 0;
    for (const auto& p : props)
        if (jcd::temporal_iou(p.t_start, p.t_end, gt_start, gt_end) >= 0.5) ++covering;
    REQUIRE(covering == 1);

    // sorted by score within the class
    for (size_t i = 1; i < props.size(); ++i) REQUIRE(props[i].score <= props[i - 1].score);
}

TEST_CASE("localize returns nothing when every class is filtered out") {
    // 4 weak foreground classes against a dominant background column
    const int t_len = 12;
    std::vector<double> scores(static_cast<size_t>(t_len) * 5, 0.01);
    std::vector<double> a_ness(static_cast<size_t>(t_len), 0.5);
    for (int t = 0; t < t_len; ++t) scores[static_cast<size_t>(t) * 5 + 4] = 0.95;
    jcd::InferenceConfig cfg;
    auto props = jcd::localize_scores(scores, t_len, 5, a_ness, cfg, 2, "demo");
    REQUIRE(props.empty());
}
