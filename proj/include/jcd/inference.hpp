#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "jcd/errors.hpp"
#include "jcd/model.hpp"

// Turns one video's model outputs into scored, class-labeled temporal
// proposals: video-level class filtering on the suppressed T-CAS, action-ness
// thresholding into candidate segments, outer-inner contrast scoring, and
// per-class greedy NMS.

namespace jcd {

struct Proposal {
    std::string video_id;
    double t_start = 0; // seconds
    double t_end = 0;   // seconds, > t_start
    double score = 0;   // outer-inner contrast psi
    int class_index = -1; // foreground class, 0-based; never background
};

struct InferenceConfig {
    double video_score_threshold = 0.2;
    std::vector<double> actionness_thresholds = default_actionness_thresholds();
    double nms_iou = 0.7;
    double oic_inflation = 0.25;
    double snippet_seconds = 16.0 / 25.0; // overridden per video from its fps

    static std::vector<double> default_actionness_thresholds() {
        std::vector<double> t;
        for (int i = 0; i <= 15; ++i) t.push_back(0.05 + 0.06 * i);
        return t;
    }

    void validate() const {
        if (video_score_threshold <= 0 || video_score_threshold >= 1)
            throw ConfigError("inference config: video_score_threshold must be in (0,1)");
        if (actionness_thresholds.empty())
            throw ConfigError("inference config: need at least one action-ness threshold");
        for (size_t i = 0; i < actionness_thresholds.size(); ++i) {
            const double t = actionness_thresholds[i];
            if (t <= 0 || t >= 1)
                throw ConfigError("inference config: action-ness thresholds must be in (0,1)");
            if (i > 0 && t <= actionness_thresholds[i - 1])
                throw ConfigError("inference config: thresholds must be strictly increasing");
        }
        if (nms_iou <= 0 || nms_iou > 1) throw ConfigError("inference config: nms_iou must be in (0,1]");
        if (oic_inflation < 0) throw ConfigError("inference config: oic_inflation must be >= 0");
        if (snippet_seconds <= 0) throw ConfigError("inference config: snippet_seconds must be > 0");
    }
};

inline double temporal_iou(double s1, double e1, double s2, double e2) {
    const double inter = std::max(0.0, std::min(e1, e2) - std::max(s1, s2));
    if (inter <= 0) return 0.0;
    const double uni = (e1 - s1) + (e2 - s2) - inter;
    return inter / uni;
}

// A snippet-index segment [first, last], both inclusive.
using SnippetSegment = std::pair<int, int>;

// Video-level class scores via per-class top-k mean + class softmax on the
// suppressed final T-CAS; returns foreground classes scoring >= threshold.
inline std::vector<int> select_classes(const std::vector<double>& s_final_supp, int t_len,
                                       int num_classes_with_bg, int k, double threshold) {
    std::vector<double> vbar(static_cast<size_t>(num_classes_with_bg));
    std::vector<double> colbuf(static_cast<size_t>(t_len));
    for (int j = 0; j < num_classes_with_bg; ++j) {
        for (int t = 0; t < t_len; ++t)
            colbuf[static_cast<size_t>(t)] = s_final_supp[static_cast<size_t>(t) * num_classes_with_bg + j];
        std::sort(colbuf.begin(), colbuf.end(), std::greater<double>());
        double s = 0;
        for (int i = 0; i < k; ++i) s += colbuf[static_cast<size_t>(i)];
        vbar[static_cast<size_t>(j)] = s / k;
    }
    const double mx = *std::max_element(vbar.begin(), vbar.end());
    double z = 0;
    for (double v : vbar) z += std::exp(v - mx);
    std::vector<int> kept;
    for (int j = 0; j + 1 < num_classes_with_bg; ++j) {
        const double p = std::exp(vbar[static_cast<size_t>(j)] - mx) / z;
        if (p >= threshold) kept.push_back(j);
    }
    return kept;
}

// For each threshold, every maximal run of snippets with action-ness >=
// threshold becomes a segment; segments from all thresholds are pooled
// (duplicates allowed, NMS resolves them later).
inline std::vector<SnippetSegment> generate_segments(const std::vector<double>& a_ness,
                                                     const std::vector<double>& thresholds) {
    std::vector<SnippetSegment> segments;
    const int t_len = static_cast<int>(a_ness.size());
    for (double theta : thresholds) {
        int run_start = -1;
        for (int t = 0; t < t_len; ++t) {
            const bool keep = a_ness[static_cast<size_t>(t)] >= theta;
            if (keep && run_start < 0) run_start = t;
            if (!keep && run_start >= 0) {
                segments.push_back({run_start, t - 1});
                run_start = -1;
            }
        }
        if (run_start >= 0) segments.push_back({run_start, t_len - 1});
    }
    return segments;
}

// Outer-inner contrast: inner mean of the class scores over the segment
// minus the mean over an inflated margin on each side (clipped to the video;
// zero when both margins are empty).
inline double score_proposal(const std::vector<double>& s_final_supp, int t_len,
                             int num_classes_with_bg, const SnippetSegment& seg, int class_index,
                             double inflation) {
    const int lo = seg.first, hi = seg.second;
    if (lo < 0 || hi < lo || hi >= t_len) throw ArgError("score_proposal: segment out of range");
    auto score_at = [&](int t) {
        return s_final_supp[static_cast<size_t>(t) * num_classes_with_bg + class_index];
    };
    const int len = hi - lo + 1;
    double inner = 0;
    for (int t = lo; t <= hi; ++t) inner += score_at(t);
    inner /= len;

    const int margin = std::max(1, static_cast<int>(std::ceil(inflation * len)));
    double outer = 0;
    int outer_count = 0;
    for (int t = std::max(0, lo - margin); t < lo; ++t) {
        outer += score_at(t);
        ++outer_count;
    }
    for (int t = hi + 1; t <= std::min(t_len - 1, hi + margin); ++t) {
        outer += score_at(t);
        ++outer_count;
    }
    if (outer_count > 0) outer /= outer_count;
    return inner - outer;
}

// Greedy NMS over same-class proposals: highest score first (ties by earlier
// start, then earlier end), keep iff IoU with every kept proposal stays at or
// below the threshold. The canonical sort makes the result input-order
// invariant.
inline std::vector<Proposal> nms(std::vector<Proposal> proposals, double iou_threshold) {
    std::sort(proposals.begin(), proposals.end(), [](const Proposal& a, const Proposal& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.t_start != b.t_start) return a.t_start < b.t_start;
        return a.t_end < b.t_end;
    });
    std::vector<Proposal> kept;
    for (const auto& p : proposals) {
        bool ok = true;
        for (const auto& q : kept) {
            if (temporal_iou(p.t_start, p.t_end, q.t_start, q.t_end) > iou_threshold) {
                ok = false;
                break;
            }
        }
        if (ok) kept.push_back(p);
    }
    return kept;
}

// Full localization for one video given plain score arrays. Snippet [i, j]
// maps to seconds [i * snippet_seconds, (j+1) * snippet_seconds]; proposals
// with non-positive contrast are dropped.
inline std::vector<Proposal> localize_scores(const std::vector<double>& s_final_supp, int t_len,
                                             int num_classes_with_bg,
                                             const std::vector<double>& a_ness,
                                             const InferenceConfig& cfg, int k,
                                             const std::string& video_id) {
    cfg.validate();
    const auto classes =
        select_classes(s_final_supp, t_len, num_classes_with_bg, k, cfg.video_score_threshold);
    std::vector<Proposal> result;
    if (classes.empty()) return result;

    auto pooled = generate_segments(a_ness, cfg.actionness_thresholds);
    std::set<SnippetSegment> segments(pooled.begin(), pooled.end()); // dedupe before scoring

    for (int cls : classes) {
        std::vector<Proposal> candidates;
        for (const auto& seg : segments) {
            const double psi =
                score_proposal(s_final_supp, t_len, num_classes_with_bg, seg, cls, cfg.oic_inflation);
            if (psi <= 0) continue;
            Proposal p;
            p.video_id = video_id;
            p.t_start = seg.first * cfg.snippet_seconds;
            p.t_end = (seg.second + 1) * cfg.snippet_seconds;
            p.score = psi;
            p.class_index = cls;
            candidates.push_back(std::move(p));
        }
        auto kept = nms(std::move(candidates), cfg.nms_iou);
        result.insert(result.end(), kept.begin(), kept.end());
    }
    return result;
}

template <typename Real>
std::vector<Proposal> localize(const ModelOutputs<Real>& out, const InferenceConfig& cfg, int k,
                               const std::string& video_id) {
    const int t_len = out.s_final_supp.dim(0);
    const int classes = out.s_final_supp.dim(1);
    std::vector<double> scores(out.s_final_supp.values().begin(), out.s_final_supp.values().end());
    std::vector<double> a_ness(out.a_ness.values().begin(), out.a_ness.values().end());
    return localize_scores(scores, t_len, classes, a_ness, cfg, k, video_id);
}

} // namespace jcd
