#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "jcd/data.hpp"
#include "jcd/errors.hpp"
#include "jcd/inference.hpp"

// ActivityNet-protocol evaluation: temporal IoU, greedy score-ordered
// matching with the interpolated precision envelope, and mAP over an IoU
// threshold grid. Also the conjoint-action subset filter.

namespace jcd {

inline double tiou(double a_start, double a_end, double b_start, double b_end) {
    if (!(a_end > a_start) || !(b_end > b_start))
        throw ArgError("tiou: degenerate segment (t_end must exceed t_start)");
    return temporal_iou(a_start, a_end, b_start, b_end);
}

inline double tiou(const GtSegment& a, const GtSegment& b) {
    return tiou(a.t_start, a.t_end, b.t_start, b.t_end);
}

namespace detail {

inline void sort_by_score(std::vector<Proposal>& props) {
    std::sort(props.begin(), props.end(), [](const Proposal& a, const Proposal& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.t_start != b.t_start) return a.t_start < b.t_start;
        if (a.video_id != b.video_id) return a.video_id < b.video_id;
        return a.t_end < b.t_end;
    });
}

} // namespace detail

// AP for one class at one IoU threshold. Proposals are matched greedily in
// score order; each proposal claims the unmatched same-video ground truth
// with the highest IoU when that IoU reaches the threshold. AP sums the
// interpolated precision envelope at true-positive ranks over the ground
// truth count.
inline double average_precision(std::vector<Proposal> proposals, const std::vector<GtSegment>& gts,
                                double iou_thr) {
    if (gts.empty()) throw ArgError("average_precision: no ground truth for this class");
    detail::sort_by_score(proposals);

    std::map<std::string, std::vector<size_t>> gts_by_video;
    for (size_t i = 0; i < gts.size(); ++i) gts_by_video[gts[i].video_id].push_back(i);
    std::vector<bool> matched(gts.size(), false);

    const size_t n = proposals.size();
    std::vector<bool> is_tp(n, false);
    int tp_count = 0;
    std::vector<double> precision(n, 0.0);
    for (size_t r = 0; r < n; ++r) {
        const auto& p = proposals[r];
        double best_iou = -1.0;
        size_t best_gt = 0;
        auto it = gts_by_video.find(p.video_id);
        if (it != gts_by_video.end()) {
            for (size_t gi : it->second) {
                if (matched[gi]) continue;
                const double ov = temporal_iou(p.t_start, p.t_end, gts[gi].t_start, gts[gi].t_end);
                if (ov > best_iou) {
                    best_iou = ov;
                    best_gt = gi;
                }
            }
        }
        if (best_iou >= iou_thr) {
            matched[best_gt] = true;
            is_tp[r] = true;
            ++tp_count;
        }
        precision[r] = static_cast<double>(tp_count) / static_cast<double>(r + 1);
    }

    // interpolated envelope: precision at rank r becomes the max precision at
    // any rank >= r
    for (size_t r = n; r-- > 1;) precision[r - 1] = std::max(precision[r - 1], precision[r]);

    double ap_sum = 0;
    for (size_t r = 0; r < n; ++r)
        if (is_tp[r]) ap_sum += precision[r];
    return ap_sum / static_cast<double>(gts.size());
}

struct MapReport {
    std::vector<double> thresholds;
    std::vector<double> map_values;                  // fraction in [0,1] per threshold
    std::map<int, std::vector<double>> per_class_ap; // class index -> AP per threshold
    int classes_evaluated = 0;

    // Mean mAP over thresholds in [lo, hi] (inclusive, with tolerance).
    double average(double lo, double hi) const {
        double sum = 0;
        int count = 0;
        for (size_t i = 0; i < thresholds.size(); ++i) {
            if (thresholds[i] >= lo - 1e-9 && thresholds[i] <= hi + 1e-9) {
                sum += map_values[i];
                ++count;
            }
        }
        if (count == 0) throw ArgError("map average: no thresholds in range");
        return sum / count;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["thresholds"] = thresholds;
        j["map"] = map_values;
        if (!thresholds.empty()) {
            j["avg"] = average(thresholds.front(), thresholds.back());
            const bool has = [&](double t) {
                for (double x : thresholds)
                    if (std::abs(x - t) < 1e-9) return true;
                return false;
            }(0.5);
            if (has && thresholds.back() >= 0.9 - 1e-9) {
                j["avg_0.5:0.9"] = average(0.5, 0.9);
                j["avg_0.3:0.9"] = average(0.3, 0.9);
            }
        }
        nlohmann::json jc = nlohmann::json::object();
        for (const auto& [cls, aps] : per_class_ap) jc[std::to_string(cls)] = aps;
        j["per_class_ap"] = jc;
        return j;
    }

    // Aligned text table: one mAP column per threshold plus the two headline
    // averages when the grid covers them.
    std::string format_table() const {
        char buf[64];
        std::string head = "|";
        std::string row = "|";
        for (size_t i = 0; i < thresholds.size(); ++i) {
            std::snprintf(buf, sizeof(buf), " mAP@%.2f |", thresholds[i]);
            head += buf;
            std::snprintf(buf, sizeof(buf), " %7.2f  |", 100.0 * map_values[i]);
            row += buf;
        }
        const bool table1_grid = !thresholds.empty() && std::abs(thresholds.front() - 0.3) < 1e-9 &&
                                 std::abs(thresholds.back() - 0.9) < 1e-9;
        if (table1_grid) {
            std::snprintf(buf, sizeof(buf), " AVG 0.5:0.9 |");
            head += buf;
            std::snprintf(buf, sizeof(buf), " %11.2f |", 100.0 * average(0.5, 0.9));
            row += buf;
            std::snprintf(buf, sizeof(buf), " AVG 0.3:0.9 |");
            head += buf;
            std::snprintf(buf, sizeof(buf), " %11.2f |", 100.0 * average(0.3, 0.9));
            row += buf;
        } else if (!thresholds.empty()) {
            std::snprintf(buf, sizeof(buf), " AVG |");
            head += buf;
            std::snprintf(buf, sizeof(buf), " %5.2f |", 100.0 * average(thresholds.front(), thresholds.back()));
            row += buf;
        }
        std::string sep(head.size(), '-');
        return head + "\n" + sep + "\n" + row + "\n";
    }
};

inline std::vector<double> default_iou_grid() { return {0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}; }

inline std::vector<double> activitynet_iou_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 9; ++i) g.push_back(0.5 + 0.05 * i);
    return g;
}

// mAP per threshold: mean of per-class AP over the classes that own at least
// one ground-truth segment.
inline MapReport map_report(const std::vector<Proposal>& proposals,
                            const std::vector<GtSegment>& gts, const std::vector<double>& iou_grid) {
    if (gts.empty()) throw ArgError("map_report: empty ground-truth set");
    MapReport rep;
    rep.thresholds = iou_grid;

    std::set<int> classes;
    for (const auto& g : gts) classes.insert(g.class_index);
    rep.classes_evaluated = static_cast<int>(classes.size());

    std::map<int, std::vector<Proposal>> props_by_class;
    for (const auto& p : proposals) props_by_class[p.class_index].push_back(p);
    std::map<int, std::vector<GtSegment>> gts_by_class;
    for (const auto& g : gts) gts_by_class[g.class_index].push_back(g);

    rep.map_values.assign(iou_grid.size(), 0.0);
    for (int cls : classes) rep.per_class_ap[cls].assign(iou_grid.size(), 0.0);
    for (size_t ti = 0; ti < iou_grid.size(); ++ti) {
        double sum = 0;
        for (int cls : classes) {
            const auto pit = props_by_class.find(cls);
            const double ap = average_precision(pit == props_by_class.end() ? std::vector<Proposal>{}
                                                                            : pit->second,
                                                gts_by_class[cls], iou_grid[ti]);
            rep.per_class_ap[cls][ti] = ap;
            sum += ap;
        }
        rep.map_values[ti] = sum / static_cast<double>(classes.size());
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Conjoint-action subset
// ---------------------------------------------------------------------------

inline const std::array<const char*, 20>& thumos14_classes() {
    static const std::array<const char*, 20> names{
        "BaseballPitch", "BasketballDunk", "Billiards",     "CleanAndJerk",  "CliffDiving",
        "CricketBowling", "CricketShot",   "Diving",        "FrisbeeCatch",  "GolfSwing",
        "HammerThrow",    "HighJump",      "JavelinThrow",  "LongJump",      "PoleVault",
        "Shotput",        "SoccerPenalty", "TennisSwing",   "ThrowDiscus",   "VolleyballSpiking"};
    return names;
}

// The five conjoint sets over eleven THUMOS14 classes.
inline const std::vector<std::vector<std::string>>& thumos14_conjoint_sets() {
    static const std::vector<std::vector<std::string>> sets{
        {"BaseballPitch", "CricketBowling"},
        {"HighJump", "LongJump"},
        {"HammerThrow", "Shotput", "ThrowDiscus"},
        {"JavelinThrow", "PoleVault"},
        {"CliffDiving", "Diving"}};
    return sets;
}

struct ConjointFilterResult {
    Dataset dataset;
    std::map<int, int> class_map; // old class index -> new dense index
};

// Restricts a dataset to its conjoint classes: the manifest's own
// conjoint_sets tags when present, otherwise the THUMOS14 conjoint list (in
// which case every class name must be a known THUMOS14 class).
inline ConjointFilterResult conjoint_subset_filter(const Dataset& ds) {
    std::set<std::string> keep_names;
    if (!ds.conjoint_sets.empty()) {
        for (const auto& grp : ds.conjoint_sets)
            for (const auto& n : grp) keep_names.insert(n);
    } else {
        std::set<std::string> known(thumos14_classes().begin(), thumos14_classes().end());
        std::vector<std::string> unknown;
        for (const auto& c : ds.classes)
            if (!known.count(c)) unknown.push_back(c);
        if (!unknown.empty()) {
            std::string msg = "conjoint filter: unknown class names:";
            for (const auto& u : unknown) msg += " '" + u + "'";
            throw ConfigError(msg);
        }
        for (const auto& grp : thumos14_conjoint_sets())
            for (const auto& n : grp) keep_names.insert(n);
    }

    ConjointFilterResult out;
    Dataset& filtered = out.dataset;
    filtered.root_dir = ds.root_dir;
    for (size_t c = 0; c < ds.classes.size(); ++c) {
        if (keep_names.count(ds.classes[c])) {
            out.class_map[static_cast<int>(c)] = static_cast<int>(filtered.classes.size());
            filtered.classes.push_back(ds.classes[c]);
        }
    }
    if (filtered.classes.empty())
        throw ConfigError("conjoint filter: no conjoint classes present in the dataset");
    for (const auto& grp : (ds.conjoint_sets.empty() ? thumos14_conjoint_sets() : ds.conjoint_sets)) {
        std::vector<std::string> present;
        for (const auto& n : grp)
            if (std::find(filtered.classes.begin(), filtered.classes.end(), n) != filtered.classes.end())
                present.push_back(n);
        if (present.size() >= 2) filtered.conjoint_sets.push_back(std::move(present));
    }

    for (const auto& v : ds.videos) {
        VideoRecord nv;
        nv.video_id = v.video_id;
        nv.feature_path = v.feature_path;
        nv.fps = v.fps;
        nv.features = v.features;
        nv.features_loaded = v.features_loaded;
        for (int c : v.label_indices) {
            auto it = out.class_map.find(c);
            if (it != out.class_map.end()) nv.label_indices.push_back(it->second);
        }
        for (const auto& s : v.segments) {
            auto it = out.class_map.find(s.class_index);
            if (it == out.class_map.end()) continue;
            GtSegment ns = s;
            ns.class_index = it->second;
            nv.segments.push_back(std::move(ns));
        }
        if (!nv.label_indices.empty()) filtered.videos.push_back(std::move(nv));
    }
    return out;
}

} // namespace jcd
