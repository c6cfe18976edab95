#pragma once

#include <atomic>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "jcd/config.hpp"
#include "jcd/evaluation.hpp"
#include "jcd/training.hpp"

// The ten-experiment component matrix: each experiment is a flag set, every
// experiment trains with the same shared seeds and is scored by average mAP.

namespace jcd {

struct ExperimentSpec {
    int id = 0;
    AblationFlags flags;
};

inline ExperimentSpec ablation_experiment(int id) {
    AblationFlags f;
    f.use_cad = false;
    f.cad_supervised = true;
    f.use_tea = false;
    f.use_l_supp_mil = false;
    f.use_l_supp_coarse = false;
    f.use_l_norm = false;
    f.use_l_guide = false;
    f.use_l_cas = false;
    switch (id) {
        case 1:
            break;
        case 2:
            f.use_cad = true;
            break;
        case 3:
            f.use_cad = true;
            f.cad_supervised = false;
            break;
        case 4:
            f.use_tea = true;
            f.use_l_supp_mil = true;
            break;
        case 5:
            f.use_cad = true;
            f.use_tea = true;
            f.use_l_supp_mil = true;
            break;
        case 6:
            f.use_cad = true;
            f.use_tea = true;
            f.use_l_supp_coarse = true;
            break;
        case 7:
            f.use_cad = true;
            f.use_tea = true;
            f.use_l_supp_mil = true;
            f.use_l_supp_coarse = true;
            break;
        case 8:
            f.use_cad = true;
            f.use_tea = true;
            f.use_l_supp_mil = true;
            f.use_l_supp_coarse = true;
            f.use_l_norm = true;
            break;
        case 9:
            f.use_cad = true;
            f.use_tea = true;
            f.use_l_supp_mil = true;
            f.use_l_supp_coarse = true;
            f.use_l_norm = true;
            f.use_l_guide = true;
            break;
        case 10:
            f.use_cad = true;
            f.use_tea = true;
            f.use_l_supp_mil = true;
            f.use_l_supp_coarse = true;
            f.use_l_norm = true;
            f.use_l_guide = true;
            f.use_l_cas = true;
            break;
        default:
            throw ArgError("ablation: experiment id must be in 1..10, got " + std::to_string(id));
    }
    return {id, f};
}

struct AblationCell {
    int experiment = 0;
    uint64_t seed = 0;
    MapReport report;
};

struct AblationReport {
    std::vector<AblationCell> cells; // sorted by (experiment, seed)
    double avg_lo = 0.3;
    double avg_hi = 0.7;

    double cell_avg(const AblationCell& c) const { return c.report.average(avg_lo, avg_hi); }

    double experiment_mean(int id) const {
        double sum = 0;
        int n = 0;
        for (const auto& c : cells) {
            if (c.experiment == id) {
                sum += cell_avg(c);
                ++n;
            }
        }
        if (n == 0) throw ArgError("ablation: no cells for experiment " + std::to_string(id));
        return sum / n;
    }

    std::vector<int> experiment_ids() const {
        std::vector<int> ids;
        for (const auto& c : cells)
            if (ids.empty() || ids.back() != c.experiment) ids.push_back(c.experiment);
        return ids;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["avg_range"] = {avg_lo, avg_hi};
        j["experiments"] = nlohmann::json::array();
        for (int id : experiment_ids()) {
            nlohmann::json je;
            je["experiment"] = id;
            je["per_seed"] = nlohmann::json::array();
            for (const auto& c : cells) {
                if (c.experiment != id) continue;
                je["per_seed"].push_back({{"seed", c.seed},
                                          {"avg_map", cell_avg(c)},
                                          {"map", c.report.map_values},
                                          {"thresholds", c.report.thresholds}});
            }
            je["mean_avg_map"] = experiment_mean(id);
            j["experiments"].push_back(std::move(je));
        }
        return j;
    }

    std::string format_table() const {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "| Exp | mean AVG mAP(%.1f:%.1f) | per-seed |", avg_lo, avg_hi);
        std::string head = buf;
        std::string sep(head.size(), '-');
        std::string body;
        for (int id : experiment_ids()) {
            std::snprintf(buf, sizeof(buf), "| %3d | %21.2f | ", id, 100.0 * experiment_mean(id));
            body += buf;
            for (const auto& c : cells) {
                if (c.experiment != id) continue;
                std::snprintf(buf, sizeof(buf), "%.2f@%llu ", 100.0 * cell_avg(c),
                              static_cast<unsigned long long>(c.seed));
                body += buf;
            }
            body += "|\n";
        }
        return head + "\n" + sep + "\n" + body;
    }
};

// Called after each finished run; file writes go to per-run directories so
// no lock is needed beyond result collection.
using AblationRunCallback =
    std::function<void(int experiment, uint64_t seed, ModelParams<float>&, const EvalResult&)>;

inline AblationReport run_ablation(const RunConfig& base, Dataset& ds,
                                   const std::vector<int>& experiments,
                                   const std::vector<uint64_t>& seeds,
                                   const std::vector<double>& iou_grid, int jobs,
                                   const AblationRunCallback& on_run = nullptr) {
    if (experiments.empty() || seeds.empty())
        throw ConfigError("ablation: need at least one experiment and one seed");
    ds.load_all_features(); // workers share the dataset read-only afterwards

    struct Task {
        int experiment;
        uint64_t seed;
    };
    std::vector<Task> tasks;
    for (int id : experiments)
        for (uint64_t s : seeds) tasks.push_back({id, s});

    AblationReport report;
    report.cells.resize(tasks.size());
    std::atomic<size_t> next{0};
    std::mutex cb_mutex;

    auto worker = [&]() {
        while (true) {
            const size_t ti = next.fetch_add(1);
            if (ti >= tasks.size()) return;
            const auto task = tasks[ti];
            RunConfig rc = base;
            rc.flags = ablation_experiment(task.experiment).flags;
            rc.seed = task.seed;
            auto params = train_model<float>(rc, ds);
            auto eval = evaluate_model(params, ds, rc.loss, rc.infer, iou_grid);
            AblationCell cell;
            cell.experiment = task.experiment;
            cell.seed = task.seed;
            cell.report = eval.report;
            report.cells[ti] = std::move(cell);
            if (on_run) {
                std::lock_guard<std::mutex> lock(cb_mutex);
                on_run(task.experiment, task.seed, params, eval);
            }
        }
    };

    const int nthreads = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    std::sort(report.cells.begin(), report.cells.end(), [](const AblationCell& a, const AblationCell& b) {
        if (a.experiment != b.experiment) return a.experiment < b.experiment;
        return a.seed < b.seed;
    });
    return report;
}

} // namespace jcd
