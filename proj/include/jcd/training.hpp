#pragma once

#include <functional>
#include <string>
#include <vector>

#include "jcd/config.hpp"
#include "jcd/data.hpp"
#include "jcd/evaluation.hpp"
#include "jcd/inference.hpp"
#include "jcd/losses.hpp"
#include "jcd/model.hpp"

// Training loop and whole-dataset evaluation. Everything is driven by the
// single run seed: parameter init, batch composition, snippet sampling and
// dropout all consume one xoshiro stream in a fixed order, so identical
// seed+config reproduce identical parameters step for step.

namespace jcd {

template <typename Real>
using StepCallback = std::function<void(int epoch, long step, const LossComponents&)>;
template <typename Real>
using EpochCallback = std::function<void(int epoch, ModelParams<Real>&)>;

template <typename Real>
ModelParams<Real> train_model(const RunConfig& rc, Dataset& ds,
                              const StepCallback<Real>& on_step = nullptr,
                              const EpochCallback<Real>& on_epoch = nullptr) {
    rc.validate();
    if (ds.videos.empty()) throw ConfigError("train: empty dataset");
    if (ds.num_classes() != rc.model.num_classes)
        throw ConfigError("train: manifest has " + std::to_string(ds.num_classes()) +
                          " classes but the config expects " + std::to_string(rc.model.num_classes));
    for (const auto& v : ds.videos)
        if (v.label_indices.empty())
            throw ConfigError("train: video " + v.video_id + " has no labels");
    ds.load_all_features();

    Rng rng(rc.seed);
    auto params = ModelParams<Real>::init(rc.model, rc.flags, rng);
    auto param_list = params.all();

    AdamState<Real> adam;
    adam.lr = static_cast<Real>(rc.optim.lr);
    adam.weight_decay = static_cast<Real>(rc.optim.weight_decay);
    adam.beta1 = static_cast<Real>(rc.optim.beta1);
    adam.beta2 = static_cast<Real>(rc.optim.beta2);
    adam.eps = static_cast<Real>(rc.optim.eps);

    const int steps_per_epoch =
        std::max(1, static_cast<int>(ds.videos.size()) / rc.optim.batch_size);
    long step = 0;
    for (int epoch = 0; epoch < rc.optim.epochs; ++epoch) {
        for (int s = 0; s < steps_per_epoch; ++s) {
            auto batch = build_batch(ds, rc.optim.batch_size, rc.optim.num_pairs, rng);

            std::vector<ModelOutputs<Real>> outs;
            std::vector<VideoLabel> labels;
            outs.reserve(batch.video_indices.size());
            for (int vi : batch.video_indices) {
                const auto& video = ds.videos[static_cast<size_t>(vi)];
                auto sampled = sample_snippets(ds.features(static_cast<size_t>(vi)),
                                               rc.model.snippets_train, Mode::Train, rng);
                auto x = to_tensor<Real>(sampled.features);
                outs.push_back(forward(x, rc.model, rc.flags, params, Mode::Train, &rng));
                labels.push_back(VideoLabel::from_foreground(video.label_indices, rc.model.num_classes));
            }

            auto [loss, comps] = total_loss(outs, labels, batch.pairs, rc.loss, rc.flags);
            params.zero_grad();
            backward(loss);
            adam_step(param_list, adam);
            ++step;
            if (on_step) on_step(epoch, step, comps);
        }
        if (on_epoch) on_epoch(epoch, params);
    }
    return params;
}

struct EvalResult {
    std::vector<Proposal> proposals;
    MapReport report;
    bool has_ground_truth = false;
};

// Eval-mode forward over every video (all snippets kept), localization with
// the per-video snippet duration, then the mAP report when the manifest
// carries ground truth.
template <typename Real>
EvalResult evaluate_model(ModelParams<Real>& params, Dataset& ds, const LossWeights& lw,
                          const InferenceConfig& infer, const std::vector<double>& iou_grid) {
    EvalResult res;
    NoGradGuard ng;
    for (size_t vi = 0; vi < ds.videos.size(); ++vi) {
        const auto& feats = ds.features(vi);
        auto x = to_tensor<Real>(feats);
        auto out = forward(x, params.cfg, params.flags, params, Mode::Eval);
        InferenceConfig vcfg = infer;
        vcfg.snippet_seconds = 16.0 / ds.videos[vi].fps;
        auto props = localize(out, vcfg, lw.topk(feats.t_len), ds.videos[vi].video_id);
        res.proposals.insert(res.proposals.end(), props.begin(), props.end());
    }
    auto gts = ds.all_segments();
    if (!gts.empty()) {
        res.report = map_report(res.proposals, gts, iou_grid);
        res.has_ground_truth = true;
    }
    return res;
}

inline void write_proposals_jsonl(const std::string& path, const std::vector<Proposal>& props,
                                  const std::vector<std::string>& classes) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("proposals: cannot open for writing: " + path);
    for (const auto& p : props) {
        nlohmann::json j{{"video_id", p.video_id},
                         {"t_start", p.t_start},
                         {"t_end", p.t_end},
                         {"score", p.score},
                         {"label", classes[static_cast<size_t>(p.class_index)]}};
        out << j.dump() << "\n";
    }
}

inline void write_proposals_csv(const std::string& path, const std::vector<Proposal>& props,
                                const std::vector<std::string>& classes) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("proposals: cannot open for writing: " + path);
    out << "video_id,t_start,t_end,score,label\n";
    char buf[128];
    for (const auto& p : props) {
        std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f,", p.t_start, p.t_end, p.score);
        out << p.video_id << buf << classes[static_cast<size_t>(p.class_index)] << "\n";
    }
}

} // namespace jcd
