#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jcd/checkpoint.hpp"
#include "jcd/data.hpp"
#include "jcd/errors.hpp"
#include "jcd/inference.hpp"
#include "jcd/losses.hpp"
#include "jcd/model.hpp"

// Run configuration: one JSON document covering model, losses, inference,
// optimizer, ablation flags and the seed, with dotted-path command-line
// overrides (--set optimizer.epochs=30).

namespace jcd {

struct OptimConfig {
    double lr = 1e-4;
    double weight_decay = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int epochs = 100;
    int batch_size = 20;
    int num_pairs = 3;

    void validate() const {
        if (lr <= 0 || weight_decay < 0) throw ConfigError("optimizer: lr must be > 0, weight_decay >= 0");
        if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
            throw ConfigError("optimizer: betas must be in (0,1)");
        if (epochs < 1 || batch_size < 1 || num_pairs < 0)
            throw ConfigError("optimizer: epochs/batch_size must be >= 1, num_pairs >= 0");
        if (batch_size < 2 * num_pairs)
            throw ConfigError("optimizer: batch_size too small for num_pairs");
    }
};

struct RunConfig {
    ModelConfig model;
    LossWeights loss;
    InferenceConfig infer;
    OptimConfig optim;
    AblationFlags flags;
    uint64_t seed = 1;

    void validate() const {
        model.validate();
        loss.validate();
        infer.validate();
        optim.validate();
        flags.validate();
    }
};

namespace detail {

inline nlohmann::json loss_weights_to_json(const LossWeights& w) {
    return {{"lambda0", w.lambda0},         {"lambda1", w.lambda1}, {"lambda2", w.lambda2},
            {"lambda3", w.lambda3},         {"lambda4", w.lambda4}, {"casl_margin", w.casl_margin},
            {"topk_divisor", w.topk_divisor}};
}

inline LossWeights loss_weights_from_json(const nlohmann::json& j) {
    LossWeights w;
    w.lambda0 = j.value("lambda0", w.lambda0);
    w.lambda1 = j.value("lambda1", w.lambda1);
    w.lambda2 = j.value("lambda2", w.lambda2);
    w.lambda3 = j.value("lambda3", w.lambda3);
    w.lambda4 = j.value("lambda4", w.lambda4);
    w.casl_margin = j.value("casl_margin", w.casl_margin);
    w.topk_divisor = j.value("topk_divisor", w.topk_divisor);
    return w;
}

inline nlohmann::json inference_to_json(const InferenceConfig& c) {
    return {{"video_score_threshold", c.video_score_threshold},
            {"actionness_thresholds", c.actionness_thresholds},
            {"nms_iou", c.nms_iou},
            {"oic_inflation", c.oic_inflation},
            {"snippet_seconds", c.snippet_seconds}};
}

inline InferenceConfig inference_from_json(const nlohmann::json& j) {
    InferenceConfig c;
    c.video_score_threshold = j.value("video_score_threshold", c.video_score_threshold);
    if (j.contains("actionness_thresholds"))
        c.actionness_thresholds = j["actionness_thresholds"].get<std::vector<double>>();
    c.nms_iou = j.value("nms_iou", c.nms_iou);
    c.oic_inflation = j.value("oic_inflation", c.oic_inflation);
    c.snippet_seconds = j.value("snippet_seconds", c.snippet_seconds);
    return c;
}

inline nlohmann::json optim_to_json(const OptimConfig& c) {
    return {{"lr", c.lr},           {"weight_decay", c.weight_decay}, {"beta1", c.beta1},
            {"beta2", c.beta2},     {"eps", c.eps},                   {"epochs", c.epochs},
            {"batch_size", c.batch_size}, {"num_pairs", c.num_pairs}};
}

inline OptimConfig optim_from_json(const nlohmann::json& j) {
    OptimConfig c;
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.num_pairs = j.value("num_pairs", c.num_pairs);
    return c;
}

} // namespace detail

inline nlohmann::json run_config_to_json(const RunConfig& rc) {
    nlohmann::json j;
    j["model"] = detail::model_config_to_json(rc.model);
    j["loss"] = detail::loss_weights_to_json(rc.loss);
    j["inference"] = detail::inference_to_json(rc.infer);
    j["optimizer"] = detail::optim_to_json(rc.optim);
    j["flags"] = detail::flags_to_json(rc.flags);
    j["seed"] = rc.seed;
    return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig rc;
    if (j.contains("model")) rc.model = detail::model_config_from_json(j["model"]);
    if (j.contains("loss")) rc.loss = detail::loss_weights_from_json(j["loss"]);
    if (j.contains("inference")) rc.infer = detail::inference_from_json(j["inference"]);
    if (j.contains("optimizer")) rc.optim = detail::optim_from_json(j["optimizer"]);
    if (j.contains("flags")) rc.flags = detail::flags_from_json(j["flags"]);
    rc.seed = j.value("seed", rc.seed);
    return rc;
}

inline nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("config: cannot open: " + path);
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("config: invalid JSON in " + path + ": " + e.what());
    }
}

// Applies one "dotted.path=value" override; the value parses as JSON when
// possible, otherwise as a string.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("--set expects key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);

    nlohmann::json* cursor = &j;
    size_t pos = 0;
    while (true) {
        const auto dot = key.find('.', pos);
        const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
        if (part.empty()) throw ConfigError("--set: empty path component in '" + key + "'");
        if (dot == std::string::npos) {
            auto parsed = nlohmann::json::parse(value, nullptr, false);
            (*cursor)[part] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
            return;
        }
        cursor = &(*cursor)[part];
        pos = dot + 1;
    }
}

inline nlohmann::json synth_config_to_json(const SynthConfig& c) {
    return {{"conjoint_sets", c.conjoint_sets},
            {"feature_dim", c.feature_dim},
            {"snippets_per_video", c.snippets_per_video},
            {"num_videos", c.num_videos},
            {"actions_min", c.actions_min},
            {"actions_max", c.actions_max},
            {"common_len_min", c.common_len_min},
            {"common_len_max", c.common_len_max},
            {"definite_len_min", c.definite_len_min},
            {"definite_len_max", c.definite_len_max},
            {"noise_std", c.noise_std},
            {"background_std", c.background_std},
            {"fps", c.fps},
            {"seed", c.seed}};
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
    SynthConfig c;
    if (j.contains("conjoint_sets"))
        c.conjoint_sets = j["conjoint_sets"].get<std::vector<std::vector<std::string>>>();
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.snippets_per_video = j.value("snippets_per_video", c.snippets_per_video);
    c.num_videos = j.value("num_videos", c.num_videos);
    c.actions_min = j.value("actions_min", c.actions_min);
    c.actions_max = j.value("actions_max", c.actions_max);
    c.common_len_min = j.value("common_len_min", c.common_len_min);
    c.common_len_max = j.value("common_len_max", c.common_len_max);
    c.definite_len_min = j.value("definite_len_min", c.definite_len_min);
    c.definite_len_max = j.value("definite_len_max", c.definite_len_max);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.background_std = j.value("background_std", c.background_std);
    c.fps = j.value("fps", c.fps);
    c.seed = j.value("seed", c.seed);
    return c;
}

} // namespace jcd
