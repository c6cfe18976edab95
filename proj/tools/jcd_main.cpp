// jcdnet command-line interface: synthetic data generation, training,
// evaluation, the ablation matrix, and gradient checking.
//
// Exit codes: 0 success, 1 validation error, 2 runtime failure,
// 3 gradient-check failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "jcd/ablation.hpp"
#include "jcd/checkpoint.hpp"
#include "jcd/config.hpp"
#include "jcd/data.hpp"
#include "jcd/evaluation.hpp"
#include "jcd/gradcheck.hpp"
#include "jcd/training.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string manifest_path;
    std::string out_dir;
    std::vector<std::string> overrides;
    std::string subset;
    int64_t seed = -1;
};

nlohmann::json load_run_config_json(const CommonArgs& args) {
    nlohmann::json j = args.config_path.empty() ? jcd::run_config_to_json(jcd::RunConfig{})
                                                : jcd::load_json_file(args.config_path);
    for (const auto& ov : args.overrides) jcd::apply_override(j, ov);
    if (args.seed >= 0) j["seed"] = static_cast<uint64_t>(args.seed);
    return j;
}

jcd::Dataset load_dataset(const CommonArgs& args) {
    if (args.manifest_path.empty()) throw jcd::ConfigError("--manifest is required");
    auto ds = jcd::load_manifest(args.manifest_path);
    if (!args.subset.empty()) {
        if (args.subset != "conjoint")
            throw jcd::ConfigError("--subset only supports 'conjoint', got '" + args.subset + "'");
        ds = jcd::conjoint_subset_filter(ds).dataset;
    }
    return ds;
}

// The manifest is the source of truth for the class count; a config may pin
// it explicitly, in which case the two must agree.
void wire_num_classes(jcd::RunConfig& rc, const jcd::Dataset& ds) {
    if (rc.model.num_classes == 0) rc.model.num_classes = ds.num_classes();
    if (rc.model.num_classes != ds.num_classes())
        throw jcd::ConfigError("config expects " + std::to_string(rc.model.num_classes) +
                               " classes but the manifest has " + std::to_string(ds.num_classes()));
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    size_t pos = 0;
    while (pos < csv.size()) {
        const auto comma = csv.find(',', pos);
        out.push_back(std::stoi(csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw jcd::ConfigError("expected a comma-separated integer list, got '" + csv + "'");
    return out;
}

int cmd_synth(const CommonArgs& args) {
    nlohmann::json j = args.config_path.empty() ? jcd::synth_config_to_json(jcd::SynthConfig{})
                                                : jcd::load_json_file(args.config_path);
    for (const auto& ov : args.overrides) jcd::apply_override(j, ov);
    if (args.seed >= 0) j["seed"] = static_cast<uint64_t>(args.seed);
    const auto cfg = jcd::synth_config_from_json(j);
    if (args.out_dir.empty()) throw jcd::ConfigError("--out is required");

    auto out = jcd::synth_generate(cfg); // validates before anything touches disk
    jcd::write_dataset(out.dataset, args.out_dir);
    std::cout << "wrote " << out.dataset.videos.size() << " videos, "
              << out.dataset.classes.size() << " classes in " << out.dataset.conjoint_sets.size()
              << " conjoint sets to " << args.out_dir << "\n";
    return 0;
}

int cmd_train(const CommonArgs& args) {
    auto j = load_run_config_json(args);
    auto rc = jcd::run_config_from_json(j);
    auto ds = load_dataset(args);
    wire_num_classes(rc, ds);
    rc.validate();
    if (args.out_dir.empty()) throw jcd::ConfigError("--out is required");

    fs::create_directories(args.out_dir);
    {
        std::ofstream cfg_out(fs::path(args.out_dir) / "config.json");
        cfg_out << jcd::run_config_to_json(rc).dump(2) << "\n";
    }
    std::ofstream log(fs::path(args.out_dir) / "train_log.jsonl", std::ios::trunc);
    const std::string ckpt_path = (fs::path(args.out_dir) / "checkpoint.jcdc").string();

    auto params = jcd::train_model<float>(
        rc, ds,
        [&](int, long step, const jcd::LossComponents& c) {
            nlohmann::json line{{"step", step},     {"l_mil", c.l_mil},   {"l_supp", c.l_supp},
                                {"l_cas", c.l_cas}, {"l_norm", c.l_norm}, {"l_guide", c.l_guide},
                                {"total", c.total}};
            log << line.dump() << "\n";
        },
        [&](int, jcd::ModelParams<float>& p) { jcd::save_checkpoint(ckpt_path, p); });

    log.flush();
    std::cout << "trained " << rc.optim.epochs << " epochs; checkpoint at " << ckpt_path << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint, bool anet_grid) {
    if (checkpoint.empty()) throw jcd::ConfigError("--checkpoint is required");
    auto j = load_run_config_json(args);
    auto rc = jcd::run_config_from_json(j);
    auto ds = load_dataset(args);
    auto params = jcd::load_checkpoint<float>(checkpoint);
    if (params.cfg.num_classes != ds.num_classes())
        throw jcd::ConfigError("checkpoint was trained with " +
                               std::to_string(params.cfg.num_classes) +
                               " classes but the manifest has " + std::to_string(ds.num_classes()));
    rc.infer.validate();
    if (args.out_dir.empty()) throw jcd::ConfigError("--out is required");

    auto result = jcd::evaluate_model(params, ds, rc.loss, rc.infer, jcd::default_iou_grid());
    fs::create_directories(args.out_dir);
    jcd::write_proposals_jsonl((fs::path(args.out_dir) / "proposals.jsonl").string(),
                               result.proposals, ds.classes);
    jcd::write_proposals_csv((fs::path(args.out_dir) / "proposals.csv").string(), result.proposals,
                             ds.classes);
    std::cout << "wrote " << result.proposals.size() << " proposals\n";

    if (result.has_ground_truth) {
        nlohmann::json report = result.report.to_json();
        std::string table = result.report.format_table();
        if (anet_grid) {
            auto anet = jcd::map_report(result.proposals, ds.all_segments(), jcd::activitynet_iou_grid());
            report["activitynet_grid"] = anet.to_json();
            table += anet.format_table();
        }
        std::ofstream rj(fs::path(args.out_dir) / "map_report.json");
        rj << report.dump(2) << "\n";
        std::ofstream rt(fs::path(args.out_dir) / "map_report.txt");
        rt << table;
        std::cout << table;
    } else {
        std::cout << "manifest has no ground-truth segments; skipping the mAP report\n";
    }
    return 0;
}

int cmd_ablate(const CommonArgs& args, const std::string& experiments_csv,
               const std::string& seeds_csv, int jobs, double avg_lo, double avg_hi) {
    auto j = load_run_config_json(args);
    auto rc = jcd::run_config_from_json(j);
    auto ds = load_dataset(args);
    wire_num_classes(rc, ds);
    if (args.out_dir.empty()) throw jcd::ConfigError("--out is required");

    const auto experiments = parse_int_list(experiments_csv);
    for (int id : experiments) (void)jcd::ablation_experiment(id); // validate ids up front
    std::vector<uint64_t> seeds;
    for (int s : parse_int_list(seeds_csv)) seeds.push_back(static_cast<uint64_t>(s));
    if (jobs <= 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

    fs::create_directories(args.out_dir);
    auto on_run = [&](int exp, uint64_t seed, jcd::ModelParams<float>& params,
                      const jcd::EvalResult& eval) {
        char name[64];
        std::snprintf(name, sizeof(name), "exp%02d_seed%llu", exp,
                      static_cast<unsigned long long>(seed));
        const auto run_dir = fs::path(args.out_dir) / "runs" / name;
        fs::create_directories(run_dir);
        jcd::save_checkpoint((run_dir / "checkpoint.jcdc").string(), params);
        jcd::write_proposals_jsonl((run_dir / "proposals.jsonl").string(), eval.proposals, ds.classes);
        std::cout << name << ": AVG mAP(" << avg_lo << ":" << avg_hi << ") = "
                  << 100.0 * eval.report.average(avg_lo, avg_hi) << "\n";
    };

    auto report = jcd::run_ablation(rc, ds, experiments, seeds, jcd::default_iou_grid(), jobs, on_run);
    report.avg_lo = avg_lo;
    report.avg_hi = avg_hi;
    {
        std::ofstream rj(fs::path(args.out_dir) / "ablation_report.json");
        rj << report.to_json().dump(2) << "\n";
        std::ofstream rt(fs::path(args.out_dir) / "ablation_table.txt");
        rt << report.format_table();
    }
    std::cout << report.format_table();
    return 0;
}

int cmd_gradcheck() {
    const auto results = jcd::run_gradient_checks();
    bool all_passed = true;
    for (const auto& r : results) {
        std::printf("%-20s max_rel_err=%.3e tol=%.0e %s\n", r.name.c_str(), r.max_rel_err,
                    r.tolerance, r.passed ? "PASS" : "FAIL");
        all_passed = all_passed && r.passed;
    }
    std::printf("%zu checks, %s\n", results.size(), all_passed ? "all passed" : "FAILURES PRESENT");
    return all_passed ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"JCDNet: weakly-supervised temporal action localization"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string checkpoint;
    std::string experiments_csv = "1,2,3,4,5,6,7,8,9,10";
    std::string seeds_csv = "1,2,3";
    int jobs = 0;
    bool anet_grid = false;
    double avg_lo = 0.3, avg_hi = 0.7;

    auto add_common = [&](CLI::App* sub, bool with_manifest) {
        sub->add_option("--config", args.config_path, "JSON config file");
        if (with_manifest) sub->add_option("--manifest", args.manifest_path, "dataset manifest JSON");
        sub->add_option("--out", args.out_dir, "output directory");
        sub->add_option("--seed", args.seed, "override the config seed");
        sub->add_option("--set", args.overrides, "config override key.path=value (repeatable)");
        if (with_manifest)
            sub->add_option("--subset", args.subset, "restrict the dataset ('conjoint')");
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic conjoint-action dataset");
    add_common(synth, false);
    auto* train = app.add_subcommand("train", "train a model on a manifest");
    add_common(train, true);
    auto* eval = app.add_subcommand("eval", "localize and score with a trained checkpoint");
    add_common(eval, true);
    eval->add_option("--checkpoint", checkpoint, "model checkpoint path");
    eval->add_flag("--anet-grid", anet_grid, "also report the 0.5:0.05:0.95 grid");
    auto* ablate = app.add_subcommand("ablate", "train and score the experiment matrix");
    add_common(ablate, true);
    ablate->add_option("--experiments", experiments_csv, "experiment ids, e.g. 1,2,7,10");
    ablate->add_option("--seeds", seeds_csv, "shared training seeds, e.g. 1,2,3");
    ablate->add_option("--jobs", jobs, "parallel training runs (default: hardware)");
    ablate->add_option("--avg-lo", avg_lo, "average-mAP range start");
    ablate->add_option("--avg-hi", avg_hi, "average-mAP range end");
    app.add_subcommand("gradcheck", "finite-difference check of every op and loss");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (app.got_subcommand("synth")) return cmd_synth(args);
        if (app.got_subcommand("train")) return cmd_train(args);
        if (app.got_subcommand("eval")) return cmd_eval(args, checkpoint, anet_grid);
        if (app.got_subcommand("ablate"))
            return cmd_ablate(args, experiments_csv, seeds_csv, jobs, avg_lo, avg_hi);
        if (app.got_subcommand("gradcheck")) return cmd_gradcheck();
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
