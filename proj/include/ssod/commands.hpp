#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssod/config.hpp"
#include "ssod/trainer.hpp"

// Command layer behind the CLI binary. Every command is a plain function over
// a parsed config so tests can drive it in-process; the binary is only an
// argument parser. Failure convention: std::invalid_argument for validation
// problems (exit 1), std::runtime_error for I/O and divergence (exit 2).

namespace ssod {

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
    write_text(path, j.dump(2) + "\n");
}

}  // namespace detail

struct GenDataResult {
    std::size_t scene_count = 0;
    std::size_t labeled_count = 0;
    std::size_t box_count = 0;
};

inline GenDataResult cmd_gen_data(const ExperimentConfig& cfg, const std::string& out_path) {
    cfg.validate();
    std::vector<Scene> scenes = generate_world(cfg.world);
    GenDataResult res;
    res.scene_count = scenes.size();
    for (const Scene& s : scenes) res.box_count += s.boxes.size();
    const DatasetSplit split = split_dataset(std::move(scenes), cfg.world.label_fraction, cfg.seed);
    res.labeled_count = split.labeled.size();
    write_dataset(split, out_path);
    return res;
}

// Keeps the prior log's records up to the resume point and appends the fresh
// run's records, reproducing the uninterrupted log: a checkpoint written at
// iteration k sits on top of a log holding steps < k and snapshots <= k, and
// a run resumed from k emits exactly the complement.
inline TrainLog merge_train_logs(const TrainLog& prior, const TrainLog& fresh, int resume_iter) {
    TrainLog out;
    out.mode = fresh.mode;
    for (const StepRecord& r : prior.steps)
        if (r.iteration < resume_iter) out.steps.push_back(r);
    for (const EvalSnapshot& s : prior.snapshots)
        if (s.iteration <= resume_iter) out.snapshots.push_back(s);
    out.steps.insert(out.steps.end(), fresh.steps.begin(), fresh.steps.end());
    out.snapshots.insert(out.snapshots.end(), fresh.snapshots.begin(), fresh.snapshots.end());
    return out;
}

struct TrainResult {
    DetectorParams theta_s;
    DetectorParams theta_t;
    TrainLog log;
    double final_map = 0.0;
    std::string checkpoint_path;
    std::string log_path;
};

inline TrainResult cmd_train(const ExperimentConfig& cfg, const std::string& data_path,
                             const std::string& out_dir, const std::string& resume_path = "") {
    cfg.validate();
    const DatasetSplit split = read_dataset(data_path);
    const std::uint64_t chash = config_hash(cfg);

    Checkpoint resume;
    TrainLog prior;
    bool resuming = false;
    if (!resume_path.empty()) {
        resume = read_checkpoint(resume_path);
        if (resume.config_hash != chash)
            throw std::invalid_argument("resume checkpoint was produced under a different config");
        resuming = true;
        std::ifstream in(out_dir + "/trainlog.json");
        if (in) {
            nlohmann::json j;
            in >> j;
            prior = trainlog_from_json(j);
        }
    }

    std::filesystem::create_directories(out_dir);
    const std::vector<Scene> test = generate_test_scenes(cfg.world, cfg.test_scene_count);

    TrainResult res;
    res.checkpoint_path = out_dir + "/checkpoint.json";
    res.log_path = out_dir + "/trainlog.json";

    // Persist at every snapshot so an interrupted run leaves a resumable
    // checkpoint plus the matching log prefix on disk.
    const auto persist = [&](int iteration, const DetectorParams& ts, const DetectorParams& tt,
                             const TrainLog& log_so_far) {
        Checkpoint c;
        c.config_hash = chash;
        c.iteration = iteration;
        c.theta_s = ts;
        c.theta_t = tt;
        write_checkpoint(c, res.checkpoint_path);
        const TrainLog merged =
            resuming ? merge_train_logs(prior, log_so_far, resume.iteration) : log_so_far;
        detail::write_json_file(res.log_path, to_json(merged));
    };

    ExperimentResult exp = run_experiment(cfg.train, cfg.world, split, test,
                                          resuming ? &resume : nullptr, persist);
    res.theta_s = std::move(exp.theta_s);
    res.theta_t = std::move(exp.theta_t);
    res.log = resuming ? merge_train_logs(prior, exp.log, resume.iteration) : std::move(exp.log);

    Checkpoint final_ckpt;
    final_ckpt.config_hash = chash;
    final_ckpt.iteration = cfg.train.burn_in_iters + cfg.train.mutual_iters;
    final_ckpt.theta_s = res.theta_s;
    final_ckpt.theta_t = res.theta_t;
    write_checkpoint(final_ckpt, res.checkpoint_path);
    detail::write_json_file(res.log_path, to_json(res.log));
    if (!res.log.snapshots.empty())
        res.final_map = res.log.snapshots.back().map_50_95;
    else if (!test.empty())
        res.final_map = evaluate_model(res.theta_t, test, cfg.score_thr,
                                       cfg.train.selector.nms_iou).map_50_95;
    return res;
}

inline EvalReport cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                           const std::string& data_path, const std::string& out_path = "") {
    cfg.validate();
    const Checkpoint ckpt = read_checkpoint(checkpoint_path);
    if (ckpt.config_hash != config_hash(cfg))
        throw std::invalid_argument("checkpoint config hash does not match the supplied config");
    const DatasetSplit split = read_dataset(data_path);
    const std::vector<Scene> test = generate_test_scenes(cfg.world, cfg.test_scene_count);
    EvalReport rep = evaluate_model(ckpt.theta_t, test, cfg.score_thr, cfg.train.selector.nms_iou);
    add_pseudo_diagnostics(rep, ckpt.theta_t, ckpt.theta_s, split.unlabeled, split.unlabeled_oracle,
                           cfg.train.selector, cfg.train.assignment, cfg.train.regression);
    rep.config_hash = ckpt.config_hash;
    if (!out_path.empty()) detail::write_json_file(out_path, to_json(rep));
    return rep;
}

// --- ablation presets -------------------------------------------------------

// Each preset's arms differ in exactly one config key; the first arm is the
// baseline the delta table subtracts.
struct AblationPreset {
    std::string name;
    std::string key;
    std::vector<std::string> arms;
};

inline AblationPreset ablation_preset(const std::string& name) {
    if (name == "selector_compare")
        return {name, "selector", {"class", "box-score"}};
    if (name == "assignment_compare")
        return {name, "assignment", {"standard", "center-sampling", "soft"}};
    if (name == "regression_compare")
        return {name, "reg_loss", {"none", "confidence-l1", "listen2student"}};
    throw std::invalid_argument("unknown ablation preset: " + name);
}

struct AblationArm {
    std::string value;                   // the setting this arm gives the varied key
    std::vector<EvalReport> per_seed;
    std::map<std::string, double> mean;  // column name -> mean over seeds
};

struct AblationResult {
    std::string preset;
    std::string key;
    std::vector<std::uint64_t> seeds;
    std::vector<AblationArm> arms;  // arms[0] is the baseline
    // arm value -> column -> (arm mean - baseline mean)
    std::map<std::string, std::map<std::string, double>> delta;
};

namespace detail {

inline const std::vector<std::string>& ablation_columns() {
    static const std::vector<std::string> cols = {
        "ap50", "ap55", "ap60", "ap65", "ap70", "ap75", "ap80", "ap85", "ap90", "ap95",
        "map_50_95", "pseudo_precision", "pseudo_recall", "beneficial_fraction",
        "misleading_fraction"};
    return cols;
}

inline std::map<std::string, double> report_columns(const EvalReport& rep) {
    std::map<std::string, double> row;
    for (const auto& [t, v] : rep.ap) row["ap" + std::to_string(t)] = v;
    row["map_50_95"] = rep.map_50_95;
    row["pseudo_precision"] = rep.pseudo_precision;
    row["pseudo_recall"] = rep.pseudo_recall;
    row["beneficial_fraction"] = rep.selection.beneficial_fraction;
    row["misleading_fraction"] = rep.selection.misleading_fraction;
    return row;
}

}  // namespace detail

inline std::string ablation_csv(const AblationResult& res) {
    std::ostringstream out;
    out << "arm";
    for (const auto& col : detail::ablation_columns()) out << "," << col;
    out << "\n";
    for (const AblationArm& arm : res.arms) {
        out << arm.value;
        for (const auto& col : detail::ablation_columns()) out << "," << detail::fmt(arm.mean.at(col));
        out << "\n";
    }
    for (std::size_t a = 1; a < res.arms.size(); ++a) {
        const auto& d = res.delta.at(res.arms[a].value);
        out << "delta_" << res.arms[a].value;
        for (const auto& col : detail::ablation_columns()) out << "," << detail::fmt(d.at(col));
        out << "\n";
    }
    return out.str();
}

inline nlohmann::json to_json(const AblationResult& res) {
    nlohmann::json arms = nlohmann::json::array();
    for (const AblationArm& arm : res.arms) {
        nlohmann::json per_seed = nlohmann::json::array();
        for (const EvalReport& rep : arm.per_seed) per_seed.push_back(to_json(rep));
        arms.push_back({{"value", arm.value}, {"mean", arm.mean}, {"per_seed", per_seed}});
    }
    return nlohmann::json{{"preset", res.preset},
                          {"key", res.key},
                          {"seeds", res.seeds},
                          {"arms", arms},
                          {"delta", res.delta}};
}

// Runs every arm of the preset over the same seed list (seed, seed+1, ...)
// and reports per-arm means plus arm - baseline deltas. Worlds depend only on
// the seed, so all arms of one seed train on identical data.
inline AblationResult cmd_ablate(const ExperimentConfig& base, const AblationPreset& preset,
                                 const std::string& out_dir, int seed_count = 5) {
    base.validate();
    if (seed_count < 1) throw std::invalid_argument("ablate: seed count must be >= 1");
    if (preset.arms.empty()) throw std::invalid_argument("ablate: preset has no arms");

    AblationResult res;
    res.preset = preset.name;
    res.key = preset.key;
    for (int s = 0; s < seed_count; ++s) res.seeds.push_back(base.seed + static_cast<std::uint64_t>(s));
    for (const std::string& value : preset.arms) res.arms.push_back(AblationArm{value, {}, {}});

    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    for (const std::uint64_t seed : res.seeds) {
        for (AblationArm& arm : res.arms) {
            ExperimentConfig cfg = base;
            config_set(cfg, preset.key, arm.value);
            cfg.seed = seed;
            cfg.apply_seed();
            cfg.validate();

            const DatasetSplit split =
                split_dataset(generate_world(cfg.world), cfg.world.label_fraction, cfg.seed);
            const std::vector<Scene> test = generate_test_scenes(cfg.world, cfg.test_scene_count);
            const ExperimentResult exp = run_experiment(cfg.train, cfg.world, split, test);

            EvalReport rep = evaluate_model(exp.theta_t, test, cfg.score_thr,
                                            cfg.train.selector.nms_iou);
            add_pseudo_diagnostics(rep, exp.theta_t, exp.theta_s, split.unlabeled,
                                   split.unlabeled_oracle, cfg.train.selector,
                                   cfg.train.assignment, cfg.train.regression);
            rep.config_hash = config_hash(cfg);
            if (!out_dir.empty())
                detail::write_json_file(out_dir + "/" + preset.name + "_" + arm.value + "_seed" +
                                            std::to_string(seed) + ".json",
                                        to_json(rep));
            arm.per_seed.push_back(std::move(rep));
        }
    }

    for (AblationArm& arm : res.arms) {
        for (const auto& col : detail::ablation_columns()) arm.mean[col] = 0.0;
        for (const EvalReport& rep : arm.per_seed)
            for (const auto& [col, v] : detail::report_columns(rep)) arm.mean[col] += v;
        for (auto& [col, v] : arm.mean) v /= static_cast<double>(arm.per_seed.size());
    }
    for (std::size_t a = 1; a < res.arms.size(); ++a) {
        std::map<std::string, double> d;
        for (const auto& col : detail::ablation_columns())
            d[col] = res.arms[a].mean.at(col) - res.arms[0].mean.at(col);
        res.delta[res.arms[a].value] = std::move(d);
    }

    if (!out_dir.empty()) {
        detail::write_text(out_dir + "/" + preset.name + ".csv", ablation_csv(res));
        detail::write_json_file(out_dir + "/" + preset.name + ".json", to_json(res));
    }
    return res;
}

inline AblationResult cmd_ablate(const ExperimentConfig& base, const std::string& preset_name,
                                 const std::string& out_dir, int seed_count = 5) {
    return cmd_ablate(base, ablation_preset(preset_name), out_dir, seed_count);
}

}  // namespace ssod
