#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "ssod/commands.hpp"

// Thin argument parser over the command layer. Exit codes: 0 success,
// 1 validation error (bad flags, bad config, hash mismatch), 2 runtime error
// (I/O failure, training divergence).

int main(int argc, char** argv) {
    CLI::App app{"semi-supervised dense-detection laboratory"};
    app.require_subcommand(1);

    std::string config_path, out, data, checkpoint, resume, reg_loss, preset;
    std::uint64_t seed = 0;
    int seed_count = 5;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "config file (key = value lines); defaults used if omitted");
        sub->add_option("--seed", seed, "override the config seed");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate a dataset file");
    add_common(gen);
    gen->add_option("--out", out, "dataset file to write")->required();

    CLI::App* train = app.add_subcommand("train", "burn-in + mutual learning on a dataset");
    add_common(train);
    train->add_option("--data", data, "dataset file from gen-data")->required();
    train->add_option("--out", out, "output directory for checkpoint + log")->required();
    train->add_option("--resume", resume, "checkpoint to continue from");
    train->add_option("--reg-loss", reg_loss,
                      "override the unsupervised regression regime "
                      "(none | confidence-l1 | listen2student)");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval);
    eval->add_option("--checkpoint", checkpoint, "checkpoint file from train")->required();
    eval->add_option("--data", data, "dataset file (for pseudo-label diagnostics)")->required();
    eval->add_option("--out", out, "report JSON path; prints to stdout if omitted");

    CLI::App* ablate = app.add_subcommand("ablate", "run an ablation preset");
    add_common(ablate);
    ablate->add_option("preset", preset,
                       "selector_compare | assignment_compare | regression_compare")
        ->required();
    ablate->add_option("--out", out, "output directory for reports + tables")->required();
    ablate->add_option("--seeds", seed_count, "number of consecutive seeds per arm");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;  // help/version exit 0; bad usage is a validation error
    }

    try {
        ssod::ExperimentConfig cfg =
            config_path.empty() ? ssod::ExperimentConfig{} : ssod::load_config(config_path);
        for (CLI::App* sub : {gen, train, eval, ablate})
            if (sub->parsed() && sub->count("--seed") > 0) cfg.seed = seed;
        cfg.apply_seed();

        if (gen->parsed()) {
            const ssod::GenDataResult r = ssod::cmd_gen_data(cfg, out);
            std::printf("wrote %zu scenes (%zu labeled, %zu unlabeled), %zu boxes -> %s\n",
                        r.scene_count, r.labeled_count, r.scene_count - r.labeled_count,
                        r.box_count, out.c_str());
        } else if (train->parsed()) {
            if (!reg_loss.empty()) ssod::config_set(cfg, "reg_loss", reg_loss);
            const ssod::TrainResult r = ssod::cmd_train(cfg, data, out, resume);
            std::printf("mode=%s steps=%zu snapshots=%zu\n", r.log.mode.c_str(),
                        r.log.steps.size(), r.log.snapshots.size());
            std::printf("final mAP50-95 = %.4f\n", r.final_map);
            std::printf("checkpoint: %s\nlog: %s\n", r.checkpoint_path.c_str(),
                        r.log_path.c_str());
        } else if (eval->parsed()) {
            const ssod::EvalReport rep = ssod::cmd_eval(cfg, checkpoint, data, out);
            if (out.empty())
                std::printf("%s\n", ssod::to_json(rep).dump(2).c_str());
            else
                std::printf("report: %s\n", out.c_str());
            std::printf("mAP50-95 = %.4f  pseudo P/R = %.4f/%.4f\n", rep.map_50_95,
                        rep.pseudo_precision, rep.pseudo_recall);
        } else if (ablate->parsed()) {
            const ssod::AblationResult r = ssod::cmd_ablate(cfg, preset, out, seed_count);
            std::printf("%s", ssod::ablation_csv(r).c_str());
            std::printf("tables under %s\n", out.c_str());
        }
        return 0;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
