#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "ssod/commands.hpp"

using namespace ssod;

namespace {

ExperimentConfig tiny_cfg() {
    ExperimentConfig c;
    c.world.grid_w = 8;
    c.world.grid_h = 8;
    c.world.feature_dim = 12;
    c.world.class_count = 2;
    c.world.boxes_min = 1;
    c.world.boxes_max = 2;
    c.world.box_min_size = 3.0;
    c.world.box_max_size = 6.0;
    c.world.scene_count = 30;
    c.world.label_fraction = 0.2;
    c.world.feature_noise_std = 0.05;
    c.train.lr = 0.1;
    c.train.lambda_u = 2.0;
    c.train.burn_in_iters = 6;
    c.train.mutual_iters = 8;
    c.train.batch_labeled = 3;
    c.train.batch_unlabeled = 3;
    c.train.ema_rate = 0.9;
    c.train.eval_interval = 2;
    c.seed = 3;
    c.test_scene_count = 4;
    c.apply_seed();
    return c;
}

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("ssod_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const int rc = std::system(("./ssod " + args).c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("config serialization round-trips", "[config]") {
    const ExperimentConfig cfg = tiny_cfg();
    const std::string text = serialize_config(cfg);
    const ExperimentConfig back = parse_config(text);
    CHECK(serialize_config(back) == text);
    CHECK(config_hash(back) == config_hash(cfg));

    const ExperimentConfig defaults;
    const ExperimentConfig defaults_back = parse_config(serialize_config(defaults));
    CHECK(serialize_config(defaults_back) == serialize_config(defaults));
}

TEST_CASE("config text tolerates comments and blank lines", "[config]") {
    const ExperimentConfig c = parse_config(
        "# a comment\n"
        "\n"
        "  lr = 0.3  \n"
        "seed = 5   # trailing comment\n"
        "selector = box-score\n");
    CHECK(c.train.lr == 0.3);
    CHECK(c.seed == 5);
    CHECK(c.world.generator_seed == 5);  // apply_seed ran
    CHECK(c.train.seed == 5);
    CHECK(c.train.selector.mode == SelectorConfig::Mode::box_score);
}

TEST_CASE("malformed config text is rejected", "[config]") {
    CHECK_THROWS_AS(parse_config("lr 0.3\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("= 5\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("lr =\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("lr = abc\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("grid_w = 2.5\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("no_such_key = 1\n"), std::invalid_argument);
}

TEST_CASE("config_set covers the enum keys", "[config]") {
    ExperimentConfig c;
    config_set(c, "selector", "class");
    CHECK(c.train.selector.mode == SelectorConfig::Mode::class_score);
    config_set(c, "selector", "box-score");
    CHECK(c.train.selector.mode == SelectorConfig::Mode::box_score);
    config_set(c, "assignment", "center-sampling");
    CHECK(c.train.assignment.kind == AssignmentStrategy::Kind::center_sampling);
    config_set(c, "assignment", "soft");
    CHECK(c.train.assignment.kind == AssignmentStrategy::Kind::soft_localization);
    config_set(c, "assignment", "standard");
    CHECK(c.train.assignment.kind == AssignmentStrategy::Kind::standard);
    config_set(c, "reg_loss", "none");
    CHECK(c.train.regression.kind == RegressionKind::none);
    config_set(c, "reg_loss", "confidence-l1");
    CHECK(c.train.regression.kind == RegressionKind::confidence_l1);
    config_set(c, "reg_loss", "listen2student");
    CHECK(c.train.regression.kind == RegressionKind::listen2student);
    config_set(c, "tau", "0.7");
    CHECK(c.train.selector.tau == 0.7);
    config_set(c, "sigma", "0.25");
    CHECK(c.train.regression.sigma == 0.25);
    CHECK_THROWS_AS(config_set(c, "selector", "best"), std::invalid_argument);
    CHECK_THROWS_AS(config_set(c, "reg_loss", "l1"), std::invalid_argument);
}

TEST_CASE("config hash tracks content", "[config]") {
    ExperimentConfig a = tiny_cfg();
    ExperimentConfig b = tiny_cfg();
    CHECK(config_hash(a) == config_hash(b));
    b.train.lr = 0.11;
    CHECK(config_hash(a) != config_hash(b));
    b = tiny_cfg();
    b.train.regression.kind = RegressionKind::none;
    CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("config files load from disk", "[config]") {
    const auto dir = fresh_dir("cfg");
    const auto path = dir / "exp.cfg";
    const ExperimentConfig cfg = tiny_cfg();
    {
        std::ofstream out(path);
        out << serialize_config(cfg);
    }
    const ExperimentConfig back = load_config(path.string());
    CHECK(serialize_config(back) == serialize_config(cfg));
    CHECK_THROWS_AS(load_config((dir / "missing.cfg").string()), std::runtime_error);
}

TEST_CASE("gen-data writes a reproducible dataset", "[cli]") {
    const auto dir = fresh_dir("gendata");
    const ExperimentConfig cfg = tiny_cfg();
    const GenDataResult res = cmd_gen_data(cfg, (dir / "a.jsonl").string());
    CHECK(res.scene_count == 30);
    CHECK(res.labeled_count == 6);  // floor(30 * 0.2)
    CHECK(res.box_count >= 30);
    cmd_gen_data(cfg, (dir / "b.jsonl").string());
    CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));

    const DatasetSplit split = read_dataset((dir / "a.jsonl").string());
    CHECK(split.labeled.size() == 6);
    CHECK(split.unlabeled.size() == 24);

    ExperimentConfig bad = cfg;
    bad.world.label_fraction = 0.0;
    CHECK_THROWS_AS(cmd_gen_data(bad, (dir / "c.jsonl").string()), std::invalid_argument);
}

TEST_CASE("train emits identical artifacts on identical inputs", "[cli]") {
    const auto dir = fresh_dir("train_twice");
    const ExperimentConfig cfg = tiny_cfg();
    const std::string data = (dir / "data.jsonl").string();
    cmd_gen_data(cfg, data);

    const TrainResult a = cmd_train(cfg, data, (dir / "run_a").string());
    const TrainResult b = cmd_train(cfg, data, (dir / "run_b").string());
    CHECK(a.log.mode == "mutual");
    CHECK(slurp(dir / "run_a/checkpoint.json") == slurp(dir / "run_b/checkpoint.json"));
    CHECK(slurp(dir / "run_a/trainlog.json") == slurp(dir / "run_b/trainlog.json"));

    ExperimentConfig supervised = cfg;
    supervised.train.mutual_iters = 0;
    const TrainResult s = cmd_train(supervised, data, (dir / "run_s").string());
    CHECK(s.log.mode == "supervised");
    CHECK(s.theta_t.w == s.theta_s.w);
}

TEST_CASE("resuming a checkpoint reproduces the uninterrupted artifacts", "[cli]") {
    const auto dir = fresh_dir("resume");
    const ExperimentConfig cfg = tiny_cfg();
    const std::string data = (dir / "data.jsonl").string();
    cmd_gen_data(cfg, data);

    const std::string full_dir = (dir / "full").string();
    cmd_train(cfg, data, full_dir);

    // Reconstruct the on-disk state an interruption right after the
    // iteration-10 persist would leave behind: checkpoint + log prefix.
    const std::string part_dir = (dir / "part").string();
    std::filesystem::create_directories(part_dir);
    const DatasetSplit split = read_dataset(data);
    const std::vector<Scene> test = generate_test_scenes(cfg.world, cfg.test_scene_count);
    bool captured = false;
    run_experiment(cfg.train, cfg.world, split, test, nullptr,
                   [&](int iteration, const DetectorParams& ts, const DetectorParams& tt,
                       const TrainLog& log_so_far) {
                       if (iteration != 10) return;
                       Checkpoint c;
                       c.config_hash = config_hash(cfg);
                       c.iteration = iteration;
                       c.theta_s = ts;
                       c.theta_t = tt;
                       write_checkpoint(c, part_dir + "/checkpoint.json");
                       detail::write_json_file(part_dir + "/trainlog.json", to_json(log_so_far));
                       captured = true;
                   });
    REQUIRE(captured);

    cmd_train(cfg, data, part_dir, part_dir + "/checkpoint.json");
    CHECK(slurp(full_dir + "/checkpoint.json") == slurp(part_dir + "/checkpoint.json"));
    CHECK(slurp(full_dir + "/trainlog.json") == slurp(part_dir + "/trainlog.json"));

    // A checkpoint from a different configuration is refused.
    ExperimentConfig other = cfg;
    other.train.lr = 0.2;
    CHECK_THROWS_AS(
        cmd_train(other, data, (dir / "other").string(), full_dir + "/checkpoint.json"),
        std::invalid_argument);
}

TEST_CASE("eval checks the config hash and reports deterministically", "[cli]") {
    const auto dir = fresh_dir("eval");
    const ExperimentConfig cfg = tiny_cfg();
    const std::string data = (dir / "data.jsonl").string();
    cmd_gen_data(cfg, data);
    const TrainResult tr = cmd_train(cfg, data, (dir / "run").string());

    const std::string rep_a = (dir / "rep_a.json").string();
    const EvalReport rep = cmd_eval(cfg, tr.checkpoint_path, data, rep_a);
    CHECK(rep.config_hash == config_hash(cfg));
    CHECK(rep.map_50_95 == tr.final_map);  // same model, same test scenes

    const std::string rep_b = (dir / "rep_b.json").string();
    cmd_eval(cfg, tr.checkpoint_path, data, rep_b);
    CHECK(slurp(rep_a) == slurp(rep_b));

    ExperimentConfig other = cfg;
    other.train.lambda_u = 1.0;
    CHECK_THROWS_AS(cmd_eval(other, tr.checkpoint_path, data), std::invalid_argument);
}

TEST_CASE("ablation presets and table plumbing", "[cli]") {
    const AblationPreset reg = ablation_preset("regression_compare");
    CHECK(reg.key == "reg_loss");
    REQUIRE(reg.arms.size() == 3);
    CHECK(reg.arms[0] == "none");
    CHECK(reg.arms[1] == "confidence-l1");
    CHECK(reg.arms[2] == "listen2student");
    CHECK(ablation_preset("selector_compare").key == "selector");
    CHECK(ablation_preset("assignment_compare").arms.size() == 3);
    CHECK_THROWS_AS(ablation_preset("everything"), std::invalid_argument);

    const auto& cols = detail::ablation_columns();
    for (const char* want : {"ap55", "ap85", "ap90", "ap95", "map_50_95", "pseudo_precision",
                             "beneficial_fraction"})
        CHECK(std::find(cols.begin(), cols.end(), want) != cols.end());

    ExperimentConfig base = tiny_cfg();
    CHECK_THROWS_AS(cmd_ablate(base, AblationPreset{"empty", "tau", {}}, "", 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(cmd_ablate(base, "regression_compare", "", 0), std::invalid_argument);
}

TEST_CASE("ablation deltas vanish between identical arms", "[cli]") {
    // Two arms that parse to the same tau: every run is bitwise identical,
    // so each delta column must be exactly zero.
    ExperimentConfig base = tiny_cfg();
    base.train.eval_interval = 0;
    const AblationPreset same{"same_tau", "tau", {"0.5", "0.50"}};
    const AblationResult res = cmd_ablate(base, same, "", 1);
    REQUIRE(res.arms.size() == 2);
    REQUIRE(res.seeds.size() == 1);
    CHECK(res.seeds[0] == base.seed);
    for (const auto& [arm, row] : res.delta)
        for (const auto& [col, v] : row) CHECK(v == 0.0);

    const std::string csv = ablation_csv(res);
    std::istringstream lines(csv);
    std::string header;
    std::getline(lines, header);
    CHECK(header.rfind("arm,ap50,", 0) == 0);
    int rows = 0;
    for (std::string line; std::getline(lines, line);) ++rows;
    CHECK(rows == 3);  // two arm rows + one delta row

    const nlohmann::json j = to_json(res);
    CHECK(j.at("preset") == "same_tau");
    CHECK(j.at("key") == "tau");
    REQUIRE(j.at("arms").size() == 2);
    CHECK(j.at("arms")[0].at("mean").contains("map_50_95"));
}

TEST_CASE("cli exit codes distinguish validation from runtime failures", "[cli]") {
    if (!std::filesystem::exists("ssod")) {
        WARN("ssod binary not next to the test runner; skipping subprocess checks");
        return;
    }
    const auto dir = fresh_dir("cli");
    const ExperimentConfig cfg = tiny_cfg();
    {
        std::ofstream out(dir / "good.cfg");
        out << serialize_config(cfg);
    }
    ExperimentConfig bad = cfg;
    bad.world.label_fraction = 0.0;
    {
        std::ofstream out(dir / "bad.cfg");
        out << serialize_config(bad);
    }
    const std::string quiet = " > /dev/null 2>&1";

    CHECK(run_cli(quiet) == 1);                  // no subcommand
    CHECK(run_cli("frobnicate" + quiet) == 1);   // unknown subcommand
    CHECK(run_cli("gen-data --config " + (dir / "missing.cfg").string() + " --out " +
                  (dir / "x.jsonl").string() + quiet) == 2);
    CHECK(run_cli("gen-data --config " + (dir / "bad.cfg").string() + " --out " +
                  (dir / "x.jsonl").string() + quiet) == 1);
    CHECK(run_cli("gen-data --config " + (dir / "good.cfg").string() + " --out " +
                  (dir / "data.jsonl").string() + quiet) == 0);
    CHECK(std::filesystem::exists(dir / "data.jsonl"));
    CHECK(run_cli("--help" + quiet) == 0);
}
