#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>

#include "ssod/trainer.hpp"

namespace ssod {

// Flat experiment configuration: one file, `key = value` lines, every key
// spelled out. A single `seed` drives world generation, the labeled split,
// and training.
struct ExperimentConfig {
    WorldConfig world;
    TrainConfig train;
    std::uint64_t seed = 1;
    double score_thr = 0.05;    // inference threshold for evaluation
    int test_scene_count = 100;  // held-out scenes generated for evaluation

    void validate() const {
        world.validate();
        train.validate();
        if (!(score_thr >= 0.0 && score_thr <= 1.0))
            throw std::invalid_argument("score_thr must be in [0,1]");
        if (test_scene_count < 0) throw std::invalid_argument("test_scene_count must be >= 0");
    }

    // The one seed feeds every stream consumer.
    void apply_seed() {
        world.generator_seed = seed;
        train.seed = seed;
    }
};

namespace detail {

inline std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string fmt(int v) { return std::to_string(v); }
inline std::string fmt(std::uint64_t v) { return std::to_string(v); }

inline double parse_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw std::invalid_argument("config key '" + key + "': invalid number '" + s + "'");
    return v;
}

inline long long parse_int(const std::string& key, const std::string& s) {
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw std::invalid_argument("config key '" + key + "': invalid integer '" + s + "'");
    return v;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw std::invalid_argument("config key '" + key + "': invalid integer '" + s + "'");
    return v;
}

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace detail

inline void config_set(ExperimentConfig& c, const std::string& key, const std::string& value) {
    using detail::parse_double;
    using detail::parse_int;
    using detail::parse_u64;
    if (key == "grid_w") c.world.grid_w = static_cast<int>(parse_int(key, value));
    else if (key == "grid_h") c.world.grid_h = static_cast<int>(parse_int(key, value));
    else if (key == "feature_dim") c.world.feature_dim = static_cast<int>(parse_int(key, value));
    else if (key == "class_count") c.world.class_count = static_cast<int>(parse_int(key, value));
    else if (key == "boxes_min") c.world.boxes_min = static_cast<int>(parse_int(key, value));
    else if (key == "boxes_max") c.world.boxes_max = static_cast<int>(parse_int(key, value));
    else if (key == "box_min_size") c.world.box_min_size = parse_double(key, value);
    else if (key == "box_max_size") c.world.box_max_size = parse_double(key, value);
    else if (key == "scene_count") c.world.scene_count = static_cast<int>(parse_int(key, value));
    else if (key == "label_fraction") c.world.label_fraction = parse_double(key, value);
    else if (key == "feature_noise_std") c.world.feature_noise_std = parse_double(key, value);
    else if (key == "aug_weak_std") c.world.aug_weak_std = parse_double(key, value);
    else if (key == "aug_strong_std") c.world.aug_strong_std = parse_double(key, value);
    else if (key == "aug_drop_prob") c.world.aug_drop_prob = parse_double(key, value);
    else if (key == "seed") c.seed = parse_u64(key, value);
    else if (key == "lr") c.train.lr = parse_double(key, value);
    else if (key == "lambda_u") c.train.lambda_u = parse_double(key, value);
    else if (key == "burn_in_iters") c.train.burn_in_iters = static_cast<int>(parse_int(key, value));
    else if (key == "mutual_iters") c.train.mutual_iters = static_cast<int>(parse_int(key, value));
    else if (key == "batch_labeled") c.train.batch_labeled = static_cast<int>(parse_int(key, value));
    else if (key == "batch_unlabeled") c.train.batch_unlabeled = static_cast<int>(parse_int(key, value));
    else if (key == "ema_rate") c.train.ema_rate = parse_double(key, value);
    else if (key == "eval_interval") c.train.eval_interval = static_cast<int>(parse_int(key, value));
    else if (key == "selector") {
        c.train.selector.mode = selector_mode_from_string(value);
    } else if (key == "tau") c.train.selector.tau = parse_double(key, value);
    else if (key == "nms_iou") c.train.selector.nms_iou = parse_double(key, value);
    else if (key == "assignment") c.train.assignment.kind = assignment_kind_from_string(value);
    else if (key == "cs_radius") c.train.assignment.cs_radius = parse_double(key, value);
    else if (key == "reg_loss") c.train.regression.kind = regression_kind_from_string(value);
    else if (key == "sigma") c.train.regression.sigma = parse_double(key, value);
    else if (key == "sigma_s") c.train.regression.sigma_s = parse_double(key, value);
    else if (key == "score_thr") c.score_thr = parse_double(key, value);
    else if (key == "test_scene_count") c.test_scene_count = static_cast<int>(parse_int(key, value));
    else throw std::invalid_argument("unknown config key: " + key);
}

inline std::string serialize_config(const ExperimentConfig& c) {
    using detail::fmt;
    std::ostringstream out;
    out << "grid_w = " << fmt(c.world.grid_w) << "\n"
        << "grid_h = " << fmt(c.world.grid_h) << "\n"
        << "feature_dim = " << fmt(c.world.feature_dim) << "\n"
        << "class_count = " << fmt(c.world.class_count) << "\n"
        << "boxes_min = " << fmt(c.world.boxes_min) << "\n"
        << "boxes_max = " << fmt(c.world.boxes_max) << "\n"
        << "box_min_size = " << fmt(c.world.box_min_size) << "\n"
        << "box_max_size = " << fmt(c.world.box_max_size) << "\n"
        << "scene_count = " << fmt(c.world.scene_count) << "\n"
        << "label_fraction = " << fmt(c.world.label_fraction) << "\n"
        << "feature_noise_std = " << fmt(c.world.feature_noise_std) << "\n"
        << "aug_weak_std = " << fmt(c.world.aug_weak_std) << "\n"
        << "aug_strong_std = " << fmt(c.world.aug_strong_std) << "\n"
        << "aug_drop_prob = " << fmt(c.world.aug_drop_prob) << "\n"
        << "seed = " << fmt(c.seed) << "\n"
        << "lr = " << fmt(c.train.lr) << "\n"
        << "lambda_u = " << fmt(c.train.lambda_u) << "\n"
        << "burn_in_iters = " << fmt(c.train.burn_in_iters) << "\n"
        << "mutual_iters = " << fmt(c.train.mutual_iters) << "\n"
        << "batch_labeled = " << fmt(c.train.batch_labeled) << "\n"
        << "batch_unlabeled = " << fmt(c.train.batch_unlabeled) << "\n"
        << "ema_rate = " << fmt(c.train.ema_rate) << "\n"
        << "eval_interval = " << fmt(c.train.eval_interval) << "\n"
        << "selector = " << (c.train.selector.mode == SelectorConfig::Mode::class_score ? "class" : "box-score") << "\n"
        << "tau = " << fmt(c.train.selector.tau) << "\n"
        << "nms_iou = " << fmt(c.train.selector.nms_iou) << "\n"
        << "assignment = " << to_string(c.train.assignment.kind) << "\n"
        << "cs_radius = " << fmt(c.train.assignment.cs_radius) << "\n"
        << "reg_loss = " << to_string(c.train.regression.kind) << "\n"
        << "sigma = " << fmt(c.train.regression.sigma) << "\n"
        << "sigma_s = " << fmt(c.train.regression.sigma_s) << "\n"
        << "score_thr = " << fmt(c.score_thr) << "\n"
        << "test_scene_count = " << fmt(c.test_scene_count) << "\n";
    return out.str();
}

// Parses `key = value` lines; '#' starts a comment; blank lines are skipped.
// Unknown keys are an error so typos cannot silently fall back to defaults.
inline ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": empty key or value");
        config_set(c, key, value);
    }
    c.apply_seed();
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

// FNV-1a over the canonical serialization; reports carry it so every arm of
// an ablation is auditable.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
    const std::string s = serialize_config(c);
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace ssod
