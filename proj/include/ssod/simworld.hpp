#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssod/assignment.hpp"
#include "ssod/geometry.hpp"
#include "ssod/rng.hpp"

namespace ssod {

struct WorldConfig {
    int grid_w = 16;
    int grid_h = 16;
    int feature_dim = 24;
    int class_count = 3;
    int boxes_min = 1;
    int boxes_max = 4;
    double box_min_size = 5.0;
    double box_max_size = 11.0;
    int scene_count = 500;
    double label_fraction = 0.1;
    double feature_noise_std = 0.02;
    double aug_weak_std = 0.01;
    double aug_strong_std = 0.12;
    double aug_drop_prob = 0.15;
    std::uint64_t generator_seed = 1;

    // [one-hot class | background flag | 4 normalized distances]. Centerness
    // is deliberately absent: the detector has to infer it from the distance
    // pattern, which a small head fit on few labels does poorly — and
    // background locations, whose context is the scene rectangle, present the
    // largest distance sums of all, so an underfit centerness head extrapolates
    // high values exactly where it was never supervised.
    int target_dim() const { return class_count + 5; }

    void validate() const {
        if (grid_w <= 0 || grid_h <= 0) throw std::invalid_argument("grid dims must be positive");
        if (feature_dim <= 0) throw std::invalid_argument("feature_dim must be positive");
        if (class_count <= 0) throw std::invalid_argument("class_count must be positive");
        if (boxes_min < 0 || boxes_max < boxes_min)
            throw std::invalid_argument("invalid boxes_per_scene range");
        if (box_min_size < 1.0 || box_max_size < box_min_size)
            throw std::invalid_argument("invalid box size range (area >= 1 cell required)");
        if (box_max_size > std::min(grid_w, grid_h))
            throw std::invalid_argument("box_max_size exceeds grid");
        if (scene_count <= 0) throw std::invalid_argument("scene_count must be positive");
        if (!(label_fraction > 0.0 && label_fraction <= 1.0))
            throw std::invalid_argument("label_fraction must be in (0,1]");
        if (feature_noise_std < 0.0 || aug_weak_std < 0.0 || aug_strong_std < 0.0)
            throw std::invalid_argument("noise std must be nonnegative");
        if (aug_drop_prob < 0.0 || aug_drop_prob > 1.0)
            throw std::invalid_argument("aug_drop_prob must be in [0,1]");
    }
};

// A grid of feature-bearing locations with ground-truth boxes.
struct Scene {
    int id = 0;
    int grid_w = 0;
    int grid_h = 0;
    int feature_dim = 0;
    std::vector<GtBox> boxes;
    std::vector<double> features;  // (grid_w * grid_h) x feature_dim, row-major

    std::size_t location_count() const { return static_cast<std::size_t>(grid_w) * grid_h; }
    const double* feature_at(std::size_t loc) const { return &features[loc * feature_dim]; }
    double* feature_at(std::size_t loc) { return &features[loc * feature_dim]; }
};

// The hidden linear map from per-location targets to features. One matrix per
// world; drawing it from the generator seed keeps every scene a pure function
// of (config, seed).
inline std::vector<double> world_feature_map(const WorldConfig& cfg) {
    Rng rng = make_stream(cfg.generator_seed, StreamTag::world_map);
    const int t = cfg.target_dim();
    std::vector<double> map(static_cast<std::size_t>(cfg.feature_dim) * t);
    const double scale = 1.0 / std::sqrt(static_cast<double>(t));
    for (auto& v : map) v = rng.normal(0.0, scale);
    return map;
}

// Per-location target vector feeding the hidden feature map. Foreground
// locations encode their assigned box; background locations encode the scene
// rectangle instead, so background features carry the same kind of geometric
// context (a location near the middle of the scene looks "central") without a
// class signature. Only the class/background block separates the two cases.
inline void location_target_vector(const WorldConfig& cfg, const LocationTargets& targets,
                                   std::size_t loc, int ix, int iy, std::vector<double>& out) {
    const int c = cfg.class_count;
    out.assign(cfg.target_dim(), 0.0);
    const double norm = static_cast<double>(std::max(cfg.grid_w, cfg.grid_h));
    if (targets.foreground(loc)) {
        out[targets.cls[loc]] = 1.0;
        const BoundaryDistances& d = targets.regression[loc];
        out[c + 1] = d.l / norm;
        out[c + 2] = d.t / norm;
        out[c + 3] = d.r / norm;
        out[c + 4] = d.b / norm;
    } else {
        out[c] = 1.0;
        const Box scene_rect{0.0, 0.0, static_cast<double>(cfg.grid_w),
                             static_cast<double>(cfg.grid_h)};
        const BoundaryDistances d = encode_distances(scene_rect, grid_location(cfg.grid_w, ix, iy));
        out[c + 1] = d.l / norm;
        out[c + 2] = d.t / norm;
        out[c + 3] = d.r / norm;
        out[c + 4] = d.b / norm;
    }
}

inline Scene generate_scene(const WorldConfig& cfg, int scene_index,
                            const std::vector<double>& feature_map) {
    Rng rng = make_stream(cfg.generator_seed, StreamTag::scene, static_cast<std::uint64_t>(scene_index));
    Scene s;
    s.id = scene_index;
    s.grid_w = cfg.grid_w;
    s.grid_h = cfg.grid_h;
    s.feature_dim = cfg.feature_dim;

    const int n_boxes = static_cast<int>(rng.uniform_int(cfg.boxes_min, cfg.boxes_max));
    for (int i = 0; i < n_boxes; ++i) {
        const double w = rng.uniform(cfg.box_min_size, cfg.box_max_size);
        const double h = rng.uniform(cfg.box_min_size, cfg.box_max_size);
        const double x1 = rng.uniform(0.0, cfg.grid_w - w);
        const double y1 = rng.uniform(0.0, cfg.grid_h - h);
        const int cls = static_cast<int>(rng.uniform_int(0, cfg.class_count - 1));
        s.boxes.push_back(GtBox{Box{x1, y1, x1 + w, y1 + h}, cls});
    }

    const LocationTargets targets = assign(s.boxes, cfg.grid_w, cfg.grid_h, AssignmentStrategy{});
    const int t = cfg.target_dim();
    s.features.assign(s.location_count() * cfg.feature_dim, 0.0);
    std::vector<double> tv;
    for (int iy = 0; iy < cfg.grid_h; ++iy) {
        for (int ix = 0; ix < cfg.grid_w; ++ix) {
            const std::size_t loc = static_cast<std::size_t>(iy) * cfg.grid_w + ix;
            location_target_vector(cfg, targets, loc, ix, iy, tv);
            double* x = s.feature_at(loc);
            for (int f = 0; f < cfg.feature_dim; ++f) {
                double acc = 0.0;
                for (int k = 0; k < t; ++k) acc += feature_map[static_cast<std::size_t>(f) * t + k] * tv[k];
                x[f] = acc + (cfg.feature_noise_std > 0.0 ? rng.normal(0.0, cfg.feature_noise_std) : 0.0);
            }
        }
    }
    return s;
}

inline std::vector<Scene> generate_world(const WorldConfig& cfg) {
    cfg.validate();
    const std::vector<double> feature_map = world_feature_map(cfg);
    std::vector<Scene> scenes;
    scenes.reserve(cfg.scene_count);
    for (int i = 0; i < cfg.scene_count; ++i) scenes.push_back(generate_scene(cfg, i, feature_map));
    return scenes;
}

// Held-out evaluation scenes from the same world, using scene indices beyond
// the training range so they never collide with the train/unlabeled pools.
inline std::vector<Scene> generate_test_scenes(const WorldConfig& cfg, int count) {
    cfg.validate();
    if (count < 0) throw std::invalid_argument("generate_test_scenes: count must be >= 0");
    const std::vector<double> feature_map = world_feature_map(cfg);
    std::vector<Scene> scenes;
    scenes.reserve(count);
    for (int i = 0; i < count; ++i)
        scenes.push_back(generate_scene(cfg, cfg.scene_count + i, feature_map));
    return scenes;
}

enum class AugStrength { weak, strong };

// Feature-space stand-in for image augmentation: weak adds small i.i.d.
// noise, strong adds larger noise plus per-location feature dropout.
// Ground truth is never touched.
inline Scene augment(const Scene& scene, AugStrength strength, const WorldConfig& cfg, Rng& rng) {
    Scene out = scene;
    const double std = strength == AugStrength::weak ? cfg.aug_weak_std : cfg.aug_strong_std;
    for (auto& v : out.features) v += (std > 0.0 ? rng.normal(0.0, std) : 0.0);
    if (strength == AugStrength::strong && cfg.aug_drop_prob > 0.0) {
        for (std::size_t loc = 0; loc < out.location_count(); ++loc) {
            if (rng.uniform() < cfg.aug_drop_prob) {
                double* x = out.feature_at(loc);
                for (int f = 0; f < out.feature_dim; ++f) x[f] = 0.0;
            }
        }
    }
    return out;
}

// Labeled/unlabeled pools. Unlabeled scenes are stored with their boxes
// stripped; the hidden boxes live in `unlabeled_oracle`, which only the
// evaluation path may read.
struct DatasetSplit {
    std::vector<Scene> labeled;
    std::vector<Scene> unlabeled;
    std::vector<std::vector<GtBox>> unlabeled_oracle;
    std::uint64_t seed = 0;
};

inline DatasetSplit split_dataset(std::vector<Scene> scenes, double label_fraction,
                                  std::uint64_t seed) {
    if (!(label_fraction > 0.0 && label_fraction <= 1.0))
        throw std::invalid_argument("split_dataset: label_fraction must be in (0,1]");
    const std::size_t n = scenes.size();
    const std::size_t n_labeled = static_cast<std::size_t>(std::floor(n * label_fraction));
    if (n_labeled == 0)
        throw std::invalid_argument("split_dataset: label_fraction too small, empty labeled split");

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = make_stream(seed, StreamTag::split);
    for (std::size_t i = n; i > 1; --i) {  // Fisher-Yates, pinned to our stream
        const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(order[i - 1], order[j]);
    }

    DatasetSplit split;
    split.seed = seed;
    for (std::size_t k = 0; k < n; ++k) {
        Scene& s = scenes[order[k]];
        if (k < n_labeled) {
            split.labeled.push_back(std::move(s));
        } else {
            split.unlabeled_oracle.push_back(std::move(s.boxes));
            s.boxes.clear();
            split.unlabeled.push_back(std::move(s));
        }
    }
    return split;
}

// --- dataset file: one JSON record per line ------------------------------

inline nlohmann::json scene_to_record(const Scene& s, bool labeled) {
    nlohmann::json rec;
    rec["id"] = s.id;
    rec["w"] = s.grid_w;
    rec["h"] = s.grid_h;
    rec["features"] = s.features;
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& gb : s.boxes)
        boxes.push_back({gb.box.x1, gb.box.y1, gb.box.x2, gb.box.y2, gb.cls});
    rec["boxes"] = boxes;
    rec["labeled"] = labeled;
    return rec;
}

inline Scene scene_from_record(const nlohmann::json& rec, bool* labeled) {
    Scene s;
    s.id = rec.at("id").get<int>();
    s.grid_w = rec.at("w").get<int>();
    s.grid_h = rec.at("h").get<int>();
    s.features = rec.at("features").get<std::vector<double>>();
    if (s.location_count() == 0 || s.features.size() % s.location_count() != 0)
        throw std::runtime_error("dataset record: feature array size does not match grid");
    s.feature_dim = static_cast<int>(s.features.size() / s.location_count());
    for (const auto& b : rec.at("boxes")) {
        GtBox gb{Box{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                     b.at(3).get<double>()},
                 b.at(4).get<int>()};
        if (!gb.box.valid()) throw std::runtime_error("dataset record: invalid box");
        s.boxes.push_back(gb);
    }
    if (labeled) *labeled = rec.at("labeled").get<bool>();
    return s;
}

// Writes labeled scenes first, then unlabeled (with their oracle boxes so the
// file round-trips; training strips them again on load).
inline void write_dataset(const DatasetSplit& split, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& s : split.labeled) out << scene_to_record(s, true).dump() << "\n";
    for (std::size_t i = 0; i < split.unlabeled.size(); ++i) {
        Scene s = split.unlabeled[i];
        s.boxes = split.unlabeled_oracle[i];
        out << scene_to_record(s, false).dump() << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline DatasetSplit read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset: " + path);
    DatasetSplit split;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        bool labeled = false;
        Scene s = scene_from_record(nlohmann::json::parse(line), &labeled);
        if (labeled) {
            split.labeled.push_back(std::move(s));
        } else {
            split.unlabeled_oracle.push_back(std::move(s.boxes));
            s.boxes.clear();
            split.unlabeled.push_back(std::move(s));
        }
    }
    if (split.labeled.empty()) throw std::runtime_error("dataset has no labeled scenes");
    return split;
}

}  // namespace ssod
