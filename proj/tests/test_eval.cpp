#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ssod/eval.hpp"
#include "ssod/rng.hpp"
#include "ssod/simworld.hpp"
#include "support/oracles.hpp"

using namespace ssod;

namespace {

// Inverse of softplus: softplus(presp(d)) == d up to rounding.
double presp(double d) { return std::log(std::expm1(d)); }

// A scene whose features let hand-built linear weights reproduce the ground
// truth exactly: feature 0 carries the class logit, features 1..4 carry the
// pre-softplus boundary distances.
struct OracleWorld {
    Scene scene;
    DetectorParams params{1, 5};
};

OracleWorld make_oracle_world() {
    OracleWorld ow;
    Scene& s = ow.scene;
    s.grid_w = 8;
    s.grid_h = 8;
    s.feature_dim = 5;
    s.boxes = {GtBox{Box{0, 0, 4, 4}, 0}, GtBox{Box{4, 4, 8, 8}, 0}};
    s.features.assign(64 * 5, 0.0);
    const LocationTargets t = assign(s.boxes, 8, 8, AssignmentStrategy{});
    for (std::size_t loc = 0; loc < 64; ++loc) {
        double* x = s.features.data() + loc * 5;
        if (t.foreground(loc)) {
            x[0] = 10.0;
            for (int b = 0; b < 4; ++b) x[1 + b] = presp(t.regression[loc][b]);
        } else {
            x[0] = -10.0;
        }
    }
    DetectorParams& p = ow.params;
    p.w[p.cls_weight(0, 0)] = 1.0;
    for (int b = 0; b < 4; ++b) p.w[p.reg_weight(b, 1 + b)] = 1.0;
    return ow;
}

// Far-apart slots so every detection overlaps at most one truth; greedy
// matching is then exactly per-pair and AP is monotone in the threshold.
void random_instance(Rng& rng, std::vector<Detection>& dets, std::vector<Truth>& truths) {
    dets.clear();
    truths.clear();
    for (int slot = 0; slot < 6; ++slot) {
        const double x0 = 20.0 * slot;
        const int cls = static_cast<int>(rng.uniform_int(0, 1));
        const bool has_truth = rng.uniform() < 0.8;
        if (has_truth) truths.push_back(Truth{0, Box{x0, 0, x0 + 6, 6}, cls});
        if (rng.uniform() < 0.85) {
            const double dx = rng.uniform(-2.0, 2.0), dy = rng.uniform(-2.0, 2.0);
            dets.push_back(
                Detection{0, Box{x0 + dx, dy, x0 + 6 + dx, 6 + dy}, cls, rng.uniform()});
        }
        if (rng.uniform() < 0.3)  // stray far-off detection
            dets.push_back(Detection{0, Box{x0 + 8, 12, x0 + 10, 14}, cls, rng.uniform()});
    }
}

}  // namespace

TEST_CASE("ap at the extremes", "[eval]") {
    const std::vector<Truth> truths{{0, Box{0, 0, 4, 4}, 0}, {1, Box{2, 2, 8, 8}, 1}};
    std::vector<Detection> perfect;
    for (const Truth& t : truths) perfect.push_back(Detection{t.scene, t.box, t.cls, 0.9});
    for (int thr = 50; thr <= 95; thr += 5)
        CHECK(compute_ap(perfect, truths, thr / 100.0) == 1.0);

    const std::vector<Detection> wrong{{0, Box{20, 20, 24, 24}, 0, 0.9}};
    CHECK(compute_ap(wrong, truths, 0.5) == 0.0);
    CHECK(compute_ap({}, truths, 0.5) == 0.0);
    CHECK(compute_ap({}, {}, 0.5) == 1.0);  // vacuous

    const auto bk = ap_breakdown(perfect, truths);
    REQUIRE(bk.size() == 9);
    REQUIRE(bk.count(55) == 1);
    REQUIRE(bk.count(95) == 1);
    for (const auto& [t, v] : bk) CHECK(v == 1.0);
    for (const auto& [t, v] : ap_breakdown({}, truths)) CHECK(v == 0.0);
}

TEST_CASE("worked example: one fp between two tps", "[eval]") {
    const std::vector<Truth> truths{{0, Box{0, 0, 4, 4}, 0}, {0, Box{10, 10, 14, 14}, 0}};
    const std::vector<Detection> dets{{0, Box{0, 0, 4, 4}, 0, 0.9},
                                      {0, Box{20, 20, 24, 24}, 0, 0.8},
                                      {0, Box{10, 10, 14, 14}, 0, 0.7}};
    const double ap = compute_ap(dets, truths, 0.5);
    CHECK(ap == Catch::Approx(253.0 / 303.0).margin(1e-12));
    CHECK(ap == Catch::Approx(oracle::compute_ap_bruteforce(dets, truths, 0.5)).margin(1e-12));
}

TEST_CASE("uniform localization error cuts off at its iou", "[eval]") {
    const std::vector<Truth> truths{{0, Box{1, 1, 11, 11}, 0}};
    // Half-cell shift: IoU = 100/121, between the 0.80 and 0.85 thresholds.
    const std::vector<Detection> dets{{0, Box{0.5, 0.5, 11.5, 11.5}, 0, 0.9}};
    const auto bk = ap_breakdown(dets, truths);
    for (int t = 55; t <= 80; t += 5) CHECK(bk.at(t) == 1.0);
    for (int t = 85; t <= 95; t += 5) CHECK(bk.at(t) == 0.0);
}

TEST_CASE("ap agrees with a brute-force oracle", "[eval]") {
    Rng rng = make_stream(21, StreamTag::scene, 0);
    std::vector<Detection> dets;
    std::vector<Truth> truths;
    for (int rep = 0; rep < 200; ++rep) {
        random_instance(rng, dets, truths);
        for (const double thr : {0.5, 0.75, 0.95}) {
            const double a = compute_ap(dets, truths, thr);
            const double b = oracle::compute_ap_bruteforce(dets, truths, thr);
            CHECK(a == Catch::Approx(b).margin(1e-12));
        }
    }
}

TEST_CASE("ap never improves as the threshold tightens", "[eval]") {
    Rng rng = make_stream(22, StreamTag::scene, 0);
    std::vector<Detection> dets;
    std::vector<Truth> truths;
    for (int rep = 0; rep < 100; ++rep) {
        random_instance(rng, dets, truths);
        double prev = compute_ap(dets, truths, 0.5);
        for (int t = 55; t <= 95; t += 5) {
            const double cur = compute_ap(dets, truths, t / 100.0);
            CHECK(cur <= prev + 1e-12);
            prev = cur;
        }
    }
}

TEST_CASE("ap depends on scores only through their order", "[eval]") {
    Rng rng = make_stream(23, StreamTag::scene, 0);
    std::vector<Detection> dets;
    std::vector<Truth> truths;
    random_instance(rng, dets, truths);
    REQUIRE(!dets.empty());
    const double base = compute_ap(dets, truths, 0.5);
    auto transformed = dets;
    for (auto& d : transformed) d.score = 2.0 * d.score + 1.0;
    CHECK(compute_ap(transformed, truths, 0.5) == base);
    for (std::size_t i = 0; i < dets.size(); ++i) transformed[i].score = std::exp(dets[i].score);
    CHECK(compute_ap(transformed, truths, 0.5) == base);
}

TEST_CASE("a detector matching the generator scores a perfect map", "[eval]") {
    const OracleWorld ow = make_oracle_world();
    const EvalReport rep = evaluate_model(ow.params, {ow.scene});
    CHECK(rep.map_50_95 == 1.0);
    for (const auto& [t, v] : rep.ap) CHECK(v == 1.0);
    REQUIRE(rep.per_class.count(0) == 1);
    CHECK(rep.per_class.at(0) == 1.0);
}

TEST_CASE("an untrained detector scores near zero", "[eval]") {
    const WorldConfig w;  // default 16x16 world
    const std::vector<Scene> test = generate_test_scenes(w, 20);
    const DetectorParams zero(w.class_count, w.feature_dim);
    const EvalReport rep = evaluate_model(zero, test);
    CHECK(rep.map_50_95 < 0.05);
}

TEST_CASE("evaluation is pure and self-consistent", "[eval]") {
    const OracleWorld ow = make_oracle_world();
    const EvalReport a = evaluate_model(ow.params, {ow.scene});
    const EvalReport b = evaluate_model(ow.params, {ow.scene});
    CHECK(to_json(a).dump() == to_json(b).dump());

    double sum = 0.0;
    for (const auto& [t, v] : a.ap) sum += v;
    REQUIRE(a.ap.size() == 10);
    CHECK(a.map_50_95 == sum / 10.0);
}

TEST_CASE("pseudo diagnostics for a perfect teacher", "[eval]") {
    const OracleWorld ow = make_oracle_world();
    const DetectorParams student(1, 5);  // untrained: delta_s = 1 everywhere
    EvalReport rep;
    SelectorConfig sel;
    sel.mode = SelectorConfig::Mode::class_score;
    sel.tau = 0.05;
    RegressionRegime regime;
    regime.sigma = 0.0;
    regime.sigma_s = 0.0;
    add_pseudo_diagnostics(rep, ow.params, student, {ow.scene}, {ow.scene.boxes}, sel,
                           AssignmentStrategy{}, regime);
    CHECK(rep.pseudo_precision == 1.0);
    CHECK(rep.pseudo_recall == 1.0);
    CHECK(rep.assignment_precision == 1.0);
    CHECK(rep.assignment_recall == 1.0);
    // Teacher distances equal the truth, so every selected boundary helps.
    CHECK(rep.selection.candidate_count == 32 * 4);
    CHECK(rep.selection.selected_count > 0);
    CHECK(rep.selection.beneficial_fraction == 1.0);
    CHECK(rep.selection.misleading_fraction == 0.0);
}

TEST_CASE("report json carries the ap table", "[eval]") {
    const OracleWorld ow = make_oracle_world();
    EvalReport rep = evaluate_model(ow.params, {ow.scene});
    rep.config_hash = 77;
    const nlohmann::json j = to_json(rep);
    REQUIRE(j.contains("ap"));
    CHECK(j.at("ap").contains("0.50"));
    CHECK(j.at("ap").contains("0.95"));
    CHECK(j.at("ap").at("0.50").get<double>() == 1.0);
    CHECK(j.at("map_50_95").get<double>() == 1.0);
    CHECK(j.at("config_hash").get<std::uint64_t>() == 77);
    CHECK(j.contains("pseudo_precision"));
    CHECK(j.contains("selection"));
}
