#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssod/eval.hpp"
#include "ssod/losses.hpp"

namespace ssod {

struct TrainConfig {
    double lr = 0.2;
    double lambda_u = 3.0;
    int burn_in_iters = 800;
    int mutual_iters = 2000;
    int batch_labeled = 8;
    int batch_unlabeled = 8;
    double ema_rate = 0.996;
    std::uint64_t seed = 1;
    int eval_interval = 500;  // snapshot cadence during mutual learning; 0 = end only
    SelectorConfig selector;
    AssignmentStrategy assignment;
    RegressionRegime regression;

    void validate() const {
        if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be positive");
        if (lambda_u < 0.0) throw std::invalid_argument("lambda_u must be >= 0");
        if (burn_in_iters < 0 || mutual_iters < 0) throw std::invalid_argument("iteration counts must be >= 0");
        if (batch_labeled < 1) throw std::invalid_argument("batch_labeled must be >= 1");
        if (batch_unlabeled < 0) throw std::invalid_argument("batch_unlabeled must be >= 0");
        if (!(ema_rate >= 0.0 && ema_rate < 1.0)) throw std::invalid_argument("ema_rate must be in [0,1)");
        if (eval_interval < 0) throw std::invalid_argument("eval_interval must be >= 0");
        if (!(selector.tau >= 0.0 && selector.tau <= 1.0)) throw std::invalid_argument("tau must be in [0,1]");
        if (!(selector.nms_iou >= 0.0 && selector.nms_iou <= 1.0)) throw std::invalid_argument("nms_iou must be in [0,1]");
        regression.validate();
    }
};

struct StepRecord {
    int iteration = 0;
    double l_sup_cls = 0.0, l_sup_ctr = 0.0, l_sup_reg = 0.0;
    double l_unsup_cls = 0.0, l_unsup_reg = 0.0;  // unweighted; total applies lambda_u
    double total = 0.0;
    std::size_t pseudo_boxes = 0;
    std::size_t reg_candidates = 0;
    std::size_t reg_selected = 0;
};

struct EvalSnapshot {
    int iteration = 0;
    double map_50_95 = 0.0;
    double pseudo_precision = 0.0, pseudo_recall = 0.0;
    double beneficial_fraction = 0.0, misleading_fraction = 0.0;
    std::uint64_t theta_s_hash = 0, theta_t_hash = 0;
};

struct TrainLog {
    std::string mode = "supervised";  // "mutual" once unlabeled data is in play
    std::vector<StepRecord> steps;
    std::vector<EvalSnapshot> snapshots;
};

inline void sgd_step(DetectorParams& p, const std::vector<double>& grad, double lr) {
    if (grad.size() != p.size()) throw std::invalid_argument("sgd_step: gradient size mismatch");
    for (std::size_t i = 0; i < p.w.size(); ++i) p.w[i] -= lr * grad[i];
}

// theta_t <- alpha * theta_t + (1 - alpha) * theta_s. The only way teacher
// parameters ever change.
inline void ema_update(DetectorParams& theta_t, const DetectorParams& theta_s, double alpha) {
    if (theta_t.size() != theta_s.size()) throw std::invalid_argument("ema_update: shape mismatch");
    for (std::size_t i = 0; i < theta_t.w.size(); ++i)
        theta_t.w[i] = alpha * theta_t.w[i] + (1.0 - alpha) * theta_s.w[i];
}

// A boundary kept by the regression regime at the step's base point. Only the
// teacher-side target is stored; the student side is recomputed from the
// parameters being differentiated.
struct FrozenBoundary {
    std::size_t location = 0;
    int boundary = 0;
    double d_t = 0.0;
};

// Everything in one optimization step that does not move with the student
// parameters: augmented views, assignment targets, frozen IoU weights, the
// teacher's pseudo-boxes, and the frozen boundary-selection sets. The step
// objective is a smooth function of the parameters given this structure,
// which is what makes finite-difference verification of the step exact.
struct BatchStructure {
    std::vector<Scene> labeled;  // weak-augmented
    std::vector<LocationTargets> labeled_targets;
    std::vector<std::vector<double>> etas;  // frozen per labeled scene
    std::vector<Scene> unlabeled;           // strong-augmented student views
    std::vector<LocationTargets> unsup_targets;
    std::vector<std::vector<FrozenBoundary>> reg_active;
    std::vector<std::size_t> reg_candidates_scene;  // per unlabeled scene
    std::vector<std::size_t> pseudo_boxes_scene;    // per unlabeled scene
    std::size_t pseudo_box_count = 0;
    std::size_t candidate_count = 0;
    std::size_t selected_count = 0;
};

inline std::vector<std::size_t> sample_batch(std::uint64_t seed, StreamTag tag, int iteration,
                                             std::size_t pool, int batch) {
    Rng rng = make_stream(seed, tag, static_cast<std::uint64_t>(iteration));
    std::vector<std::size_t> idx(batch);
    for (int k = 0; k < batch; ++k)
        idx[k] = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool) - 1));
    return idx;
}

// Assembles the frozen structure for one step. theta_s enters only through
// the frozen eta weights and the boundary-selection sets.
inline BatchStructure build_batch_structure(const DetectorParams& theta_s,
                                            const DetectorParams& theta_t,
                                            const DatasetSplit& split, const WorldConfig& world,
                                            const TrainConfig& cfg, int iteration,
                                            bool with_unlabeled) {
    BatchStructure bs;
    const auto lab_idx = sample_batch(cfg.seed, StreamTag::batch_labeled, iteration,
                                      split.labeled.size(), cfg.batch_labeled);
    for (std::size_t k = 0; k < lab_idx.size(); ++k) {
        Rng aug_rng = make_stream(cfg.seed, StreamTag::aug, static_cast<std::uint64_t>(iteration), k, 0);
        Scene view = augment(split.labeled[lab_idx[k]], AugStrength::weak, world, aug_rng);
        LocationTargets t = assign(view.boxes, view.grid_w, view.grid_h, cfg.assignment);
        bs.etas.push_back(regression_etas(theta_s, view, t));
        bs.labeled.push_back(std::move(view));
        bs.labeled_targets.push_back(std::move(t));
    }
    if (!with_unlabeled || split.unlabeled.empty() || cfg.batch_unlabeled == 0) return bs;

    const auto unl_idx = sample_batch(cfg.seed, StreamTag::batch_unlabeled, iteration,
                                      split.unlabeled.size(), cfg.batch_unlabeled);
    for (std::size_t k = 0; k < unl_idx.size(); ++k) {
        const Scene& base = split.unlabeled[unl_idx[k]];
        Rng weak_rng = make_stream(cfg.seed, StreamTag::aug, static_cast<std::uint64_t>(iteration), k, 1);
        Rng strong_rng = make_stream(cfg.seed, StreamTag::aug, static_cast<std::uint64_t>(iteration), k, 2);
        const Scene teacher_view = augment(base, AugStrength::weak, world, weak_rng);
        Scene student_view = augment(base, AugStrength::strong, world, strong_rng);

        const std::vector<PseudoBox> pseudo =
            select_pseudo_boxes(forward(theta_t, teacher_view), cfg.selector);
        bs.pseudo_box_count += pseudo.size();
        bs.pseudo_boxes_scene.push_back(pseudo.size());
        std::vector<GtBox> pseudo_gt;
        for (const PseudoBox& pb : pseudo) pseudo_gt.push_back(GtBox{pb.box, pb.cls});
        bs.unsup_targets.push_back(
            assign(pseudo_gt, student_view.grid_w, student_view.grid_h, cfg.assignment));

        const std::vector<BoundaryCandidate> cand =
            build_boundary_candidates(pseudo, forward(theta_s, student_view));
        const std::vector<std::size_t> active = active_boundaries(cand, cfg.regression);
        bs.reg_candidates_scene.push_back(cand.size());
        bs.candidate_count += cand.size();
        bs.selected_count += active.size();
        std::vector<FrozenBoundary> frozen;
        frozen.reserve(active.size());
        for (std::size_t i : active)
            frozen.push_back(FrozenBoundary{cand[i].location, cand[i].boundary, cand[i].d_t});
        bs.reg_active.push_back(std::move(frozen));
        bs.unlabeled.push_back(std::move(student_view));
    }
    return bs;
}

// L_sup + lambda_u * L_unsup and its gradient at `params`, holding the batch
// structure fixed. Supervised terms average over labeled scenes; unsupervised
// terms average over unlabeled scenes.
inline StepRecord step_objective(const DetectorParams& params, const BatchStructure& bs,
                                 const TrainConfig& cfg, std::vector<double>* grad_out) {
    StepRecord rec;
    std::vector<double> grad(params.size(), 0.0);
    const double inv_l = 1.0 / static_cast<double>(bs.labeled.size());
    for (std::size_t i = 0; i < bs.labeled.size(); ++i) {
        rec.l_sup_cls += classification_loss_into(params, bs.labeled[i], bs.labeled_targets[i],
                                                  inv_l, grad) * inv_l;
        rec.l_sup_ctr += centerness_loss_into(params, bs.labeled[i], bs.labeled_targets[i],
                                              inv_l, grad) * inv_l;
        rec.l_sup_reg += npll_loss_into(params, bs.labeled[i], bs.labeled_targets[i], bs.etas[i],
                                        inv_l, grad) * inv_l;
    }
    if (!bs.unlabeled.empty()) {
        const double inv_u = 1.0 / static_cast<double>(bs.unlabeled.size());
        for (std::size_t i = 0; i < bs.unlabeled.size(); ++i) {
            // A scene the teacher found nothing in carries no pseudo evidence:
            // it must not supervise the student (not even toward background),
            // so an empty pseudo set reduces the step to supervised-only.
            if (bs.pseudo_boxes_scene[i] > 0)
                rec.l_unsup_cls += classification_loss_into(params, bs.unlabeled[i],
                                                            bs.unsup_targets[i],
                                                            cfg.lambda_u * inv_u, grad) * inv_u;
            // Per-scene L1 normalized by the candidate count, so the scale is
            // comparable across regimes and selection sizes.
            const double inv_c = 1.0 / std::max<std::size_t>(bs.reg_candidates_scene[i], 1);
            const double w = cfg.lambda_u * inv_u * inv_c;
            for (const FrozenBoundary& fb : bs.reg_active[i]) {
                const double* x = bs.unlabeled[i].feature_at(fb.location);
                const double z = params.dot_row(params.reg_weight(fb.boundary, 0), x) +
                                 params.w[params.reg_bias(fb.boundary)];
                const double diff = softplus(z) - fb.d_t;
                rec.l_unsup_reg += std::abs(diff) * inv_u * inv_c;
                const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                detail::add_row_grad(params, params.reg_weight(fb.boundary, 0),
                                     params.reg_bias(fb.boundary), x, w * sign * sigmoid(z), grad);
            }
        }
    }
    rec.total = rec.l_sup_cls + rec.l_sup_ctr + rec.l_sup_reg +
                cfg.lambda_u * (rec.l_unsup_cls + rec.l_unsup_reg);
    rec.pseudo_boxes = bs.pseudo_box_count;
    rec.reg_candidates = bs.candidate_count;
    rec.reg_selected = bs.selected_count;
    if (grad_out) *grad_out = std::move(grad);
    return rec;
}

inline void check_finite(const StepRecord& rec, const BatchStructure& bs) {
    if (std::isfinite(rec.total)) return;
    std::string ids;
    for (const Scene& s : bs.labeled) ids += " L" + std::to_string(s.id);
    for (const Scene& s : bs.unlabeled) ids += " U" + std::to_string(s.id);
    throw std::runtime_error("training diverged: non-finite loss at iteration " +
                             std::to_string(rec.iteration) + "; batch scenes:" + ids);
}

// One mutual-learning step: teacher pseudo-labels weak views, student trains
// on strong views, then the teacher follows by EMA. No gradient ever reaches
// theta_t: it enters only through detached pseudo-labels and the EMA blend.
inline StepRecord mutual_learning_step(DetectorParams& theta_s, DetectorParams& theta_t,
                                       const DatasetSplit& split, const WorldConfig& world,
                                       const TrainConfig& cfg, int iteration) {
    const BatchStructure bs =
        build_batch_structure(theta_s, theta_t, split, world, cfg, iteration, true);
    std::vector<double> grad;
    StepRecord rec = step_objective(theta_s, bs, cfg, &grad);
    rec.iteration = iteration;
    check_finite(rec, bs);
    sgd_step(theta_s, grad, cfg.lr);
    ema_update(theta_t, theta_s, cfg.ema_rate);
    return rec;
}

// Supervised-only steps on the labeled pool, from zero-initialized
// parameters unless a starting point is provided.
inline DetectorParams run_burn_in(const TrainConfig& cfg, const DatasetSplit& split,
                                  const WorldConfig& world, TrainLog* log = nullptr,
                                  const DetectorParams* init = nullptr, int start_iter = 0) {
    if (split.labeled.empty()) throw std::invalid_argument("run_burn_in: no labeled scenes");
    DetectorParams params = init ? *init : DetectorParams(world.class_count, world.feature_dim);
    for (int it = start_iter; it < cfg.burn_in_iters; ++it) {
        const BatchStructure bs = build_batch_structure(params, params, split, world, cfg, it, false);
        std::vector<double> grad;
        StepRecord rec = step_objective(params, bs, cfg, &grad);
        rec.iteration = it;
        check_finite(rec, bs);
        sgd_step(params, grad, cfg.lr);
        if (log) log->steps.push_back(rec);
    }
    return params;
}

inline std::uint64_t params_hash(const DetectorParams& p) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a over the raw doubles
    for (double v : p.w) {
        std::uint64_t bits;
        static_assert(sizeof bits == sizeof v);
        std::memcpy(&bits, &v, sizeof bits);
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xff;
            h *= 1099511628211ull;
        }
    }
    return h;
}

struct ExperimentResult {
    DetectorParams theta_s;
    DetectorParams theta_t;
    TrainLog log;
};

struct Checkpoint {
    int version = 1;
    std::uint64_t config_hash = 0;
    int iteration = 0;
    DetectorParams theta_s;
    DetectorParams theta_t;
};

inline EvalSnapshot take_snapshot(int iteration, const DetectorParams& theta_s,
                                  const DetectorParams& theta_t, const DatasetSplit& split,
                                  const std::vector<Scene>& test_scenes, const TrainConfig& cfg) {
    EvalSnapshot snap;
    snap.iteration = iteration;
    EvalReport rep;
    if (!test_scenes.empty()) rep = evaluate_model(theta_t, test_scenes);
    if (!split.unlabeled.empty())
        add_pseudo_diagnostics(rep, theta_t, theta_s, split.unlabeled, split.unlabeled_oracle,
                               cfg.selector, cfg.assignment, cfg.regression);
    snap.map_50_95 = rep.map_50_95;
    snap.pseudo_precision = rep.pseudo_precision;
    snap.pseudo_recall = rep.pseudo_recall;
    snap.beneficial_fraction = rep.selection.beneficial_fraction;
    snap.misleading_fraction = rep.selection.misleading_fraction;
    snap.theta_s_hash = params_hash(theta_s);
    snap.theta_t_hash = params_hash(theta_t);
    return snap;
}

// Burn-in, then mutual learning with periodic evaluation snapshots. The
// teacher starts as an exact copy of the burned-in student. mutual_iters = 0
// reduces to the supervised baseline with theta_t = theta_s. Because every
// random stream is keyed by (seed, purpose, iteration), continuing from a
// checkpoint reproduces the uninterrupted run exactly; `resume` holds the
// starting state and `on_snapshot` lets callers persist state mid-run.
using SnapshotHook = std::function<void(int iteration, const DetectorParams& theta_s,
                                        const DetectorParams& theta_t, const TrainLog& log_so_far)>;

inline ExperimentResult run_experiment(const TrainConfig& cfg, const WorldConfig& world,
                                       const DatasetSplit& split,
                                       const std::vector<Scene>& test_scenes = {},
                                       const Checkpoint* resume = nullptr,
                                       const SnapshotHook& on_snapshot = {}) {
    ExperimentResult res;
    res.log.mode = cfg.mutual_iters > 0 ? "mutual" : "supervised";
    const int start = resume ? resume->iteration : 0;
    if (start < cfg.burn_in_iters) {
        res.theta_s = run_burn_in(cfg, split, world, &res.log,
                                  resume ? &resume->theta_s : nullptr, start);
        res.theta_t = res.theta_s;
        res.log.snapshots.push_back(take_snapshot(cfg.burn_in_iters, res.theta_s, res.theta_t,
                                                  split, test_scenes, cfg));
        if (on_snapshot) on_snapshot(cfg.burn_in_iters, res.theta_s, res.theta_t, res.log);
    } else {
        res.theta_s = resume->theta_s;
        res.theta_t = resume->theta_t;
    }
    const int k0 = std::max(0, start - cfg.burn_in_iters);
    for (int k = k0; k < cfg.mutual_iters; ++k) {
        const int it = cfg.burn_in_iters + k;
        res.log.steps.push_back(
            mutual_learning_step(res.theta_s, res.theta_t, split, world, cfg, it));
        const bool last = k + 1 == cfg.mutual_iters;
        if (last || (cfg.eval_interval > 0 && (k + 1) % cfg.eval_interval == 0)) {
            res.log.snapshots.push_back(
                take_snapshot(it + 1, res.theta_s, res.theta_t, split, test_scenes, cfg));
            if (on_snapshot) on_snapshot(it + 1, res.theta_s, res.theta_t, res.log);
        }
    }
    return res;
}

// --- serialization --------------------------------------------------------

inline nlohmann::json to_json(const Checkpoint& c) {
    return nlohmann::json{{"version", c.version},
                          {"config_hash", c.config_hash},
                          {"iteration", c.iteration},
                          {"class_count", c.theta_s.class_count},
                          {"feature_dim", c.theta_s.feature_dim},
                          {"theta_s", c.theta_s.w},
                          {"theta_t", c.theta_t.w}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    Checkpoint c;
    c.version = j.at("version").get<int>();
    if (c.version != 1) throw std::runtime_error("unsupported checkpoint version");
    c.config_hash = j.at("config_hash").get<std::uint64_t>();
    c.iteration = j.at("iteration").get<int>();
    const int cls = j.at("class_count").get<int>();
    const int fd = j.at("feature_dim").get<int>();
    c.theta_s = DetectorParams(cls, fd);
    c.theta_t = DetectorParams(cls, fd);
    c.theta_s.w = j.at("theta_s").get<std::vector<double>>();
    c.theta_t.w = j.at("theta_t").get<std::vector<double>>();
    if (c.theta_s.w.size() != DetectorParams::param_count(cls, fd) ||
        c.theta_t.w.size() != DetectorParams::param_count(cls, fd))
        throw std::runtime_error("checkpoint parameter array has wrong length");
    return c;
}

inline void write_checkpoint(const Checkpoint& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << to_json(c).dump() << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    nlohmann::json j;
    in >> j;
    return checkpoint_from_json(j);
}

inline nlohmann::json to_json(const StepRecord& r) {
    return nlohmann::json{{"iteration", r.iteration},
                          {"l_sup_cls", r.l_sup_cls},
                          {"l_sup_ctr", r.l_sup_ctr},
                          {"l_sup_reg", r.l_sup_reg},
                          {"l_unsup_cls", r.l_unsup_cls},
                          {"l_unsup_reg", r.l_unsup_reg},
                          {"total", r.total},
                          {"pseudo_boxes", r.pseudo_boxes},
                          {"reg_candidates", r.reg_candidates},
                          {"reg_selected", r.reg_selected}};
}

inline nlohmann::json to_json(const EvalSnapshot& s) {
    return nlohmann::json{{"iteration", s.iteration},
                          {"map_50_95", s.map_50_95},
                          {"pseudo_precision", s.pseudo_precision},
                          {"pseudo_recall", s.pseudo_recall},
                          {"beneficial_fraction", s.beneficial_fraction},
                          {"misleading_fraction", s.misleading_fraction},
                          {"theta_s_hash", s.theta_s_hash},
                          {"theta_t_hash", s.theta_t_hash}};
}

inline nlohmann::json to_json(const TrainLog& log) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& r : log.steps) steps.push_back(to_json(r));
    nlohmann::json snaps = nlohmann::json::array();
    for (const auto& s : log.snapshots) snaps.push_back(to_json(s));
    return nlohmann::json{{"mode", log.mode}, {"steps", steps}, {"snapshots", snaps}};
}

inline TrainLog trainlog_from_json(const nlohmann::json& j) {
    TrainLog log;
    log.mode = j.at("mode").get<std::string>();
    for (const auto& r : j.at("steps")) {
        StepRecord s;
        s.iteration = r.at("iteration").get<int>();
        s.l_sup_cls = r.at("l_sup_cls").get<double>();
        s.l_sup_ctr = r.at("l_sup_ctr").get<double>();
        s.l_sup_reg = r.at("l_sup_reg").get<double>();
        s.l_unsup_cls = r.at("l_unsup_cls").get<double>();
        s.l_unsup_reg = r.at("l_unsup_reg").get<double>();
        s.total = r.at("total").get<double>();
        s.pseudo_boxes = r.at("pseudo_boxes").get<std::size_t>();
        s.reg_candidates = r.at("reg_candidates").get<std::size_t>();
        s.reg_selected = r.at("reg_selected").get<std::size_t>();
        log.steps.push_back(s);
    }
    for (const auto& r : j.at("snapshots")) {
        EvalSnapshot s;
        s.iteration = r.at("iteration").get<int>();
        s.map_50_95 = r.at("map_50_95").get<double>();
        s.pseudo_precision = r.at("pseudo_precision").get<double>();
        s.pseudo_recall = r.at("pseudo_recall").get<double>();
        s.beneficial_fraction = r.at("beneficial_fraction").get<double>();
        s.misleading_fraction = r.at("misleading_fraction").get<double>();
        s.theta_s_hash = r.at("theta_s_hash").get<std::uint64_t>();
        s.theta_t_hash = r.at("theta_t_hash").get<std::uint64_t>();
        log.snapshots.push_back(s);
    }
    return log;
}

}  // namespace ssod
