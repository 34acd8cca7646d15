#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ssod/detector.hpp"
#include "ssod/listen2student.hpp"
#include "ssod/pseudolabel.hpp"

namespace ssod {

struct Detection {
    int scene = 0;
    Box box;
    int cls = 0;
    double score = 0.0;
};

struct Truth {
    int scene = 0;
    Box box;
    int cls = 0;
};

namespace detail {

// AP for one class over pooled scenes: rank detections by score (ties keep
// input order), greedily match each to the highest-IoU unmatched truth in its
// scene at IoU >= thr, then integrate the 101-point interpolated PR curve.
inline double class_ap(std::vector<Detection> dets, const std::vector<Truth>& truths,
                       double iou_thr) {
    if (truths.empty()) return dets.empty() ? 1.0 : 0.0;
    std::stable_sort(dets.begin(), dets.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    std::vector<char> used(truths.size(), 0);
    std::vector<char> is_tp(dets.size(), 0);
    for (std::size_t di = 0; di < dets.size(); ++di) {
        int best = -1;
        double best_iou = 0.0;
        for (std::size_t ti = 0; ti < truths.size(); ++ti) {
            if (used[ti] || truths[ti].scene != dets[di].scene) continue;
            const double v = iou(dets[di].box, truths[ti].box);
            if (v >= iou_thr && v > best_iou) {
                best = static_cast<int>(ti);
                best_iou = v;
            }
        }
        if (best >= 0) {
            used[best] = 1;
            is_tp[di] = 1;
        }
    }
    // Precision/recall at each rank, then the interpolated envelope.
    std::vector<double> precision(dets.size()), recall(dets.size());
    std::size_t tp = 0;
    for (std::size_t k = 0; k < dets.size(); ++k) {
        tp += is_tp[k];
        precision[k] = static_cast<double>(tp) / (k + 1);
        recall[k] = static_cast<double>(tp) / truths.size();
    }
    double ap = 0.0;
    for (int i = 0; i <= 100; ++i) {
        const double r = i / 100.0;
        double best_p = 0.0;
        for (std::size_t k = 0; k < dets.size(); ++k)
            if (recall[k] >= r) best_p = std::max(best_p, precision[k]);
        ap += best_p;
    }
    return ap / 101.0;
}

}  // namespace detail

// Mean AP over the classes present in either list. Matching is within-scene;
// single-scene inputs can leave `scene` at its default. An entirely empty
// instance scores 1 (nothing to detect, nothing detected).
inline double compute_ap(const std::vector<Detection>& detections,
                         const std::vector<Truth>& truths, double iou_thr) {
    std::set<int> classes;
    for (const auto& d : detections) classes.insert(d.cls);
    for (const auto& t : truths) classes.insert(t.cls);
    if (classes.empty()) return 1.0;
    double sum = 0.0;
    for (int c : classes) {
        std::vector<Detection> dc;
        std::vector<Truth> tc;
        for (const auto& d : detections)
            if (d.cls == c) dc.push_back(d);
        for (const auto& t : truths)
            if (t.cls == c) tc.push_back(t);
        sum += detail::class_ap(std::move(dc), tc, iou_thr);
    }
    return sum / classes.size();
}

// AP at the strict 0.55..0.95 thresholds (keys are percentages).
inline std::map<int, double> ap_breakdown(const std::vector<Detection>& detections,
                                          const std::vector<Truth>& truths) {
    std::map<int, double> out;
    for (int t = 55; t <= 95; t += 5) out[t] = compute_ap(detections, truths, t / 100.0);
    return out;
}

struct EvalReport {
    std::map<int, double> ap;        // IoU threshold in percent (50..95) -> AP
    double map_50_95 = 0.0;
    std::map<int, double> per_class;  // class id -> mean AP over thresholds
    double pseudo_precision = 1.0;
    double pseudo_recall = 1.0;
    double assignment_precision = 1.0;  // pixel metrics of pseudo-box assignment
    double assignment_recall = 1.0;
    SelectionDiagnostics selection;
    std::uint64_t config_hash = 0;
};

// Detection metrics of one parameter set over scenes with ground truth.
// Inference always ranks by class score (evaluation isolates training
// effects) and keeps everything above score_thr before NMS.
inline EvalReport evaluate_model(const DetectorParams& params, const std::vector<Scene>& scenes,
                                 double score_thr = 0.05, double nms_iou = 0.6) {
    SelectorConfig sel;
    sel.mode = SelectorConfig::Mode::class_score;
    sel.tau = score_thr;
    sel.nms_iou = nms_iou;
    std::vector<Detection> dets;
    std::vector<Truth> truths;
    for (const Scene& s : scenes) {
        for (const GtBox& g : s.boxes) truths.push_back(Truth{s.id, g.box, g.cls});
        for (const PseudoBox& pb : select_pseudo_boxes(forward(params, s), sel))
            dets.push_back(Detection{s.id, pb.box, pb.cls, pb.score});
    }
    EvalReport rep;
    double sum = 0.0;
    for (int t = 50; t <= 95; t += 5) {
        rep.ap[t] = compute_ap(dets, truths, t / 100.0);
        sum += rep.ap[t];
    }
    rep.map_50_95 = sum / 10.0;
    std::set<int> classes;
    for (const auto& t : truths) classes.insert(t.cls);
    for (const auto& d : dets) classes.insert(d.cls);
    for (int c : classes) {
        std::vector<Detection> dc;
        std::vector<Truth> tc;
        for (const auto& d : dets)
            if (d.cls == c) dc.push_back(d);
        for (const auto& t : truths)
            if (t.cls == c) tc.push_back(t);
        double acc = 0.0;
        for (int t = 50; t <= 95; t += 5) acc += compute_ap(dc, tc, t / 100.0);
        rep.per_class[c] = acc / 10.0;
    }
    return rep;
}

// Oracle-path diagnostics of the Teacher/Student pair over the unlabeled pool:
// pseudo-label precision/recall, pixel metrics of the pseudo-box assignment
// against the true-box assignment, and the boundary-selection cross-tab.
// This is the only code path that reads the hidden unlabeled boxes.
inline void add_pseudo_diagnostics(EvalReport& rep, const DetectorParams& teacher,
                                   const DetectorParams& student,
                                   const std::vector<Scene>& unlabeled,
                                   const std::vector<std::vector<GtBox>>& oracle,
                                   const SelectorConfig& selector, const AssignmentStrategy& strategy,
                                   const RegressionRegime& regime) {
    if (unlabeled.size() != oracle.size())
        throw std::invalid_argument("add_pseudo_diagnostics: oracle size mismatch");
    double prec_sum = 0.0, rec_sum = 0.0, ap_prec_sum = 0.0, ap_rec_sum = 0.0;
    std::size_t selected = 0, candidates_total = 0, beneficial = 0, judged = 0;
    for (std::size_t i = 0; i < unlabeled.size(); ++i) {
        const Scene& s = unlabeled[i];
        const DensePrediction teacher_pred = forward(teacher, s);
        const std::vector<PseudoBox> pseudo = select_pseudo_boxes(teacher_pred, selector);
        const auto [p, r] = pseudo_label_quality(pseudo, oracle[i]);
        prec_sum += p;
        rec_sum += r;

        std::vector<GtBox> pseudo_gt;
        for (const PseudoBox& pb : pseudo) pseudo_gt.push_back(GtBox{pb.box, pb.cls});
        const LocationTargets pred_t = assign(pseudo_gt, s.grid_w, s.grid_h, strategy);
        const LocationTargets oracle_t = assign(oracle[i], s.grid_w, s.grid_h, AssignmentStrategy{});
        const auto [ap_p, ap_r] = assignment_metrics(pred_t, oracle_t);
        ap_prec_sum += ap_p;
        ap_rec_sum += ap_r;

        const DensePrediction student_pred = forward(student, s);
        const std::vector<BoundaryCandidate> cand = build_boundary_candidates(pseudo, student_pred);
        candidates_total += cand.size();
        for (const BoundaryCandidate& c : cand) {
            if (!boundary_selected(c, regime.sigma, regime.sigma_s)) continue;
            ++selected;
            if (!oracle_t.foreground(c.location)) continue;  // no ground truth here
            ++judged;
            const double d_g = oracle_t.regression[c.location][c.boundary];
            if (beneficial_instance(c.d_t, c.d_s, d_g)) ++beneficial;
        }
    }
    const double n = static_cast<double>(unlabeled.size());
    if (n > 0) {
        rep.pseudo_precision = prec_sum / n;
        rep.pseudo_recall = rec_sum / n;
        rep.assignment_precision = ap_prec_sum / n;
        rep.assignment_recall = ap_rec_sum / n;
    }
    rep.selection.candidate_count = candidates_total;
    rep.selection.selected_count = selected;
    if (judged > 0) {
        rep.selection.beneficial_fraction = static_cast<double>(beneficial) / judged;
        rep.selection.misleading_fraction = 1.0 - rep.selection.beneficial_fraction;
    }
}

inline nlohmann::json to_json(const EvalReport& rep) {
    nlohmann::json j;
    nlohmann::json ap = nlohmann::json::object();
    for (const auto& [t, v] : rep.ap) {
        char key[8];
        std::snprintf(key, sizeof key, "0.%02d", t);
        ap[key] = v;
    }
    j["ap"] = ap;
    j["map_50_95"] = rep.map_50_95;
    nlohmann::json pc = nlohmann::json::object();
    for (const auto& [c, v] : rep.per_class) pc[std::to_string(c)] = v;
    j["per_class"] = pc;
    j["pseudo_precision"] = rep.pseudo_precision;
    j["pseudo_recall"] = rep.pseudo_recall;
    j["assignment"] = {{"precision", rep.assignment_precision}, {"recall", rep.assignment_recall}};
    j["selection"] = {{"candidates", rep.selection.candidate_count},
                      {"selected", rep.selection.selected_count},
                      {"beneficial_fraction", rep.selection.beneficial_fraction},
                      {"misleading_fraction", rep.selection.misleading_fraction}};
    j["config_hash"] = rep.config_hash;
    return j;
}

}  // namespace ssod
