#pragma once

#include <algorithm>
#include <array>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ssod/assignment.hpp"
#include "ssod/geometry.hpp"

namespace ssod {

// Dense per-location detector outputs: per-class sigmoid probabilities, a
// centerness score, boundary distances, and per-boundary localization
// uncertainties.
struct DensePrediction {
    int grid_w = 0, grid_h = 0, class_count = 0;
    std::vector<double> probs;                  // location-major, class_count per location
    std::vector<double> ctr;                    // one per location
    std::vector<BoundaryDistances> dist;        // one per location
    std::vector<std::array<double, 4>> delta;   // one per location

    std::size_t location_count() const { return static_cast<std::size_t>(grid_w) * grid_h; }
    const double* probs_at(std::size_t loc) const { return &probs[loc * class_count]; }
};

struct PseudoBox {
    Box box;
    int cls = 0;
    double score = 0.0;
    std::array<double, 4> delta_t{};  // teacher per-boundary uncertainty
    std::size_t location = 0;
};

struct SelectorConfig {
    enum class Mode { class_score, box_score };
    Mode mode = Mode::class_score;
    double tau = 0.5;
    double nms_iou = 0.6;
};

inline int argmax_class(const double* probs, int class_count) {
    int best = 0;
    for (int c = 1; c < class_count; ++c)
        if (probs[c] > probs[best]) best = c;
    return best;
}

// class_score: max class probability. box_score: that probability times the
// centerness score.
inline double score(const DensePrediction& pred, std::size_t loc, SelectorConfig::Mode mode) {
    const double p = pred.probs_at(loc)[argmax_class(pred.probs_at(loc), pred.class_count)];
    return mode == SelectorConfig::Mode::class_score ? p : p * pred.ctr[loc];
}

// Thresholds dense predictions, decodes candidate boxes, and runs class-wise
// greedy NMS. Deterministic: ties broken by (score desc, location row-major).
inline std::vector<PseudoBox> select_pseudo_boxes(const DensePrediction& pred,
                                                  const SelectorConfig& cfg) {
    std::vector<PseudoBox> candidates;
    for (std::size_t loc = 0; loc < pred.location_count(); ++loc) {
        const double s = score(pred, loc, cfg.mode);
        if (s < cfg.tau) continue;
        const BoundaryDistances& d = pred.dist[loc];
        if (d.l + d.r <= 0.0 || d.t + d.b <= 0.0) continue;  // undecodable
        const int ix = static_cast<int>(loc % pred.grid_w);
        const int iy = static_cast<int>(loc / pred.grid_w);
        PseudoBox pb;
        pb.box = decode_box(d, grid_location(pred.grid_w, ix, iy));
        pb.cls = argmax_class(pred.probs_at(loc), pred.class_count);
        pb.score = s;
        pb.delta_t = pred.delta[loc];
        pb.location = loc;
        candidates.push_back(pb);
    }
    std::sort(candidates.begin(), candidates.end(), [](const PseudoBox& a, const PseudoBox& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.location < b.location;
    });
    std::vector<PseudoBox> kept;
    for (const auto& c : candidates) {
        bool suppressed = false;
        for (const auto& k : kept) {
            if (k.cls == c.cls && iou(k.box, c.box) > cfg.nms_iou) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(c);
    }
    return kept;
}

// Box-level pseudo-label quality against ground truth: greedy one-to-one
// matching by descending score at IoU >= iou_match and equal class.
// Conventions for empty inputs: matching nothing against nonempty truth is
// precision 0; an empty truth set cannot be missed (recall 1, and precision 1
// only when the pseudo set is empty too).
inline std::pair<double, double> pseudo_label_quality(const std::vector<PseudoBox>& pseudo,
                                                      const std::vector<GtBox>& truth,
                                                      double iou_match = 0.5) {
    std::vector<std::size_t> order(pseudo.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return pseudo[a].score > pseudo[b].score;
    });
    std::vector<bool> used(truth.size(), false);
    std::size_t matches = 0;
    for (const std::size_t pi : order) {
        int best = -1;
        double best_iou = 0.0;
        for (std::size_t ti = 0; ti < truth.size(); ++ti) {
            if (used[ti] || truth[ti].cls != pseudo[pi].cls) continue;
            const double v = iou(pseudo[pi].box, truth[ti].box);
            if (v >= iou_match && v > best_iou) {
                best = static_cast<int>(ti);
                best_iou = v;
            }
        }
        if (best >= 0) {
            used[best] = true;
            ++matches;
        }
    }
    const double precision =
        pseudo.empty() ? (truth.empty() ? 1.0 : 0.0) : static_cast<double>(matches) / pseudo.size();
    const double recall = truth.empty() ? 1.0 : static_cast<double>(matches) / truth.size();
    return {precision, recall};
}

inline SelectorConfig::Mode selector_mode_from_string(const std::string& s) {
    if (s == "class") return SelectorConfig::Mode::class_score;
    if (s == "box-score") return SelectorConfig::Mode::box_score;
    throw std::invalid_argument("unknown selector mode: " + s);
}

inline std::string to_string(SelectorConfig::Mode m) {
    return m == SelectorConfig::Mode::class_score ? "class" : "box-score";
}

}  // namespace ssod
