#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ssod/geometry.hpp"

namespace ssod {

constexpr int kBackground = -1;

struct GtBox {
    Box box;
    int cls = 0;
};

// Per-location training targets produced by label assignment. Background
// locations carry no regression/centerness target.
struct LocationTargets {
    int grid_w = 0, grid_h = 0;
    std::vector<int> cls;                    // kBackground or class id
    std::vector<int> box_index;              // index of the assigned box, or kBackground
    std::vector<double> soft_weight;         // 1 for hard labels
    std::vector<BoundaryDistances> regression;  // valid where cls != kBackground
    std::vector<double> centerness_target;      // valid where cls != kBackground

    std::size_t size() const { return cls.size(); }
    bool foreground(std::size_t i) const { return cls[i] != kBackground; }
    std::size_t foreground_count() const {
        std::size_t n = 0;
        for (std::size_t i = 0; i < cls.size(); ++i)
            if (foreground(i)) ++n;
        return n;
    }
};

struct AssignmentStrategy {
    enum class Kind { standard, center_sampling, soft_localization };
    Kind kind = Kind::standard;
    double cs_radius = 1.5;  // cells; center_sampling only
};

inline Location grid_location(int grid_w, int ix, int iy) {
    (void)grid_w;
    return Location{ix + 0.5, iy + 0.5};
}

// Maps boxes to per-location targets.
//  - standard: foreground iff the cell center is strictly inside a box;
//    ties go to the smallest-area containing box.
//  - center_sampling: additionally requires the center to lie within
//    cs_radius cells of the assigned box center (per-axis).
//  - soft_localization: standard foreground, soft_weight = centerness of
//    the location w.r.t. its assigned box.
inline LocationTargets assign(const std::vector<GtBox>& boxes, int grid_w, int grid_h,
                              const AssignmentStrategy& strategy) {
    if (strategy.kind == AssignmentStrategy::Kind::center_sampling && strategy.cs_radius <= 0.0)
        throw std::invalid_argument("assign: cs_radius must be positive");
    LocationTargets out;
    out.grid_w = grid_w;
    out.grid_h = grid_h;
    const std::size_t n = static_cast<std::size_t>(grid_w) * grid_h;
    out.cls.assign(n, kBackground);
    out.box_index.assign(n, kBackground);
    out.soft_weight.assign(n, 1.0);
    out.regression.assign(n, BoundaryDistances{});
    out.centerness_target.assign(n, 0.0);

    for (int iy = 0; iy < grid_h; ++iy) {
        for (int ix = 0; ix < grid_w; ++ix) {
            const std::size_t idx = static_cast<std::size_t>(iy) * grid_w + ix;
            const Location p = grid_location(grid_w, ix, iy);
            int best = -1;
            double best_area = 0.0;
            for (std::size_t bi = 0; bi < boxes.size(); ++bi) {
                const Box& b = boxes[bi].box;
                if (!b.contains(p.cx, p.cy)) continue;
                if (strategy.kind == AssignmentStrategy::Kind::center_sampling) {
                    if (std::abs(p.cx - b.cx()) > strategy.cs_radius ||
                        std::abs(p.cy - b.cy()) > strategy.cs_radius)
                        continue;
                }
                if (best < 0 || b.area() < best_area) {
                    best = static_cast<int>(bi);
                    best_area = b.area();
                }
            }
            if (best < 0) continue;
            const BoundaryDistances d = encode_distances(boxes[best].box, p);
            out.cls[idx] = boxes[best].cls;
            out.box_index[idx] = best;
            out.regression[idx] = d;
            out.centerness_target[idx] = centerness(d);
            if (strategy.kind == AssignmentStrategy::Kind::soft_localization)
                out.soft_weight[idx] = out.centerness_target[idx];
        }
    }
    return out;
}

// Pixel-wise precision/recall of a predicted foreground mask against the
// oracle mask. Empty denominators count as perfect (1).
inline std::pair<double, double> assignment_metrics(const LocationTargets& pred,
                                                    const LocationTargets& oracle) {
    if (pred.size() != oracle.size())
        throw std::invalid_argument("assignment_metrics: grid size mismatch");
    std::size_t n_pred = 0, n_oracle = 0, n_both = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.foreground(i);
        const bool o = oracle.foreground(i);
        n_pred += p;
        n_oracle += o;
        n_both += (p && o);
    }
    const double precision = n_pred == 0 ? 1.0 : static_cast<double>(n_both) / n_pred;
    const double recall = n_oracle == 0 ? 1.0 : static_cast<double>(n_both) / n_oracle;
    return {precision, recall};
}

inline AssignmentStrategy::Kind assignment_kind_from_string(const std::string& s) {
    if (s == "standard") return AssignmentStrategy::Kind::standard;
    if (s == "center-sampling") return AssignmentStrategy::Kind::center_sampling;
    if (s == "soft") return AssignmentStrategy::Kind::soft_localization;
    throw std::invalid_argument("unknown assignment strategy: " + s);
}

inline std::string to_string(AssignmentStrategy::Kind k) {
    switch (k) {
        case AssignmentStrategy::Kind::standard: return "standard";
        case AssignmentStrategy::Kind::center_sampling: return "center-sampling";
        default: return "soft";
    }
}

}  // namespace ssod
