#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssod/assignment.hpp"
#include "ssod/pseudolabel.hpp"

namespace ssod {

// One regression pseudo-label at one foreground location: the teacher-side
// boundary (target) and the student's current prediction, each with its
// predicted uncertainty.
struct BoundaryCandidate {
    std::size_t location = 0;  // flat grid index
    int boundary = 0;          // 0=l 1=t 2=r 3=b
    double d_t = 0.0;          // teacher boundary distance (constant)
    double d_s = 0.0;          // student boundary distance
    double delta_t = 0.0;
    double delta_s = 0.0;
};

enum class RegressionKind { none, confidence_l1, listen2student };

struct RegressionRegime {
    RegressionKind kind = RegressionKind::listen2student;
    double sigma = 0.1;    // teacher margin
    double sigma_s = 0.5;  // student uncertainty floor

    void validate() const {
        if (sigma < 0.0) throw std::invalid_argument("regression regime: sigma must be >= 0");
    }
};

// Oracle-side label: the teacher boundary helps iff it is at least as close
// to the truth as the student's own prediction (ties count as beneficial).
inline bool beneficial_instance(double d_t, double d_s, double d_g) {
    return std::abs(d_t - d_g) <= std::abs(d_s - d_g);
}

// Relative-uncertainty gate: keep a boundary iff the student is uncertain
// enough to need it (delta_s > sigma_s) and the teacher beats the student by
// the margin (delta_t + sigma <= delta_s). Decided per boundary.
inline bool boundary_selected(const BoundaryCandidate& c, double sigma, double sigma_s) {
    return c.delta_s > sigma_s && c.delta_t + sigma <= c.delta_s;
}

inline std::vector<std::size_t> select_boundaries(const std::vector<BoundaryCandidate>& candidates,
                                                  double sigma, double sigma_s) {
    if (sigma < 0.0) throw std::invalid_argument("select_boundaries: sigma must be >= 0");
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (boundary_selected(candidates[i], sigma, sigma_s)) kept.push_back(i);
    return kept;
}

// Which candidates the regression loss acts on. none: empty; confidence_l1:
// every boundary of every candidate (the pseudo-boxes already passed the
// score threshold); listen2student: the relative-uncertainty subset.
inline std::vector<std::size_t> active_boundaries(const std::vector<BoundaryCandidate>& candidates,
                                                  const RegressionRegime& regime) {
    regime.validate();
    switch (regime.kind) {
        case RegressionKind::none:
            return {};
        case RegressionKind::confidence_l1: {
            std::vector<std::size_t> all(candidates.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
            return all;
        }
        case RegressionKind::listen2student:
            return select_boundaries(candidates, regime.sigma, regime.sigma_s);
    }
    return {};
}

struct UnsupRegLoss {
    double value = 0.0;
    std::vector<double> grad_d;  // d(loss)/d(d_s), aligned with candidates
};

// L1 pull of the student boundary toward the teacher boundary, summed over
// the active subset. Teacher values are constants; the sub-gradient at an
// exact tie is 0.
inline UnsupRegLoss unsup_regression_loss(const std::vector<BoundaryCandidate>& candidates,
                                          const std::vector<std::size_t>& active) {
    UnsupRegLoss out;
    out.grad_d.assign(candidates.size(), 0.0);
    for (std::size_t i : active) {
        const BoundaryCandidate& c = candidates.at(i);
        const double diff = c.d_s - c.d_t;
        out.value += std::abs(diff);
        out.grad_d[i] = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    }
    return out;
}

inline UnsupRegLoss unsup_regression_loss(const std::vector<BoundaryCandidate>& candidates,
                                          const RegressionRegime& regime) {
    return unsup_regression_loss(candidates, active_boundaries(candidates, regime));
}

struct SelectionDiagnostics {
    std::size_t candidate_count = 0;
    std::size_t selected_count = 0;
    double beneficial_fraction = 0.0;  // among selected; 0 when nothing selected
    double misleading_fraction = 0.0;
};

// Cross-tabulates the selection rule against the oracle benefit labels.
// d_g holds the true boundary distance per candidate (evaluation only).
inline SelectionDiagnostics selection_diagnostics(const std::vector<BoundaryCandidate>& candidates,
                                                  double sigma, double sigma_s,
                                                  const std::vector<double>& d_g) {
    if (d_g.size() != candidates.size())
        throw std::invalid_argument("selection_diagnostics: oracle size mismatch");
    SelectionDiagnostics out;
    out.candidate_count = candidates.size();
    std::size_t beneficial = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!boundary_selected(candidates[i], sigma, sigma_s)) continue;
        ++out.selected_count;
        if (beneficial_instance(candidates[i].d_t, candidates[i].d_s, d_g[i])) ++beneficial;
    }
    if (out.selected_count > 0) {
        out.beneficial_fraction = static_cast<double>(beneficial) / out.selected_count;
        out.misleading_fraction = 1.0 - out.beneficial_fraction;
    }
    return out;
}

// Expands selected pseudo-boxes into per-boundary candidates. Foreground
// membership follows the standard assignment over the pseudo-boxes; the
// teacher side is the pseudo-box geometry encoded at the location plus the
// box's stored uncertainties, the student side is its dense prediction there.
inline std::vector<BoundaryCandidate> build_boundary_candidates(
    const std::vector<PseudoBox>& pseudo, const DensePrediction& student) {
    std::vector<GtBox> boxes;
    boxes.reserve(pseudo.size());
    for (const PseudoBox& pb : pseudo) boxes.push_back(GtBox{pb.box, pb.cls});
    const LocationTargets t = assign(boxes, student.grid_w, student.grid_h, AssignmentStrategy{});
    std::vector<BoundaryCandidate> out;
    for (std::size_t loc = 0; loc < t.size(); ++loc) {
        if (!t.foreground(loc)) continue;
        const PseudoBox& src = pseudo[static_cast<std::size_t>(t.box_index[loc])];
        for (int b = 0; b < 4; ++b) {
            BoundaryCandidate c;
            c.location = loc;
            c.boundary = b;
            c.d_t = t.regression[loc][b];
            c.delta_t = src.delta_t[b];
            c.d_s = student.dist[loc][b];
            c.delta_s = student.delta[loc][b];
            out.push_back(c);
        }
    }
    return out;
}

inline RegressionKind regression_kind_from_string(const std::string& s) {
    if (s == "none") return RegressionKind::none;
    if (s == "confidence-l1") return RegressionKind::confidence_l1;
    if (s == "listen2student") return RegressionKind::listen2student;
    throw std::invalid_argument("unknown regression regime: " + s);
}

inline std::string to_string(RegressionKind k) {
    switch (k) {
        case RegressionKind::none: return "none";
        case RegressionKind::confidence_l1: return "confidence-l1";
        default: return "listen2student";
    }
}

}  // namespace ssod
