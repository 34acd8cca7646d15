#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ssod/assignment.hpp"
#include "ssod/detector.hpp"

namespace ssod {

constexpr double kProbEps = 1e-7;
constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

struct LossBundle {
    double l_cls = 0.0;
    double l_ctr = 0.0;
    double l_reg = 0.0;
    std::vector<double> grad;

    double total() const { return l_cls + l_ctr + l_reg; }
};

struct ProbLoss {
    double value = 0.0;
    std::vector<double> grad_logits;
};

inline double bce(double p, double y) {
    const double q = std::clamp(p, kProbEps, 1.0 - kProbEps);
    return -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
}

// Per-class sigmoid BCE averaged over locations. Foreground locations weigh
// all their class terms by soft_weight; background locations supervise every
// class toward 0 at weight 1. Gradient is w.r.t. the class logits.
inline ProbLoss classification_loss(const std::vector<double>& probs, int class_count,
                                    const LocationTargets& targets) {
    const std::size_t n = targets.size();
    if (probs.size() != n * static_cast<std::size_t>(class_count))
        throw std::invalid_argument("classification_loss: prob array size mismatch");
    ProbLoss out;
    out.grad_logits.assign(probs.size(), 0.0);
    const double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool fg = targets.foreground(i);
        const double weight = fg ? targets.soft_weight[i] : 1.0;
        for (int c = 0; c < class_count; ++c) {
            const double p = probs[i * class_count + c];
            const double y = (fg && targets.cls[i] == c) ? 1.0 : 0.0;
            out.value += weight * bce(p, y) * inv_n;
            out.grad_logits[i * class_count + c] = weight * (p - y) * inv_n;
        }
    }
    return out;
}

// BCE between predicted centerness and the centerness target, foreground
// locations only; background contributes neither value nor gradient.
inline ProbLoss centerness_loss(const std::vector<double>& ctr_probs,
                                const LocationTargets& targets) {
    const std::size_t n = targets.size();
    if (ctr_probs.size() != n)
        throw std::invalid_argument("centerness_loss: score array size mismatch");
    ProbLoss out;
    out.grad_logits.assign(n, 0.0);
    const std::size_t n_fg = targets.foreground_count();
    if (n_fg == 0) return out;
    const double inv = 1.0 / static_cast<double>(n_fg);
    for (std::size_t i = 0; i < n; ++i) {
        if (!targets.foreground(i)) continue;
        const double t = targets.centerness_target[i];
        out.value += bce(ctr_probs[i], t) * inv;
        out.grad_logits[i] = (ctr_probs[i] - t) * inv;
    }
    return out;
}

struct NpllResult {
    double value = 0.0;
    std::array<double, 4> grad_d{};  // w.r.t. predicted distances
    std::array<double, 4> grad_u{};  // w.r.t. u = log(delta^2)
};

// Uncertainty-aware regression loss for one instance:
//   eta * ( sum_b [ (d_s-d_g)^2 / (2 delta^2) + 0.5 log delta^2 ] + 2 log 2pi )
// eta is an externally supplied IoU weight and is treated as a constant.
inline NpllResult npll_regression_loss(const BoundaryDistances& d_s,
                                       const std::array<double, 4>& delta_s,
                                       const BoundaryDistances& d_g, double eta) {
    NpllResult out;
    double sum = 0.0;
    for (int b = 0; b < 4; ++b) {
        const double delta = delta_s[b];
        if (!(delta > 0.0)) throw std::invalid_argument("npll_regression_loss: delta must be positive");
        const double u = 2.0 * std::log(delta);
        const double e = d_s[b] - d_g[b];
        const double inv_var = std::exp(-u);
        sum += 0.5 * e * e * inv_var + 0.5 * u;
        out.grad_d[b] = eta * e * inv_var;
        out.grad_u[b] = eta * (0.5 - 0.5 * e * e * inv_var);
    }
    out.value = eta * (sum + 2.0 * kLog2Pi);
    return out;
}

namespace detail {

inline void add_row_grad(const DetectorParams& p, std::size_t row_start, std::size_t bias_index,
                         const double* x, double g, std::vector<double>& grad) {
    for (int f = 0; f < p.feature_dim; ++f) grad[row_start + f] += g * x[f];
    grad[bias_index] += g;
}

}  // namespace detail

// IoU weights between the currently predicted and ground-truth boxes at each
// foreground location. Kept separate so callers can freeze them across a
// gradient evaluation (they multiply the loss as constants).
inline std::vector<double> regression_etas(const DetectorParams& params, const Scene& scene,
                                           const LocationTargets& targets) {
    std::vector<double> etas(targets.size(), 0.0);
    for (std::size_t loc = 0; loc < targets.size(); ++loc) {
        if (!targets.foreground(loc)) continue;
        const HeadLinear h = head_linear(params, scene.feature_at(loc));
        BoundaryDistances d;
        for (int b = 0; b < 4; ++b) d[b] = softplus(h.reg_pre[b]);
        if (d.l + d.r <= 0.0 || d.t + d.b <= 0.0) continue;  // undecodable: no overlap
        const int ix = static_cast<int>(loc % scene.grid_w);
        const int iy = static_cast<int>(loc / scene.grid_w);
        const Location p = grid_location(scene.grid_w, ix, iy);
        etas[loc] = iou(decode_box(d, p), decode_box(targets.regression[loc], p));
    }
    return etas;
}

// Classification-branch loss and parameter gradient for one scene, scaled by
// `scale`. Shared between the supervised and pseudo-label paths.
inline double classification_loss_into(const DetectorParams& params, const Scene& scene,
                                       const LocationTargets& targets, double scale,
                                       std::vector<double>& grad) {
    const std::size_t n = targets.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    double value = 0.0;
    for (std::size_t loc = 0; loc < n; ++loc) {
        const double* x = scene.feature_at(loc);
        const bool fg = targets.foreground(loc);
        const double weight = fg ? targets.soft_weight[loc] : 1.0;
        for (int c = 0; c < params.class_count; ++c) {
            const double z = params.dot_row(params.cls_weight(c, 0), x) + params.w[params.cls_bias(c)];
            const double y = (fg && targets.cls[loc] == c) ? 1.0 : 0.0;
            value += weight * (softplus(z) - y * z) * inv_n;
            detail::add_row_grad(params, params.cls_weight(c, 0), params.cls_bias(c), x,
                                 scale * weight * (sigmoid(z) - y) * inv_n, grad);
        }
    }
    return value;
}

inline double centerness_loss_into(const DetectorParams& params, const Scene& scene,
                                   const LocationTargets& targets, double scale,
                                   std::vector<double>& grad) {
    const std::size_t n_fg = targets.foreground_count();
    if (n_fg == 0) return 0.0;
    const double inv = 1.0 / static_cast<double>(n_fg);
    double value = 0.0;
    for (std::size_t loc = 0; loc < targets.size(); ++loc) {
        if (!targets.foreground(loc)) continue;
        const double* x = scene.feature_at(loc);
        const double z = params.dot_row(params.ctr_weight(0), x) + params.w[params.ctr_bias()];
        const double t = targets.centerness_target[loc];
        value += (softplus(z) - t * z) * inv;
        detail::add_row_grad(params, params.ctr_weight(0), params.ctr_bias(), x,
                             scale * (sigmoid(z) - t) * inv, grad);
    }
    return value;
}

inline double npll_loss_into(const DetectorParams& params, const Scene& scene,
                             const LocationTargets& targets, const std::vector<double>& etas,
                             double scale, std::vector<double>& grad) {
    const std::size_t n_fg = targets.foreground_count();
    if (n_fg == 0) return 0.0;
    const double inv = 1.0 / static_cast<double>(n_fg);
    double value = 0.0;
    for (std::size_t loc = 0; loc < targets.size(); ++loc) {
        if (!targets.foreground(loc)) continue;
        const double* x = scene.feature_at(loc);
        const HeadLinear h = head_linear(params, scene.feature_at(loc));
        BoundaryDistances d;
        std::array<double, 4> delta;
        bool underflow = false;
        for (int b = 0; b < 4; ++b) {
            d[b] = softplus(h.reg_pre[b]);
            delta[b] = std::exp(0.5 * h.unc_u[b]);
            if (!(delta[b] > 0.0)) underflow = true;
        }
        // delta underflowing to 0 means u ran away; report divergence (infinite
        // loss for the finiteness guard), not an argument error.
        if (underflow) return std::numeric_limits<double>::infinity();
        const NpllResult r = npll_regression_loss(d, delta, targets.regression[loc], etas[loc]);
        value += r.value * inv;
        for (int b = 0; b < 4; ++b) {
            // d(softplus)/dz = sigmoid(z)
            detail::add_row_grad(params, params.reg_weight(b, 0), params.reg_bias(b), x,
                                 scale * r.grad_d[b] * sigmoid(h.reg_pre[b]) * inv, grad);
            detail::add_row_grad(params, params.unc_weight(b, 0), params.unc_bias(b), x,
                                 scale * r.grad_u[b] * inv, grad);
        }
    }
    return value;
}

// Full supervised objective for one scene: classification + centerness +
// uncertainty-aware regression, unit weights. If `frozen_etas` is null the
// IoU weights are computed at the current parameters.
inline LossBundle combined_supervised_loss(const DetectorParams& params, const Scene& scene,
                                           const LocationTargets& targets,
                                           const std::vector<double>* frozen_etas = nullptr) {
    LossBundle out;
    out.grad.assign(params.size(), 0.0);
    const std::vector<double> etas =
        frozen_etas ? *frozen_etas : regression_etas(params, scene, targets);
    if (etas.size() != targets.size())
        throw std::invalid_argument("combined_supervised_loss: eta array size mismatch");
    out.l_cls = classification_loss_into(params, scene, targets, 1.0, out.grad);
    out.l_ctr = centerness_loss_into(params, scene, targets, 1.0, out.grad);
    out.l_reg = npll_loss_into(params, scene, targets, etas, 1.0, out.grad);
    if (!std::isfinite(out.total())) throw std::runtime_error("supervised loss is not finite");
    return out;
}

}  // namespace ssod
