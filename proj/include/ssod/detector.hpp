#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ssod/pseudolabel.hpp"
#include "ssod/simworld.hpp"

namespace ssod {

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// Linear detector head over per-location features. Four branches:
// classification logits (C), centerness logit (1), boundary-distance
// pre-activations (4, mapped through softplus), and u = log(delta^2) for the
// per-boundary localization uncertainty (4). Stored as one flat vector so
// gradients and EMA are plain elementwise ops.
struct DetectorParams {
    int class_count = 0;
    int feature_dim = 0;
    std::vector<double> w;

    DetectorParams() = default;
    DetectorParams(int c, int f) : class_count(c), feature_dim(f) {
        w.assign(param_count(c, f), 0.0);
    }

    static std::size_t param_count(int c, int f) {
        return static_cast<std::size_t>(c + 9) * f + c + 9;
    }
    std::size_t size() const { return w.size(); }

    // Flat layout: [W_cls | b_cls | W_ctr | b_ctr | W_reg | b_reg | W_unc | b_unc]
    std::size_t cls_weight(int c, int f) const { return static_cast<std::size_t>(c) * feature_dim + f; }
    std::size_t cls_bias(int c) const { return static_cast<std::size_t>(class_count) * feature_dim + c; }
    std::size_t ctr_weight(int f) const { return cls_bias(class_count - 1) + 1 + f; }
    std::size_t ctr_bias() const { return ctr_weight(feature_dim - 1) + 1; }
    std::size_t reg_weight(int b, int f) const { return ctr_bias() + 1 + static_cast<std::size_t>(b) * feature_dim + f; }
    std::size_t reg_bias(int b) const { return reg_weight(3, feature_dim - 1) + 1 + b; }
    std::size_t unc_weight(int b, int f) const { return reg_bias(3) + 1 + static_cast<std::size_t>(b) * feature_dim + f; }
    std::size_t unc_bias(int b) const { return unc_weight(3, feature_dim - 1) + 1 + b; }

    double dot_row(std::size_t row_start, const double* x) const {
        double acc = 0.0;
        for (int f = 0; f < feature_dim; ++f) acc += w[row_start + f] * x[f];
        return acc;
    }
};

// Raw branch pre-activations for one location.
struct HeadLinear {
    std::vector<double> cls_logit;  // C
    double ctr_logit = 0.0;
    double reg_pre[4] = {0, 0, 0, 0};  // distances = softplus(reg_pre)
    double unc_u[4] = {0, 0, 0, 0};    // delta = exp(u/2)
};

inline HeadLinear head_linear(const DetectorParams& p, const double* x) {
    HeadLinear h;
    h.cls_logit.resize(p.class_count);
    for (int c = 0; c < p.class_count; ++c)
        h.cls_logit[c] = p.dot_row(p.cls_weight(c, 0), x) + p.w[p.cls_bias(c)];
    h.ctr_logit = p.dot_row(p.ctr_weight(0), x) + p.w[p.ctr_bias()];
    for (int b = 0; b < 4; ++b) {
        h.reg_pre[b] = p.dot_row(p.reg_weight(b, 0), x) + p.w[p.reg_bias(b)];
        h.unc_u[b] = p.dot_row(p.unc_weight(b, 0), x) + p.w[p.unc_bias(b)];
    }
    return h;
}

inline DensePrediction forward(const DetectorParams& p, const Scene& scene) {
    if (scene.feature_dim != p.feature_dim)
        throw std::invalid_argument("forward: feature dimension mismatch");
    DensePrediction out;
    out.grid_w = scene.grid_w;
    out.grid_h = scene.grid_h;
    out.class_count = p.class_count;
    const std::size_t n = scene.location_count();
    out.probs.resize(n * p.class_count);
    out.ctr.resize(n);
    out.dist.resize(n);
    out.delta.resize(n);
    for (std::size_t loc = 0; loc < n; ++loc) {
        const HeadLinear h = head_linear(p, scene.feature_at(loc));
        for (int c = 0; c < p.class_count; ++c) out.probs[loc * p.class_count + c] = sigmoid(h.cls_logit[c]);
        out.ctr[loc] = sigmoid(h.ctr_logit);
        for (int b = 0; b < 4; ++b) {
            out.dist[loc][b] = softplus(h.reg_pre[b]);
            out.delta[loc][b] = std::exp(0.5 * h.unc_u[b]);
        }
    }
    return out;
}

}  // namespace ssod
