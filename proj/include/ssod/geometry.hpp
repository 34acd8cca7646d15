#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ssod {

// Axis-aligned rectangle in scene coordinates. Coordinates are continuous;
// grid cells are unit squares with centers at integer+0.5 positions.
struct Box {
    double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    double cx() const { return 0.5 * (x1 + x2); }
    double cy() const { return 0.5 * (y1 + y2); }

    bool valid() const {
        return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
               std::isfinite(y2) && x1 < x2 && y1 < y2;
    }
    // Strict interior: distances to all four edges positive.
    bool contains(double px, double py) const {
        return px > x1 && px < x2 && py > y1 && py < y2;
    }
};

inline bool operator==(const Box& a, const Box& b) {
    return a.x1 == b.x1 && a.y1 == b.y1 && a.x2 == b.x2 && a.y2 == b.y2;
}

// Distances from a location to the four box edges (left, top, right, bottom).
struct BoundaryDistances {
    double l = 0.0, t = 0.0, r = 0.0, b = 0.0;

    double operator[](int i) const {
        switch (i) {
            case 0: return l;
            case 1: return t;
            case 2: return r;
            default: return b;
        }
    }
    double& operator[](int i) {
        switch (i) {
            case 0: return l;
            case 1: return t;
            case 2: return r;
            default: return b;
        }
    }
};

// Center of a grid cell, in scene units.
struct Location {
    double cx = 0.0, cy = 0.0;
};

inline double iou(const Box& a, const Box& b) {
    const double ix1 = std::max(a.x1, b.x1);
    const double iy1 = std::max(a.y1, b.y1);
    const double ix2 = std::min(a.x2, b.x2);
    const double iy2 = std::min(a.y2, b.y2);
    const double iw = std::max(0.0, ix2 - ix1);
    const double ih = std::max(0.0, iy2 - iy1);
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

inline BoundaryDistances encode_distances(const Box& box, const Location& p) {
    BoundaryDistances d{p.cx - box.x1, p.cy - box.y1, box.x2 - p.cx, box.y2 - p.cy};
    if (d.l < 0.0 || d.t < 0.0 || d.r < 0.0 || d.b < 0.0)
        throw std::invalid_argument("encode_distances: location outside box");
    return d;
}

inline Box decode_box(const BoundaryDistances& d, const Location& p) {
    if (d.l + d.r <= 0.0 || d.t + d.b <= 0.0)
        throw std::invalid_argument("decode_box: nonpositive box extent");
    return Box{p.cx - d.l, p.cy - d.t, p.cx + d.r, p.cy + d.b};
}

// sqrt((min(l,r)/max(l,r)) * (min(t,b)/max(t,b))): 1 at the box center,
// falling off toward the edges, invariant to uniform scaling.
inline double centerness(const BoundaryDistances& d) {
    if (d.l <= 0.0 || d.t <= 0.0 || d.r <= 0.0 || d.b <= 0.0)
        throw std::invalid_argument("centerness: requires strictly positive distances");
    const double h = std::min(d.l, d.r) / std::max(d.l, d.r);
    const double v = std::min(d.t, d.b) / std::max(d.t, d.b);
    return std::sqrt(h * v);
}

}  // namespace ssod
