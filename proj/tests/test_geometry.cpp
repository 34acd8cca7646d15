#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ssod/geometry.hpp"
#include "ssod/rng.hpp"

using namespace ssod;

namespace {

Box random_box(Rng& rng, double extent) {
    const double x1 = rng.uniform(0.0, extent);
    const double y1 = rng.uniform(0.0, extent);
    const double w = rng.uniform(0.5, extent);
    const double h = rng.uniform(0.5, extent);
    return Box{x1, y1, x1 + w, y1 + h};
}

Location random_interior(Rng& rng, const Box& b) {
    // Strictly inside, away from edges so all distances are positive.
    const double fx = rng.uniform(0.05, 0.95);
    const double fy = rng.uniform(0.05, 0.95);
    return Location{b.x1 + fx * (b.x2 - b.x1), b.y1 + fy * (b.y2 - b.y1)};
}

}  // namespace

TEST_CASE("iou on pinned instances", "[geometry]") {
    const Box a{0, 0, 2, 2};
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(Box{0, 0, 2, 2}, Box{1, 1, 3, 3}) == Catch::Approx(1.0 / 7.0).epsilon(1e-12));
    CHECK(iou(Box{0, 0, 1, 1}, Box{2, 2, 3, 3}) == 0.0);
    CHECK(iou(Box{0, 0, 1, 1}, Box{1, 0, 2, 1}) == 0.0);  // touching edges do not overlap
}

TEST_CASE("iou symmetry and bounds", "[geometry]") {
    Rng rng = make_stream(11, StreamTag::scene, 1);
    for (int i = 0; i < 500; ++i) {
        const Box a = random_box(rng, 8.0);
        const Box b = random_box(rng, 8.0);
        const double ab = iou(a, b);
        CHECK(ab == iou(b, a));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
        if (!(a == b)) CHECK(iou(a, b) < 1.0);
    }
}

TEST_CASE("encode_distances on pinned instances", "[geometry]") {
    const Box b{0, 0, 4, 4};
    const BoundaryDistances c = encode_distances(b, Location{2, 2});
    CHECK(c.l == 2.0);
    CHECK(c.t == 2.0);
    CHECK(c.r == 2.0);
    CHECK(c.b == 2.0);
    const BoundaryDistances d = encode_distances(b, Location{1, 2});
    CHECK(d.l == 1.0);
    CHECK(d.t == 2.0);
    CHECK(d.r == 3.0);
    CHECK(d.b == 2.0);
    CHECK_THROWS_AS(encode_distances(b, Location{5, 2}), std::invalid_argument);
    CHECK_THROWS_AS(encode_distances(b, Location{2, -1}), std::invalid_argument);
}

TEST_CASE("decode_box on pinned instances", "[geometry]") {
    CHECK(decode_box(BoundaryDistances{2, 2, 2, 2}, Location{2, 2}) == Box{0, 0, 4, 4});
    CHECK(decode_box(BoundaryDistances{1, 2, 3, 2}, Location{1, 2}) == Box{0, 0, 4, 4});
    CHECK_THROWS_AS(decode_box(BoundaryDistances{0, 1, 0, 1}, Location{2, 2}),
                    std::invalid_argument);
    CHECK_THROWS_AS(decode_box(BoundaryDistances{1, -2, 1, 1}, Location{2, 2}),
                    std::invalid_argument);
}

TEST_CASE("encode/decode round-trip", "[geometry]") {
    Rng rng = make_stream(12, StreamTag::scene, 2);
    for (int i = 0; i < 500; ++i) {
        const Box b = random_box(rng, 10.0);
        const Location p = random_interior(rng, b);
        const Box back = decode_box(encode_distances(b, p), p);
        CHECK(back.x1 == Catch::Approx(b.x1).margin(1e-12));
        CHECK(back.y1 == Catch::Approx(b.y1).margin(1e-12));
        CHECK(back.x2 == Catch::Approx(b.x2).margin(1e-12));
        CHECK(back.y2 == Catch::Approx(b.y2).margin(1e-12));
    }
}

TEST_CASE("centerness on pinned instances", "[geometry]") {
    CHECK(centerness(BoundaryDistances{2, 2, 2, 2}) == 1.0);
    CHECK(centerness(BoundaryDistances{1, 2, 3, 2}) ==
          Catch::Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-12));
    CHECK(centerness(BoundaryDistances{1, 1, 100, 1}) == Catch::Approx(0.1).epsilon(1e-12));
    CHECK_THROWS_AS(centerness(BoundaryDistances{0, 1, 1, 1}), std::invalid_argument);
}

TEST_CASE("centerness properties", "[geometry]") {
    Rng rng = make_stream(13, StreamTag::scene, 3);
    for (int i = 0; i < 500; ++i) {
        BoundaryDistances d{rng.uniform(0.1, 5.0), rng.uniform(0.1, 5.0), rng.uniform(0.1, 5.0),
                            rng.uniform(0.1, 5.0)};
        const double c = centerness(d);
        CHECK(c > 0.0);
        CHECK(c <= 1.0);
        // Invariant to uniform scaling.
        const double s = rng.uniform(0.2, 7.0);
        const BoundaryDistances ds{d.l * s, d.t * s, d.r * s, d.b * s};
        CHECK(centerness(ds) == Catch::Approx(c).epsilon(1e-12));
        // Maximized exactly at l=r and t=b.
        if (d.l != d.r || d.t != d.b) CHECK(c < 1.0);
    }
    CHECK(centerness(BoundaryDistances{3, 0.5, 3, 0.5}) == 1.0);
}

TEST_CASE("box validity and interior containment", "[geometry]") {
    CHECK(Box{0, 0, 1, 1}.valid());
    CHECK_FALSE(Box{0, 0, 0, 1}.valid());
    CHECK_FALSE(Box{1, 0, 0, 1}.valid());
    const Box b{0, 0, 2, 2};
    CHECK(b.contains(1, 1));
    CHECK_FALSE(b.contains(0, 1));  // boundary is outside (strict interior)
    CHECK_FALSE(b.contains(1, 2));
}
