#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "riskplan/hull.hpp"
#include "riskplan/nn_index.hpp"
#include "riskplan/rng.hpp"

#include <cmath>

using namespace riskplan;

namespace {

std::vector<Vec4> random_cloud(Rng& rng, int n, int dim, bool clustered) {
    std::vector<Vec4> pts(n);
    for (int i = 0; i < n; ++i) {
        Vec4 p{};
        if (clustered && i % 3 == 0) {
            for (int d = 0; d < dim; ++d) p[d] = 0.1 * rng.normal();
        } else {
            for (int d = 0; d < dim; ++d) p[d] = rng.uniform(-2, 2);
        }
        pts[i] = p;
    }
    return pts;
}

} // namespace

TEST_CASE("grid index matches the brute-force reference") {
    Rng rng(91);
    for (int dim : {1, 2, 3, 4}) {
        for (int n : {5, 100, 1500}) {
            for (bool clustered : {false, true}) {
                auto pts = random_cloud(rng, n, dim, clustered);
                // exact duplicates exercise the tie rule (lowest index wins)
                pts.push_back(pts[n / 2]);
                pts.push_back(pts[0]);
                NnIndex index(pts, dim);
                for (int trial = 0; trial < 60; ++trial) {
                    Vec4 q{};
                    const double spread = (trial % 4 == 0) ? 6.0 : 2.0; // some far outside
                    for (int d = 0; d < dim; ++d) q[d] = rng.uniform(-spread, spread);
                    CHECK(index.nearest(q) == nearest_brute(pts, dim, q));
                    for (double r : {0.05, 0.3, 1.0})
                        CHECK(index.any_within(q, r) == any_within_brute(pts, dim, q, r));
                }
                for (int i : {0, n / 3, n - 1})
                    for (int k : {1, 3})
                        CHECK(index.kth_nearest_dist(i, k) ==
                              kth_nearest_dist_brute(pts, dim, i, k));
            }
        }
    }
}

TEST_CASE("grid index on identical points picks the lowest index") {
    std::vector<Vec4> pts(7, Vec4{1, 2, 0, 0});
    NnIndex index(pts, 2);
    CHECK(index.nearest({1, 2, 0, 0}) == 0);
    CHECK(index.nearest({5, 5, 0, 0}) == 0);
    CHECK(index.kth_nearest_dist(3, 3) == 0.0);
}

TEST_CASE("2D hull: square with interior points") {
    std::vector<std::array<double, 2>> pts = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    Rng rng(5);
    for (int i = 0; i < 200; ++i)
        pts.push_back({rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)});
    auto hull = convex_hull_2d(pts);
    REQUIRE(hull.size() == 4);
    // CCW from lowest-leftmost
    CHECK(hull[0] == 0);
    CHECK(hull[1] == 1);
    CHECK(hull[2] == 2);
    CHECK(hull[3] == 3);
    for (const auto& p : pts) CHECK(hull_2d_signed_distance(pts, hull, p) <= 1e-12);
    CHECK(hull_2d_signed_distance(pts, hull, {2, 0.5}) == doctest::Approx(1.0));
}

TEST_CASE("2D hull: collinear input collapses to endpoints") {
    std::vector<std::array<double, 2>> pts;
    for (int i = 0; i <= 10; ++i) pts.push_back({0.1 * i, 0.2 * i});
    auto hull = convex_hull_2d(pts);
    REQUIRE(hull.size() == 2);
    CHECK(hull[0] == 0);
    CHECK(hull[1] == 10);
}

TEST_CASE("3D hull: cube with interior points") {
    std::vector<std::array<double, 3>> pts;
    for (int c = 0; c < 8; ++c)
        pts.push_back({double(c & 1), double((c >> 1) & 1), double((c >> 2) & 1)});
    Rng rng(6);
    for (int i = 0; i < 500; ++i)
        pts.push_back({rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)});
    auto hull = convex_hull_3d(pts);
    REQUIRE(hull.vertices.size() == 8);
    for (int v : hull.vertices) CHECK(v < 8);
    CHECK(hull.faces.size() == 12); // triangulated cube
    for (const auto& p : pts) CHECK(hull_3d_max_violation(pts, hull, p) <= 1e-9);
    CHECK(hull_3d_max_violation(pts, hull, {0.5, 0.5, 2.0}) == doctest::Approx(1.0));
}

TEST_CASE("3D hull: gaussian cloud containment") {
    Rng rng(7);
    std::vector<std::array<double, 3>> pts(400);
    for (auto& p : pts) p = {rng.normal(), 0.5 * rng.normal(), 2.0 * rng.normal()};
    auto hull = convex_hull_3d(pts);
    REQUIRE(!hull.faces.empty());
    for (const auto& p : pts) CHECK(hull_3d_max_violation(pts, hull, p) <= 1e-9);
}

TEST_CASE("3D hull: coplanar input degrades to the planar ring") {
    std::vector<std::array<double, 3>> pts;
    Rng rng(8);
    for (int i = 0; i < 50; ++i) {
        const double x = rng.uniform(-1, 1), y = rng.uniform(-1, 1);
        pts.push_back({x, y, 0.5 * x - 0.25 * y + 2.0});
    }
    auto hull = convex_hull_3d(pts);
    CHECK(hull.faces.empty());
    CHECK(hull.vertices.size() >= 3);
}
