#pragma once

#include <array>
#include <vector>

namespace riskplan {

// Indices of the convex hull of a 2D point set, counter-clockwise starting
// from the lowest-leftmost point. Collinear boundary points are dropped.
std::vector<int> convex_hull_2d(const std::vector<std::array<double, 2>>& pts);

// Triangulated 3D convex hull. `vertices` lists the distinct input indices on
// the hull; faces are outward-oriented triangles of input indices. For
// degenerate (coplanar) input, faces is empty and vertices holds the planar
// hull ring.
struct Hull3D {
    std::vector<std::array<int, 3>> faces;
    std::vector<int> vertices;
};
Hull3D convex_hull_3d(const std::vector<std::array<double, 3>>& pts);

// Signed distance helpers used by tests and the reach-set footprint.
// Positive = outside.
double hull_2d_signed_distance(const std::vector<std::array<double, 2>>& pts,
                               const std::vector<int>& hull, const std::array<double, 2>& q);
double hull_3d_max_violation(const std::vector<std::array<double, 3>>& pts, const Hull3D& hull,
                             const std::array<double, 3>& q);

} // namespace riskplan
