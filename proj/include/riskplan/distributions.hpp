#pragma once

#include "riskplan/rng.hpp"

#include <array>

namespace riskplan {

using Vec4 = std::array<double, 4>;

// Product-form distribution over an axis-aligned box, used both for the
// initial tracking error and for the per-trajectory control disturbances.
// Dimensions with zero scale are deterministic point components: they do not
// contribute a density factor, and samples return the center there.
struct BoxDistribution {
    enum class Kind { GaussianTruncated, UniformBox };

    Kind kind = Kind::GaussianTruncated;
    int dim = 3;
    Vec4 center{};
    Vec4 scale{};               // per-dim std (gaussian) or half-width (uniform)
    double support_sigma = 3.0; // gaussian support half-width, in stds

    double half_width(int i) const {
        return kind == Kind::GaussianTruncated ? support_sigma * scale[i] : scale[i];
    }
    double lo(int i) const { return center[i] - half_width(i); }
    double hi(int i) const { return center[i] + half_width(i); }

    bool in_support(const Vec4& x) const;
    // Normalized density over the truncated support; 0 outside.
    double density_at(const Vec4& x) const;
    // Draw from the distribution itself.
    Vec4 sample(Rng& rng) const;
    // Draw uniformly over the support box (used for query points).
    Vec4 sample_support_uniform(Rng& rng) const;
    // Volume of the support box over non-degenerate dims (1 if all degenerate).
    double support_volume() const;
    bool is_point() const;
};

} // namespace riskplan
