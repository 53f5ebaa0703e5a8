#include "riskplan/distributions.hpp"

#include <cmath>

namespace riskplan {

namespace {
constexpr double kSqrt2 = 1.41421356237309504880;
constexpr double kSqrt2Pi = 2.50662827463100050242;
} // namespace

bool BoxDistribution::in_support(const Vec4& x) const {
    for (int i = 0; i < dim; ++i) {
        if (scale[i] == 0.0) {
            if (x[i] != center[i]) return false;
        } else if (x[i] < lo(i) || x[i] > hi(i)) {
            return false;
        }
    }
    return true;
}

double BoxDistribution::density_at(const Vec4& x) const {
    if (!in_support(x)) return 0.0;
    double d = 1.0;
    for (int i = 0; i < dim; ++i) {
        if (scale[i] == 0.0) continue;
        if (kind == Kind::GaussianTruncated) {
            const double z = (x[i] - center[i]) / scale[i];
            const double norm = std::erf(support_sigma / kSqrt2); // truncated-mass factor
            d *= std::exp(-0.5 * z * z) / (scale[i] * kSqrt2Pi * norm);
        } else {
            d *= 1.0 / (2.0 * scale[i]);
        }
    }
    return d;
}

Vec4 BoxDistribution::sample(Rng& rng) const {
    Vec4 x = center;
    for (int i = 0; i < dim; ++i) {
        if (scale[i] == 0.0) continue;
        if (kind == Kind::GaussianTruncated) {
            double z = rng.normal();
            while (std::abs(z) > support_sigma) z = rng.normal();
            x[i] = center[i] + scale[i] * z;
        } else {
            x[i] = rng.uniform(lo(i), hi(i));
        }
    }
    return x;
}

Vec4 BoxDistribution::sample_support_uniform(Rng& rng) const {
    Vec4 x = center;
    for (int i = 0; i < dim; ++i) {
        if (scale[i] == 0.0) continue;
        x[i] = rng.uniform(lo(i), hi(i));
    }
    return x;
}

double BoxDistribution::support_volume() const {
    double v = 1.0;
    for (int i = 0; i < dim; ++i)
        if (scale[i] != 0.0) v *= 2.0 * half_width(i);
    return v;
}

bool BoxDistribution::is_point() const {
    for (int i = 0; i < dim; ++i)
        if (scale[i] != 0.0) return false;
    return true;
}

} // namespace riskplan
