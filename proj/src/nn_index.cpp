#include "riskplan/nn_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace riskplan {

namespace {

double dist2(const Vec4& a, const Vec4& b, int dim) {
    double s = 0;
    for (int i = 0; i < dim; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// top-k accumulator for small k
struct TopK {
    int k;
    double d2[8];
    int n = 0;
    explicit TopK(int k) : k(k) {
        for (double& v : d2) v = std::numeric_limits<double>::infinity();
    }
    void push(double v) {
        if (v >= d2[k - 1]) return;
        int j = std::min(n, k - 1);
        while (j > 0 && d2[j - 1] > v) {
            d2[j] = d2[j - 1];
            --j;
        }
        d2[j] = v;
        if (n < k) ++n;
    }
    double worst() const { return d2[k - 1]; }
};

} // namespace

NnIndex::NnIndex(std::vector<Vec4> pts, int dim, double cell)
    : pts_(std::move(pts)), dim_(dim), cell_(cell) {
    const int n = static_cast<int>(pts_.size());
    for (int i = 0; i < 4; ++i) {
        lo_[i] = 0;
        hi_[i] = 0;
    }
    if (n > 0) {
        lo_ = hi_ = pts_[0];
        for (const Vec4& p : pts_)
            for (int i = 0; i < dim_; ++i) {
                lo_[i] = std::min(lo_[i], p[i]);
                hi_[i] = std::max(hi_[i], p[i]);
            }
    }
    if (cell_ <= 0.0) {
        // aim for order-one points per bucket
        double vol = 1.0;
        int live = 0;
        for (int i = 0; i < dim_; ++i) {
            const double r = hi_[i] - lo_[i];
            if (r > 0) {
                vol *= r;
                ++live;
            }
        }
        cell_ = (live > 0 && n > 0) ? std::pow(vol / n, 1.0 / live) : 1.0;
        if (cell_ <= 0.0 || !std::isfinite(cell_)) cell_ = 1.0;
    }
    // bound total bucket count
    auto compute_cells = [&]() {
        long long total = 1;
        for (int i = 0; i < dim_; ++i) {
            const double r = hi_[i] - lo_[i];
            ncell_[i] = std::max(1, static_cast<int>(r / cell_) + 1);
            total *= ncell_[i];
        }
        for (int i = dim_; i < 4; ++i) ncell_[i] = 1;
        return total;
    };
    while (compute_cells() > (1LL << 22)) cell_ *= 1.5;
    stride_[0] = 1;
    for (int i = 1; i < 4; ++i) stride_[i] = stride_[i - 1] * ncell_[i - 1];
    const int nbuckets = stride_[3] * ncell_[3];

    // counting sort points into buckets
    bucket_start_.assign(nbuckets + 1, 0);
    std::vector<int> ids(n);
    for (int p = 0; p < n; ++p) {
        ids[p] = bucket_id(cell_of(pts_[p]));
        ++bucket_start_[ids[p] + 1];
    }
    for (int b = 0; b < nbuckets; ++b) bucket_start_[b + 1] += bucket_start_[b];
    order_.resize(n);
    std::vector<int> cursor(bucket_start_.begin(), bucket_start_.end() - 1);
    for (int p = 0; p < n; ++p) order_[cursor[ids[p]]++] = p;
}

std::array<int, 4> NnIndex::cell_of(const Vec4& q) const {
    std::array<int, 4> c{};
    for (int i = 0; i < dim_; ++i) c[i] = static_cast<int>(std::floor((q[i] - lo_[i]) / cell_));
    return c;
}

int NnIndex::bucket_id(const std::array<int, 4>& c) const {
    int id = 0;
    for (int i = 0; i < dim_; ++i) id += c[i] * stride_[i];
    return id;
}

template <typename Visit>
void NnIndex::scan_ring(const std::array<int, 4>& center, int ring, Visit&& visit) const {
    // visit buckets at exactly Chebyshev distance `ring`, clipped to the grid
    std::array<int, 4> from{}, to{};
    for (int i = 0; i < 4; ++i) {
        if (i < dim_) {
            from[i] = std::max(0, center[i] - ring);
            to[i] = std::min(ncell_[i] - 1, center[i] + ring);
            if (from[i] > to[i]) return;
        } else {
            from[i] = to[i] = 0;
        }
    }
    std::array<int, 4> c{};
    for (c[3] = from[3]; c[3] <= to[3]; ++c[3])
        for (c[2] = from[2]; c[2] <= to[2]; ++c[2])
            for (c[1] = from[1]; c[1] <= to[1]; ++c[1])
                for (c[0] = from[0]; c[0] <= to[0]; ++c[0]) {
                    int cheb = 0;
                    for (int i = 0; i < dim_; ++i) cheb = std::max(cheb, std::abs(c[i] - center[i]));
                    if (cheb != ring) continue;
                    const int b = bucket_id(c);
                    for (int s = bucket_start_[b]; s < bucket_start_[b + 1]; ++s) visit(order_[s]);
                }
}

int NnIndex::nearest(const Vec4& q) const {
    const auto center = cell_of(q);
    int ring_limit = 1;
    for (int i = 0; i < dim_; ++i)
        ring_limit = std::max(ring_limit, std::max(center[i], ncell_[i] - 1 - center[i]) + 1);

    double best_d2 = std::numeric_limits<double>::infinity();
    int best = -1;
    for (int ring = 0; ring <= ring_limit; ++ring) {
        scan_ring(center, ring, [&](int p) {
            const double d2v = dist2(pts_[p], q, dim_);
            if (d2v < best_d2 || (d2v == best_d2 && p < best)) {
                best_d2 = d2v;
                best = p;
            }
        });
        // points in ring k+1 are at least k*cell away; strict so exact ties
        // in farther rings (lower index) are still found
        if (best >= 0) {
            const double guard = ring * cell_;
            if (best_d2 < guard * guard) break;
        }
    }
    return best;
}

bool NnIndex::any_within(const Vec4& q, double r) const {
    const auto center = cell_of(q);
    int ring_limit = 1;
    for (int i = 0; i < dim_; ++i)
        ring_limit = std::max(ring_limit, std::max(center[i], ncell_[i] - 1 - center[i]) + 1);
    const double r2 = r * r;
    for (int ring = 0; ring <= ring_limit; ++ring) {
        if (ring >= 1 && (ring - 1) * cell_ > r) return false;
        bool hit = false;
        scan_ring(center, ring, [&](int p) {
            if (!hit && dist2(pts_[p], q, dim_) <= r2) hit = true;
        });
        if (hit) return true;
    }
    return false;
}

double NnIndex::kth_nearest_dist(int i, int k) const {
    TopK top(std::min(k, 8));
    const auto center = cell_of(pts_[i]);
    int ring_limit = 1;
    for (int d = 0; d < dim_; ++d)
        ring_limit = std::max(ring_limit, std::max(center[d], ncell_[d] - 1 - center[d]) + 1);
    for (int ring = 0; ring <= ring_limit; ++ring) {
        const double guard = (ring - 1) * cell_;
        if (ring >= 1 && top.n >= top.k && top.worst() < guard * guard) break;
        scan_ring(center, ring, [&](int p) {
            if (p != i) top.push(dist2(pts_[p], pts_[i], dim_));
        });
    }
    return std::sqrt(top.worst());
}

int nearest_brute(const std::vector<Vec4>& pts, int dim, const Vec4& q) {
    double best_d2 = std::numeric_limits<double>::infinity();
    int best = -1;
    for (int p = 0; p < static_cast<int>(pts.size()); ++p) {
        const double d2v = dist2(pts[p], q, dim);
        if (d2v < best_d2) {
            best_d2 = d2v;
            best = p;
        }
    }
    return best;
}

bool any_within_brute(const std::vector<Vec4>& pts, int dim, const Vec4& q, double r) {
    const double r2 = r * r;
    for (const Vec4& p : pts)
        if (dist2(p, q, dim) <= r2) return true;
    return false;
}

double kth_nearest_dist_brute(const std::vector<Vec4>& pts, int dim, int i, int k) {
    TopK top(std::min(k, 8));
    for (int p = 0; p < static_cast<int>(pts.size()); ++p)
        if (p != i) top.push(dist2(pts[p], pts[i], dim));
    return std::sqrt(top.worst());
}

} // namespace riskplan
