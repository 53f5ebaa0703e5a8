#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace riskplan {

using Vec4 = std::array<double, 4>;

// Nearest-neighbor queries over a point cloud in up to 4 dimensions.
// A uniform bucket grid accelerates lookups; the *_brute functions below are
// the serial reference implementation with identical tie-breaking (smallest
// squared distance, then lowest index), used by tests and the kernel bench.
class NnIndex {
public:
    NnIndex(std::vector<Vec4> pts, int dim, double cell = 0.0);

    int size() const { return static_cast<int>(pts_.size()); }
    double cell() const { return cell_; }

    // Index of the nearest point; ties broken by lowest index.
    int nearest(const Vec4& q) const;
    // True if any point lies within distance r of q.
    bool any_within(const Vec4& q, double r) const;
    // Distance from point i to its k-th nearest other point (k ≥ 1).
    double kth_nearest_dist(int i, int k) const;

private:
    std::vector<Vec4> pts_;
    int dim_;
    double cell_;
    Vec4 lo_{}, hi_{};
    std::array<int, 4> ncell_{};
    std::array<int, 4> stride_{};
    std::vector<int> bucket_start_; // CSR offsets, size ncells+1
    std::vector<int> order_;        // point indices sorted by bucket

    std::array<int, 4> cell_of(const Vec4& q) const;
    int bucket_id(const std::array<int, 4>& c) const;
    template <typename Visit>
    void scan_ring(const std::array<int, 4>& center, int ring, Visit&& visit) const;
};

// Serial reference implementations.
int nearest_brute(const std::vector<Vec4>& pts, int dim, const Vec4& q);
bool any_within_brute(const std::vector<Vec4>& pts, int dim, const Vec4& q, double r);
double kth_nearest_dist_brute(const std::vector<Vec4>& pts, int dim, int i, int k);

} // namespace riskplan
