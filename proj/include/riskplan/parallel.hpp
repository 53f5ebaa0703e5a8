#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace riskplan {

inline void set_thread_count(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

inline int thread_count() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// Parallel loop over [0, n). Each iteration must write only to its own
// output slots; results are then identical for any thread count.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) fn(i);
#else
    for (std::int64_t i = 0; i < n; ++i) fn(i);
#endif
}

// Serial twin of parallel_for, kept as the reference path for tests and the
// kernel benchmark.
template <typename Fn>
void serial_for(std::int64_t n, Fn&& fn) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
}

} // namespace riskplan
