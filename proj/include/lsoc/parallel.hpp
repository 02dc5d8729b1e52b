#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <utility>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace lsoc {

/// Execution policy for the data-parallel kernels. Every parallel kernel has
/// a serial twin reached through Exec::serial; tests compare the two bitwise
/// and the benchmark target compares their timings.
enum class Exec { serial, parallel };

/// Loop over [0, n) with the given policy. Iterations must write to disjoint
/// slots; reductions are done by the caller as ordered serial folds so that
/// results do not depend on the worker count.
template <typename Body>
void parallel_for(Exec exec, std::int64_t n, Body&& body) {
#if defined(_OPENMP)
    if (exec == Exec::parallel) {
        std::atomic<bool> failed{false};
        std::exception_ptr error = nullptr;
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            if (failed.load(std::memory_order_relaxed)) continue;
            try {
                body(i);
            } catch (...) {
#pragma omp critical(lsoc_parallel_for_error)
                {
                    if (!failed.exchange(true)) error = std::current_exception();
                }
            }
        }
        if (error) std::rethrow_exception(error);
        return;
    }
#else
    (void)exec;
#endif
    for (std::int64_t i = 0; i < n; ++i) body(i);
}

inline int max_threads() {
#if defined(_OPENMP)
    return omp_get_max_threads();
#else
    return 1;
#endif
}

inline void set_threads(int n) {
#if defined(_OPENMP)
    omp_set_num_threads(n);
#else
    (void)n;
#endif
}

} // namespace lsoc
