#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace diffhpe::par {

// Process-wide switch for the OpenMP code paths. Off -> every kernel runs its
// plain serial loop. Thread count 0 means "library default".
bool enabled();
void set_enabled(bool on);
int thread_count();
void set_thread_count(int n);

inline int current_thread() {
#ifdef _OPENMP
    return omp_get_thread_num();
#else
    return 0;
#endif
}

inline int max_workers() {
#ifdef _OPENMP
    if (!enabled()) return 1;
    int n = thread_count();
    return n > 0 ? n : omp_get_max_threads();
#else
    return 1;
#endif
}

// Static-schedule parallel loop over [0, n). Each index must be independent;
// reductions are the caller's job (per-worker buffers merged in worker order).
template <class F>
void for_each_index(int n, F&& body) {
#ifdef _OPENMP
    if (enabled() && n > 1) {
        const int threads = max_workers();
#pragma omp parallel for schedule(static) num_threads(threads)
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
#endif
    for (int i = 0; i < n; ++i) body(i);
}

}  // namespace diffhpe::par
