#pragma once

#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bmf {

/// Run fn(i) for i in [0, n), across OpenMP threads when `parallel` is set.
/// The first exception thrown by any iteration is rethrown on the caller.
template <typename Fn>
void parallel_for(int n, bool parallel, Fn&& fn) {
#ifdef _OPENMP
    if (parallel && n > 1 && omp_get_max_threads() > 1) {
        std::exception_ptr error;
        std::mutex error_mutex;
#pragma omp parallel for schedule(dynamic, 8)
        for (int i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error)
                    error = std::current_exception();
            }
        }
        if (error)
            std::rethrow_exception(error);
        return;
    }
#endif
    (void)parallel;
    for (int i = 0; i < n; ++i)
        fn(i);
}

} // namespace bmf
