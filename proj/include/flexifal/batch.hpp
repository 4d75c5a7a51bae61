#ifndef FLEXIFAL_BATCH_HPP
#define FLEXIFAL_BATCH_HPP

#include "flexifal/core.hpp"
#include "flexifal/stl.hpp"
#include "flexifal/systems.hpp"

#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

// Data-parallel kernels over independent simulation jobs. Every kernel has a
// serial twin used as the reference in tests and benchmarks; outputs are
// stored per index, so results are invariant to the worker count.
namespace flexifal::batch {

inline int resolve_jobs(int jobs) {
#ifdef _OPENMP
    return jobs > 0 ? jobs : omp_get_max_threads();
#else
    (void)jobs;
    return 1;
#endif
}

// Applies fn to every index in [0, count). Exceptions are captured per slot
// and the lowest-index one is rethrown once the loop has finished.
template <typename T, typename Fn>
std::vector<T> parallel_map(std::size_t count, int jobs, Fn&& fn) {
    std::vector<T> out(count);
    std::vector<std::exception_ptr> errors(count);
    const int n = resolve_jobs(jobs);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(n)
#endif
    for (long long i = 0; i < static_cast<long long>(count); ++i) {
        try {
            out[static_cast<std::size_t>(i)] = fn(static_cast<std::size_t>(i));
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    (void)n;
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

template <typename T, typename Fn>
std::vector<T> serial_map(std::size_t count, Fn&& fn) {
    std::vector<T> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
    return out;
}

std::vector<Trajectory> simulate_many(const System& sys, const std::vector<SearchPoint>& points,
                                      double T, double dt, int jobs);
std::vector<Trajectory> simulate_many_serial(const System& sys,
                                             const std::vector<SearchPoint>& points, double T,
                                             double dt);

std::vector<double> robustness_many(const stl::Formula& f,
                                    const std::vector<Trajectory>& trajectories, int jobs);
std::vector<double> robustness_many_serial(const stl::Formula& f,
                                           const std::vector<Trajectory>& trajectories);

} // namespace flexifal::batch

#endif
