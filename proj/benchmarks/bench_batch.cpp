// Timing comparison of the OpenMP batch kernels against their serial
// references: trajectory simulation and robustness labeling on the built-in
// benchmarks. Also cross-checks that both paths agree bit for bit.

#include "flexifal/batch.hpp"
#include "flexifal/dataset.hpp"
#include "flexifal/rng.hpp"
#include "flexifal/stl.hpp"
#include "flexifal/systems.hpp"

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

using namespace flexifal;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void bench_system(const std::string& name, std::size_t count, int jobs) {
    const Benchmark& b = find_benchmark(name);
    const auto spec = stl::parse(b.spec);

    std::vector<SearchPoint> points;
    points.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng = derive_stream(42, {i});
        points.push_back(sample_point(b.init, b.input_space, b.segments, b.horizon, rng));
    }

    auto t0 = std::chrono::steady_clock::now();
    const auto serial = batch::simulate_many_serial(*b.system, points, b.horizon, b.dt);
    const double t_serial = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    const auto parallel = batch::simulate_many(*b.system, points, b.horizon, b.dt, jobs);
    const double t_parallel = seconds_since(t0);

    bool identical = serial.size() == parallel.size();
    for (std::size_t i = 0; identical && i < serial.size(); ++i)
        identical = serial[i].states == parallel[i].states;

    t0 = std::chrono::steady_clock::now();
    const auto rho_serial = batch::robustness_many_serial(*spec, serial);
    const double t_rho_serial = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    const auto rho_parallel = batch::robustness_many(*spec, parallel, jobs);
    const double t_rho_parallel = seconds_since(t0);

    identical = identical && rho_serial == rho_parallel;

    std::printf("%-14s %6zu traj | simulate %8.3fs -> %8.3fs (x%.2f) | "
                "robustness %7.3fs -> %7.3fs (x%.2f) | %s\n",
                name.c_str(), count, t_serial, t_parallel,
                t_parallel > 0 ? t_serial / t_parallel : 0.0, t_rho_serial, t_rho_parallel,
                t_rho_parallel > 0 ? t_rho_serial / t_rho_parallel : 0.0,
                identical ? "bit-identical" : "MISMATCH");
}

} // namespace

int main(int argc, char** argv) {
    const int jobs = argc > 1 ? std::atoi(argv[1]) : 0;
    std::printf("jobs: %d (0 = OpenMP default)\n", jobs);
    // Spin up the worker pool before timing anything.
    batch::parallel_map<int>(64, jobs, [](std::size_t i) { return static_cast<int>(i); });
    bench_system("bouncing-ball", 2000, jobs);
    bench_system("two-tanks", 1000, jobs);
    bench_system("oscillator", 1000, jobs);
    bench_system("navigation", 300, jobs);
    bench_system("chasing-cars", 300, jobs);
    return 0;
}
