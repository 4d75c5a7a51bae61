#include "flexifal/batch.hpp"

namespace flexifal::batch {

std::vector<Trajectory> simulate_many(const System& sys, const std::vector<SearchPoint>& points,
                                      double T, double dt, int jobs) {
    return parallel_map<Trajectory>(points.size(), jobs, [&](std::size_t i) {
        return sys.simulate_point(points[i], T, dt);
    });
}

std::vector<Trajectory> simulate_many_serial(const System& sys,
                                             const std::vector<SearchPoint>& points, double T,
                                             double dt) {
    return serial_map<Trajectory>(points.size(), [&](std::size_t i) {
        return sys.simulate_point(points[i], T, dt);
    });
}

std::vector<double> robustness_many(const stl::Formula& f,
                                    const std::vector<Trajectory>& trajectories, int jobs) {
    return parallel_map<double>(trajectories.size(), jobs, [&](std::size_t i) {
        return stl::robustness(f, trajectories[i]).value;
    });
}

std::vector<double> robustness_many_serial(const stl::Formula& f,
                                           const std::vector<Trajectory>& trajectories) {
    return serial_map<double>(trajectories.size(), [&](std::size_t i) {
        return stl::robustness(f, trajectories[i]).value;
    });
}

} // namespace flexifal::batch
