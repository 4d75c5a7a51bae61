#ifndef FLEXIFAL_DATASET_HPP
#define FLEXIFAL_DATASET_HPP

#include "flexifal/core.hpp"
#include "flexifal/rng.hpp"
#include "flexifal/stl.hpp"
#include "flexifal/systems.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace flexifal {

// Labeled input/output rows for surrogate training: one row per trajectory
// sample, features (x0, u_flat, t), label the state reached at t.
struct NNDataset {
    std::size_t state_dim = 0;
    std::size_t segments = 0;  // k
    std::size_t input_dim = 0; // m
    double horizon = 0.0;      // T
    double dt = 0.0;
    std::vector<std::string> input_names; // x0_.., u_.., t
    std::vector<std::string> label_names; // y_0..
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> labels;

    std::size_t rows() const { return inputs.size(); }
};

// One row per trajectory: flattened search point and its robustness.
struct RobustnessDataset {
    std::size_t state_dim = 0;
    std::size_t segments = 0;
    std::size_t input_dim = 0;
    double horizon = 0.0;
    double dt = 0.0;
    std::vector<std::string> names; // feature names (no rho column)
    std::vector<std::vector<double>> features;
    std::vector<double> robustness;

    std::size_t rows() const { return features.size(); }
};

// Per-feature MinMax ranges; a feature with max == min is degenerate and
// scales to 0.
struct ScalingParams {
    std::vector<double> mins;
    std::vector<double> maxs;

    std::size_t dim() const { return mins.size(); }
    bool degenerate(std::size_t i) const { return maxs[i] <= mins[i]; }
    double scale(std::size_t i, double v) const {
        return degenerate(i) ? 0.0 : (v - mins[i]) / (maxs[i] - mins[i]);
    }
    double unscale(std::size_t i, double v) const {
        return degenerate(i) ? mins[i] : mins[i] + v * (maxs[i] - mins[i]);
    }
};

// Draws a search point: the k segment inputs first, then the initial state,
// all uniform in their boxes.
SearchPoint sample_point(const Box& init, const Box& input_space, std::size_t segments,
                         double horizon, Rng& rng);

// Simulates with deterministic per-index resampling on numerical blow-up,
// so the returned count is exact. Trajectory i uses streams derived from
// (seed, i, retry).
struct SampledTrajectory {
    SearchPoint point;
    Trajectory trajectory;
};
std::vector<SampledTrajectory> sample_trajectories(const System& sys, const Box& init,
                                                   const Box& input_space, std::size_t segments,
                                                   double T, double dt, std::size_t count,
                                                   std::uint64_t seed, int jobs = 0,
                                                   int max_retries = 10);

NNDataset generate_nn_dataset(const System& sys, const Box& init, const Box& input_space,
                              std::size_t segments, double T, double dt, std::size_t trajectories,
                              std::uint64_t seed, int jobs = 0);

RobustnessDataset generate_robustness_dataset(const System& sys, const Box& init,
                                              const Box& input_space, std::size_t segments,
                                              double T, double dt, const stl::Formula& spec,
                                              std::size_t trajectories, std::uint64_t seed,
                                              int jobs = 0);

// MinMax scaling of a row-major feature matrix. Passing params reuses them
// (inference-time scaling); otherwise they are fit on the data.
std::pair<std::vector<std::vector<double>>, ScalingParams>
minmax_scale(const std::vector<std::vector<double>>& rows,
             const std::optional<ScalingParams>& params = std::nullopt);

std::vector<std::vector<double>> minmax_unscale(const std::vector<std::vector<double>>& rows,
                                                const ScalingParams& params);

// Percentage of safety-violating trajectories among `trajectories` random
// simulations.
double degree_of_difficulty(const System& sys, const Box& init, const Box& input_space,
                            std::size_t segments, double T, double dt, const stl::Formula& spec,
                            std::size_t trajectories, std::uint64_t seed, int jobs = 0);

// CSV and sidecar-metadata persistence; every dataset file is regenerable
// from its recorded seed and configuration.
std::string to_csv(const NNDataset& d);
std::string to_csv(const RobustnessDataset& d);

struct DatasetMeta {
    std::string kind; // "nn" | "robustness"
    std::string system;
    std::string spec; // empty for nn datasets
    std::uint64_t seed = 0;
    Box init;
    Box input_space;
    std::size_t segments = 0;
    std::size_t state_dim = 0;
    std::size_t input_dim = 0;
    std::size_t label_dim = 0;
    double horizon = 0.0;
    double dt = 0.0;
    std::size_t rows = 0;
};

std::string meta_to_json(const DatasetMeta& m);
DatasetMeta meta_from_json(const std::string& text);

NNDataset load_nn_dataset(const std::string& csv_path, const DatasetMeta& meta);
RobustnessDataset load_robustness_dataset(const std::string& csv_path, const DatasetMeta& meta);

} // namespace flexifal

#endif
