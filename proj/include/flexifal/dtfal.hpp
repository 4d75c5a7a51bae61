#ifndef FLEXIFAL_DTFAL_HPP
#define FLEXIFAL_DTFAL_HPP

#include "flexifal/core.hpp"
#include "flexifal/dataset.hpp"
#include "flexifal/dtree.hpp"
#include "flexifal/stl.hpp"
#include "flexifal/systems.hpp"

#include <cstdint>
#include <string>
#include <vector>

// Decision-tree guided falsification: label random trajectories with their
// robustness, fit a regression tree, sample from the explanation regions of
// the most violating leaves, grow the dataset, refit.
namespace flexifal::dtfal {

struct DtfalConfig {
    std::size_t initial_trajectories = 200; // N
    std::size_t epochs = 10;                // retrain budget
    std::size_t samples_per_leaf = 50;      // R
    std::size_t min_counterexamples = 1;    // min_ce
    std::size_t segments = 1;               // k
    double horizon = 1.0;                   // T
    double dt = 0.1;
    std::uint64_t seed = 0;
    std::size_t leaf_cap = 8; // leaves processed per epoch
    int jobs = 0;
    dtree::FitParams tree_params{};

    void validate() const;
};

struct LeafDiagnostic {
    std::size_t rank = 0;
    double predicted_rho = 0.0;
    bool falsifying = true; // false when taken from the nearest-leaf fallback
    bool box_empty = false;
    std::string explanation;
    std::size_t counterexamples = 0;
    std::size_t simulations = 0;
    std::size_t blowups = 0;
};

struct EpochDiagnostic {
    std::size_t epoch = 0;
    std::size_t dataset_rows = 0; // before this epoch's sampling
    std::size_t tree_leaves = 0;
    bool used_nearest = false;
    bool injected_fresh_rows = false;
    std::vector<LeafDiagnostic> leaves;
};

struct DtfalReport {
    bool falsified = false;
    std::vector<Counterexample> counterexamples;
    std::size_t total_simulations = 0;
    std::size_t epochs_used = 0;
    std::vector<EpochDiagnostic> epochs;
    double wall_time_secs = 0.0;
};

// R uniform samples from the box, each simulated and monitored. Rows carry
// the exact observed robustness; blown-up simulations are dropped from the
// rows (they still count as draws) and counterexamples are the rho < 0 ones.
struct SampleBatch {
    std::vector<Counterexample> counterexamples;
    std::vector<std::vector<double>> rows;
    std::vector<double> row_robustness;
    std::size_t blowups = 0;
};
SampleBatch sample_and_simulate(const System& sys, const Box& box, const stl::Formula& spec,
                                std::size_t count, std::uint64_t seed, std::size_t segments,
                                double horizon, double dt, int jobs = 0);

DtfalReport run(const System& sys, const Box& init, const Box& input_space,
                const stl::Formula& spec, const DtfalConfig& cfg);

// Report JSON with the run configuration, flattened counterexamples (plus
// caller-provided trajectory file references) and per-epoch diagnostics.
// Wall time is emitted only when include_timing is set, keeping default
// reports byte-identical across reruns.
std::string report_to_json(const DtfalReport& report, const DtfalConfig& cfg,
                           const std::string& system_name, const std::string& spec_text,
                           const std::vector<std::string>& trajectory_refs,
                           bool include_timing = false);

} // namespace flexifal::dtfal

#endif
