#include "flexifal/dtfal.hpp"

#include "flexifal/batch.hpp"
#include "flexifal/rng.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <optional>
#include <stdexcept>

namespace flexifal::dtfal {

void DtfalConfig::validate() const {
    if (initial_trajectories < 1 || epochs < 1 || samples_per_leaf < 1 ||
        min_counterexamples < 1 || segments < 1 || leaf_cap < 1)
        throw std::invalid_argument("dtfal config counts must all be >= 1");
    if (horizon <= 0.0 || dt <= 0.0) throw std::invalid_argument("dtfal needs T > 0 and dt > 0");
}

namespace {

// Disjoint stream tags under one master seed.
enum : std::uint64_t { kDatasetStream = 0, kLeafStream = 1, kInjectStream = 2 };

struct SampleOutcome {
    SearchPoint point;
    Trajectory trajectory;
    double robustness = 0.0;
    bool blown_up = false;
};

} // namespace

SampleBatch sample_and_simulate(const System& sys, const Box& box, const stl::Formula& spec,
                                std::size_t count, std::uint64_t seed, std::size_t segments,
                                double horizon, double dt, int jobs) {
    if (count < 1) throw std::invalid_argument("sample_and_simulate needs count >= 1");
    box.validate();
    const std::size_t n0 = sys.state_dim();
    const std::size_t m = sys.input_dim();
    if (box.dim() != n0 + segments * m)
        throw std::invalid_argument("sample box does not match the flattened feature layout");

    const auto outcomes = batch::parallel_map<SampleOutcome>(count, jobs, [&](std::size_t i) {
        Rng rng = derive_stream(seed, {i});
        std::vector<double> feats(box.dim());
        for (std::size_t d = 0; d < box.dim(); ++d)
            feats[d] = rng.uniform(box.lows[d], box.highs[d]);
        SampleOutcome out;
        out.point = unflatten(feats, n0, segments, m, horizon);
        try {
            out.trajectory = sys.simulate(out.point.x0, out.point.u, horizon, dt);
            out.robustness = stl::robustness(spec, out.trajectory).value;
        } catch (const SimulationError&) {
            out.blown_up = true;
        }
        return out;
    });

    SampleBatch batch;
    for (const auto& o : outcomes) {
        if (o.blown_up) {
            ++batch.blowups;
            continue;
        }
        batch.rows.push_back(flatten(o.point));
        batch.row_robustness.push_back(o.robustness);
        if (o.robustness < 0.0)
            batch.counterexamples.push_back({o.point, o.trajectory, o.robustness});
    }
    return batch;
}

DtfalReport run(const System& sys, const Box& init, const Box& input_space,
                const stl::Formula& spec, const DtfalConfig& cfg) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();

    const Box search_box = flatten_search_space(init, input_space, cfg.segments);
    RobustnessDataset data = generate_robustness_dataset(
        sys, init, input_space, cfg.segments, cfg.horizon, cfg.dt, spec, cfg.initial_trajectories,
        derive_seed(cfg.seed, {kDatasetStream}), cfg.jobs);

    DtfalReport report;
    report.total_simulations = cfg.initial_trajectories;

    const auto finish = [&](bool falsified, std::size_t epochs_used) {
        report.falsified = falsified;
        report.epochs_used = epochs_used;
        report.wall_time_secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        return report;
    };
    const auto absorb = [&](const SampleBatch& batch, LeafDiagnostic* diag) {
        report.total_simulations += cfg.samples_per_leaf;
        for (const auto& ce : batch.counterexamples) report.counterexamples.push_back(ce);
        if (diag) {
            diag->counterexamples = batch.counterexamples.size();
            diag->simulations = cfg.samples_per_leaf;
            diag->blowups = batch.blowups;
        }
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        EpochDiagnostic ediag;
        ediag.epoch = epoch;
        ediag.dataset_rows = data.rows();

        const auto tree = dtree::DecisionTree::fit(data, cfg.tree_params);
        for (const auto& n : tree.nodes()) ediag.tree_leaves += n.is_leaf() ? 1 : 0;

        std::vector<int> leaves = tree.falsifying_leaves();
        ediag.used_nearest = leaves.empty();
        if (ediag.used_nearest) leaves = tree.nearest_leaves();
        if (leaves.size() > cfg.leaf_cap) leaves.resize(cfg.leaf_cap);

        bool grew = false;
        for (std::size_t rank = 0; rank < leaves.size(); ++rank) {
            const int leaf = leaves[rank];
            LeafDiagnostic diag;
            diag.rank = rank;
            diag.predicted_rho = tree.nodes()[leaf].value;
            diag.falsifying = !ediag.used_nearest;

            const auto exp = tree.explanation(leaf);
            diag.explanation = exp.to_string();
            const auto box = explanation_box(exp, search_box);
            if (!box) {
                diag.box_empty = true;
                ediag.leaves.push_back(std::move(diag));
                continue;
            }

            const auto batch = sample_and_simulate(
                sys, *box, spec, cfg.samples_per_leaf,
                derive_seed(cfg.seed, {kLeafStream, epoch, rank}), cfg.segments, cfg.horizon,
                cfg.dt, cfg.jobs);
            absorb(batch, &diag);
            ediag.leaves.push_back(std::move(diag));

            if (report.counterexamples.size() >= cfg.min_counterexamples) {
                report.epochs.push_back(std::move(ediag));
                return finish(true, epoch + 1);
            }
            if (!batch.rows.empty()) {
                grew = true;
                for (std::size_t r = 0; r < batch.rows.size(); ++r) {
                    data.features.push_back(batch.rows[r]);
                    data.robustness.push_back(batch.row_robustness[r]);
                }
            }
        }

        if (!grew) {
            // Every leaf came back empty or blown up; inject fresh uniform
            // rows so the refit sees new data.
            ediag.injected_fresh_rows = true;
            const auto batch = sample_and_simulate(sys, search_box, spec, cfg.samples_per_leaf,
                                                   derive_seed(cfg.seed, {kInjectStream, epoch}),
                                                   cfg.segments, cfg.horizon, cfg.dt, cfg.jobs);
            absorb(batch, nullptr);
            for (std::size_t r = 0; r < batch.rows.size(); ++r) {
                data.features.push_back(batch.rows[r]);
                data.robustness.push_back(batch.row_robustness[r]);
            }
            if (report.counterexamples.size() >= cfg.min_counterexamples) {
                report.epochs.push_back(std::move(ediag));
                return finish(true, epoch + 1);
            }
        }
        report.epochs.push_back(std::move(ediag));
    }
    return finish(false, cfg.epochs);
}

std::string report_to_json(const DtfalReport& report, const DtfalConfig& cfg,
                           const std::string& system_name, const std::string& spec_text,
                           const std::vector<std::string>& trajectory_refs,
                           bool include_timing) {
    nlohmann::json j;
    j["tool"] = "flexifal";
    j["strategy"] = "dtfal";
    j["falsified"] = report.falsified;
    j["config"] = {
        {"system", system_name},
        {"spec", spec_text},
        {"initial_trajectories", cfg.initial_trajectories},
        {"epochs", cfg.epochs},
        {"samples_per_leaf", cfg.samples_per_leaf},
        {"min_counterexamples", cfg.min_counterexamples},
        {"segments", cfg.segments},
        {"horizon", cfg.horizon},
        {"dt", cfg.dt},
        {"seed", cfg.seed},
        {"leaf_cap", cfg.leaf_cap},
    };
    j["total_simulations"] = report.total_simulations;
    j["epochs_used"] = report.epochs_used;
    if (include_timing) j["wall_time_secs"] = report.wall_time_secs;

    auto ces = nlohmann::json::array();
    for (std::size_t i = 0; i < report.counterexamples.size(); ++i) {
        const auto& ce = report.counterexamples[i];
        nlohmann::json c;
        c["features"] = flatten(ce.point);
        c["robustness"] = ce.robustness;
        if (i < trajectory_refs.size()) c["trajectory_file"] = trajectory_refs[i];
        ces.push_back(std::move(c));
    }
    j["counterexamples"] = std::move(ces);

    auto epochs = nlohmann::json::array();
    for (const auto& e : report.epochs) {
        nlohmann::json ej{
            {"epoch", e.epoch},
            {"dataset_rows", e.dataset_rows},
            {"tree_leaves", e.tree_leaves},
            {"used_nearest", e.used_nearest},
            {"injected_fresh_rows", e.injected_fresh_rows},
        };
        auto leaves = nlohmann::json::array();
        for (const auto& l : e.leaves)
            leaves.push_back({{"rank", l.rank},
                              {"predicted_rho", l.predicted_rho},
                              {"falsifying", l.falsifying},
                              {"box_empty", l.box_empty},
                              {"explanation", l.explanation},
                              {"counterexamples", l.counterexamples},
                              {"simulations", l.simulations},
                              {"blowups", l.blowups}});
        ej["leaves"] = std::move(leaves);
        epochs.push_back(std::move(ej));
    }
    j["epoch_diagnostics"] = std::move(epochs);
    return j.dump(2);
}

} // namespace flexifal::dtfal
