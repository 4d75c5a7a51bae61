// Acceptance suite: runs each numbered criterion at its stated tolerance and
// prints one PASS/FAIL line per criterion. `--only N` restricts to one.

#include "flexifal/batch.hpp"
#include "flexifal/core.hpp"
#include "flexifal/dataset.hpp"
#include "flexifal/dtfal.hpp"
#include "flexifal/dtree.hpp"
#include "flexifal/nnfal.hpp"
#include "flexifal/rng.hpp"
#include "flexifal/stl.hpp"
#include "flexifal/systems.hpp"
#include "support/oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

using namespace flexifal;

namespace {

struct Gate {
    std::vector<std::string> failures;
    void require(bool cond, const std::string& what) {
        if (!cond) failures.push_back(what);
    }
};

double elapsed_secs(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const Box kUnitBox{{0.0}, {1.0}};
const Box kNoInput{{}, {}};

// ---------------------------------------------------------------------------
// 1. STL oracle equivalence
// ---------------------------------------------------------------------------
void criterion_1(Gate& gate) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(20240617);
    const std::vector<std::string> vars{"x", "y"};
    for (int i = 0; i < 1000; ++i) {
        const auto traj = testing::random_trajectory(rng, 50);
        const auto f = testing::random_formula(rng, vars, traj.horizon() / 4.0, traj.dt, 3);
        const double expect = testing::oracle_rho(*f, traj, 0);
        const double got = stl::robustness(*f, traj, 0.0).value;
        gate.require(std::fabs(got - expect) <= 1e-9,
                     "robustness diverged from the oracle by " +
                         format_double(std::fabs(got - expect)) + " on case " +
                         std::to_string(i));
        const bool sat = stl::satisfies(*f, traj, 0.0);
        if (got > 0.0) gate.require(sat, "rho > 0 but not satisfied, case " + std::to_string(i));
        if (got < 0.0) gate.require(!sat, "rho < 0 but satisfied, case " + std::to_string(i));
    }
    gate.require(elapsed_secs(t0) < 10.0, "exceeded the 10 s budget");
}

// ---------------------------------------------------------------------------
// 2. Negation/min-max laws and desugaring, exact
// ---------------------------------------------------------------------------
void criterion_2(Gate& gate) {
    Rng rng(42);
    const std::vector<std::string> vars{"x", "y"};
    for (int i = 0; i < 500; ++i) {
        const auto traj = testing::random_trajectory(rng, 40);
        const double cap = traj.horizon() / 4.0;
        const auto a = testing::random_formula(rng, vars, cap, traj.dt, 2);
        const auto b = testing::random_formula(rng, vars, cap, traj.dt, 2);
        const double ra = stl::robustness(*a, traj).value;
        const double rb = stl::robustness(*b, traj).value;
        gate.require(stl::robustness(*stl::negate(a), traj).value == -ra, "negation law broke");
        gate.require(stl::robustness(*stl::conj(a, b), traj).value == std::min(ra, rb),
                     "And is not min");
        gate.require(stl::robustness(*stl::disj(a, b), traj).value == std::max(ra, rb),
                     "Or is not max");
        const auto f = testing::random_formula(rng, vars, cap, traj.dt, 3);
        gate.require(stl::robustness(*stl::desugar(f), traj).value ==
                         stl::robustness(*f, traj).value,
                     "desugar changed robustness");
    }
}

// ---------------------------------------------------------------------------
// 3. CART split oracle
// ---------------------------------------------------------------------------
void criterion_3(Gate& gate) {
    Rng rng(1234);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t rows = 2 + rng.below(19);
        const std::size_t feats = 1 + rng.below(3);
        RobustnessDataset d;
        for (std::size_t i = 0; i < feats; ++i) d.names.push_back("f" + std::to_string(i));
        d.features.resize(rows);
        d.robustness.resize(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            d.features[r].resize(feats);
            for (auto& v : d.features[r]) v = std::floor(rng.uniform(0.0, 6.0));
            d.robustness[r] = rng.uniform(-2.0, 2.0);
        }
        const auto oracle = testing::oracle_best_split(d.features, d.robustness);
        const auto tree = dtree::DecisionTree::fit(d);
        if (!oracle.found) {
            gate.require(tree.nodes()[0].is_leaf(), "fit split where the oracle found none");
            continue;
        }
        gate.require(!tree.nodes()[0].is_leaf(), "fit found no split where the oracle did");
        if (tree.nodes()[0].is_leaf()) continue;
        gate.require(tree.nodes()[0].feature == oracle.feature &&
                         tree.nodes()[0].threshold == oracle.threshold,
                     "split disagrees with the oracle on trial " + std::to_string(trial));
        // Leaf predictions equal the routed means exactly.
        std::vector<double> sums(tree.nodes().size(), 0.0);
        std::vector<std::size_t> counts(tree.nodes().size(), 0);
        for (std::size_t r = 0; r < rows; ++r) {
            const auto leaf = static_cast<std::size_t>(tree.route(d.features[r]));
            sums[leaf] += d.robustness[r];
            counts[leaf] += 1;
        }
        for (std::size_t n = 0; n < tree.nodes().size(); ++n)
            if (tree.nodes()[n].is_leaf())
                gate.require(tree.nodes()[n].value ==
                                 sums[n] / static_cast<double>(counts[n]),
                             "leaf value is not the routed mean");
    }
}

// ---------------------------------------------------------------------------
// 4. Explanation soundness + the worked figures
// ---------------------------------------------------------------------------
void criterion_4(Gate& gate) {
    Rng rng(777);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t rows = 30 + rng.below(50);
        const std::size_t feats = 1 + rng.below(3);
        RobustnessDataset d;
        for (std::size_t i = 0; i < feats; ++i) d.names.push_back("f" + std::to_string(i));
        d.features.resize(rows);
        d.robustness.resize(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            d.features[r].resize(feats);
            for (auto& v : d.features[r]) v = rng.uniform(0.0, 1.0);
            d.robustness[r] = rng.uniform(-1.0, 1.0);
        }
        const auto tree = dtree::DecisionTree::fit(d);
        Box search;
        search.lows.assign(feats, 0.0);
        search.highs.assign(feats, 1.0);
        for (int leaf = 0; leaf < static_cast<int>(tree.nodes().size()); ++leaf) {
            if (!tree.nodes()[leaf].is_leaf()) continue;
            const auto box = dtree::explanation_box(tree.explanation(leaf), search);
            if (!box) {
                gate.require(false, "a fitted leaf has an empty explanation box");
                continue;
            }
            for (int s = 0; s < 1000; ++s) {
                std::vector<double> x(feats);
                for (std::size_t i = 0; i < feats; ++i)
                    x[i] = rng.uniform(box->lows[i], box->highs[i]);
                if (tree.route(x) != leaf) {
                    gate.require(false, "sample escaped its leaf on trial " +
                                            std::to_string(trial));
                    break;
                }
            }
        }
    }

    // Worked figure: falsifying leaf under [phi <= 7.525] -> [phi <= 4.18].
    {
        std::vector<dtree::Node> nodes(5);
        nodes[0] = {.parent = -1, .left = 1, .right = 4, .feature = 0, .threshold = 7.525};
        nodes[1] = {.parent = 0, .left = 2, .right = 3, .feature = 0, .threshold = 4.18};
        nodes[2] = {.parent = 1, .left = -1, .right = -1, .value = -2.97, .count = 12};
        nodes[3] = {.parent = 1, .left = -1, .right = -1, .value = 1.3, .count = 40};
        nodes[4] = {.parent = 0, .left = -1, .right = -1, .value = 4.0, .count = 30};
        const auto tree = dtree::DecisionTree::from_nodes(nodes, {"phi", "psi"});
        const auto fals = tree.falsifying_leaves();
        gate.require(fals.size() == 1, "figure tree should have one falsifying leaf");
        const auto exp = tree.explanation(fals[0]);
        gate.require(exp.to_string() == "phi <= 4.18 & phi <= 7.525",
                     "falsifying-leaf explanation was '" + exp.to_string() + "'");
    }
    // Worked figure: nearest leaf under [psi <= 5.38] -> right -> [phi <= 7.525] -> right.
    {
        std::vector<dtree::Node> nodes(5);
        nodes[0] = {.parent = -1, .left = 1, .right = 2, .feature = 1, .threshold = 5.38};
        nodes[1] = {.parent = 0, .left = -1, .right = -1, .value = 5.0, .count = 20};
        nodes[2] = {.parent = 0, .left = 3, .right = 4, .feature = 0, .threshold = 7.525};
        nodes[3] = {.parent = 2, .left = -1, .right = -1, .value = 4.2, .count = 9};
        nodes[4] = {.parent = 2, .left = -1, .right = -1, .value = 3.51, .count = 6};
        const auto tree = dtree::DecisionTree::from_nodes(nodes, {"phi", "psi"});
        gate.require(tree.falsifying_leaves().empty(), "figure tree must have no negative leaf");
        const auto near = tree.nearest_leaves();
        gate.require(near.size() == 1 && tree.nodes()[near[0]].value == 3.51,
                     "nearest leaf should be 3.51");
        const auto exp = tree.explanation(near[0]);
        gate.require(exp.to_string() == "phi > 7.525 & psi > 5.38",
                     "nearest-leaf explanation was '" + exp.to_string() + "'");
    }
}

// ---------------------------------------------------------------------------
// 5. DTFal end-to-end on the analytic benchmark
// ---------------------------------------------------------------------------
void criterion_5(Gate& gate) {
    const auto sys = make_system("const1d");
    const auto spec = stl::parse("G[0,1] x < 0.1");
    std::size_t successes = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        dtfal::DtfalConfig cfg;
        cfg.initial_trajectories = 50;
        cfg.samples_per_leaf = 20;
        cfg.epochs = 2;
        cfg.min_counterexamples = 1;
        cfg.segments = 1;
        cfg.horizon = 1.0;
        cfg.dt = 0.1;
        cfg.seed = seed;
        const auto t0 = std::chrono::steady_clock::now();
        const auto report = dtfal::run(*sys, kUnitBox, kNoInput, *spec, cfg);
        const double secs = elapsed_secs(t0);
        gate.require(secs < 5.0, "run took " + format_double(secs) + " s");
        gate.require(report.total_simulations <= 500,
                     "run used " + std::to_string(report.total_simulations) + " simulations");
        if (report.falsified) {
            ++successes;
            for (const auto& ce : report.counterexamples)
                gate.require(ce.point.x0[0] > 0.1 && ce.robustness < 0.0,
                             "counterexample outside the violating set");
        }
    }
    gate.require(successes == 10,
                 "falsification rate " + std::to_string(successes) + "/10, need 10/10");
}

// ---------------------------------------------------------------------------
// 6. DTFal end-to-end on the bouncing ball (BB1)
// ---------------------------------------------------------------------------
void criterion_6(Gate& gate) {
    const auto& bb = find_benchmark("bouncing-ball");
    const auto spec = stl::parse(bb.spec);

    const double dod = degree_of_difficulty(*bb.system, bb.init, bb.input_space, bb.segments,
                                            bb.horizon, bb.dt, *spec, 2000, 1);
    gate.require(dod >= 0.5 && dod <= 5.0,
                 "pinned initial box has DoD " + format_double(dod) + "%, need [0.5, 5]");

    std::size_t successes = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        dtfal::DtfalConfig cfg;
        cfg.initial_trajectories = 400;
        cfg.samples_per_leaf = 100;
        cfg.epochs = 4;
        cfg.leaf_cap = 3;
        cfg.min_counterexamples = 1;
        cfg.segments = bb.segments;
        cfg.horizon = bb.horizon;
        cfg.dt = bb.dt;
        cfg.seed = seed;
        const auto t0 = std::chrono::steady_clock::now();
        const auto report = dtfal::run(*bb.system, bb.init, bb.input_space, *spec, cfg);
        const double secs = elapsed_secs(t0);
        gate.require(secs < 60.0, "run took " + format_double(secs) + " s");
        gate.require(report.total_simulations <= 2000,
                     "run used " + std::to_string(report.total_simulations) + " simulations");
        if (report.falsified) {
            ++successes;
            for (const auto& ce : report.counterexamples) {
                const auto traj = bb.system->simulate(ce.point.x0, ce.point.u, bb.horizon, bb.dt);
                gate.require(stl::robustness(*spec, traj).value == ce.robustness,
                             "counterexample failed revalidation");
            }
        }
    }
    gate.require(successes >= 9,
                 "falsification rate " + std::to_string(successes) + "/10, need >= 9/10");
}

// ---------------------------------------------------------------------------
// 7. Multi-counterexample economy
// ---------------------------------------------------------------------------
void criterion_7(Gate& gate) {
    const auto sys = make_system("const1d");
    const auto spec = stl::parse("G[0,1] x < 0.1");
    double sims_one = 0.0, sims_many = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        dtfal::DtfalConfig cfg;
        cfg.initial_trajectories = 50;
        cfg.samples_per_leaf = 20;
        cfg.epochs = 6;
        cfg.segments = 1;
        cfg.horizon = 1.0;
        cfg.dt = 0.1;
        cfg.seed = seed;
        cfg.min_counterexamples = 1;
        const auto one = dtfal::run(*sys, kUnitBox, kNoInput, *spec, cfg);
        gate.require(one.falsified, "min_ce=1 run failed");
        sims_one += static_cast<double>(one.total_simulations);
        cfg.min_counterexamples = 50;
        const auto many = dtfal::run(*sys, kUnitBox, kNoInput, *spec, cfg);
        gate.require(many.falsified && many.counterexamples.size() >= 50, "min_ce=50 run failed");
        sims_many += static_cast<double>(many.total_simulations);
    }
    gate.require(sims_many <= 2.0 * sims_one,
                 "50 CEs cost " + format_double(sims_many / sims_one) + "x one CE, need <= 2x");
}

// ---------------------------------------------------------------------------
// 8. DoD estimator
// ---------------------------------------------------------------------------
void criterion_8(Gate& gate) {
    const auto sys = make_system("const1d");
    const auto spec = stl::parse("G[0,1] x < 0.5");
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const double dod =
            degree_of_difficulty(*sys, kUnitBox, kNoInput, 1, 1.0, 0.1, *spec, 2000, seed);
        gate.require(std::fabs(dod - 50.0) <= 3.0,
                     "seed " + std::to_string(seed) + " estimated " + format_double(dod) + "%");
    }
}

// ---------------------------------------------------------------------------
// 9. Neural-network gradients
// ---------------------------------------------------------------------------
void criterion_9(Gate& gate) {
    Rng rng(271828);
    int nets = 0;
    while (nets < 50) {
        const std::size_t in = 1 + rng.below(3);
        const std::size_t out = 1 + rng.below(2);
        std::vector<std::size_t> widths{in};
        for (std::size_t l = 0, L = rng.below(3); l < L; ++l) widths.push_back(1 + rng.below(32));
        widths.push_back(out);
        nnfal::Mlp mlp = nnfal::make_mlp(widths, rng.next_u64());

        std::vector<std::vector<double>> xs(4), ts(4);
        for (std::size_t r = 0; r < 4; ++r) {
            xs[r].resize(in);
            ts[r].resize(out);
            for (auto& v : xs[r]) v = rng.uniform(-1, 1);
            for (auto& v : ts[r]) v = rng.uniform(-1, 1);
        }
        // Skip configurations with a pre-activation near the ReLU kink;
        // finite differences are invalid across it.
        bool near_kink = false;
        for (const auto& x : xs) {
            std::vector<double> a = x;
            for (std::size_t l = 0; l + 1 < mlp.widths.size(); ++l) {
                std::vector<double> z(mlp.widths[l + 1], 0.0);
                for (std::size_t o = 0; o < z.size(); ++o) {
                    z[o] = mlp.biases[l][o];
                    for (std::size_t i = 0; i < a.size(); ++i)
                        z[o] += mlp.weights[l][o * a.size() + i] * a[i];
                    if (l + 2 < mlp.widths.size()) {
                        if (std::fabs(z[o]) < 1e-4) near_kink = true;
                        z[o] = std::max(z[o], 0.0);
                    }
                }
                a = z;
            }
        }
        if (near_kink) continue;
        ++nets;

        std::vector<double> grads;
        nnfal::mse_loss_and_gradients(mlp, xs, ts, grads);
        const auto params = nnfal::flatten_parameters(mlp);
        const double h = 1e-6;
        for (std::size_t p = 0; p < params.size(); ++p) {
            nnfal::Mlp probe = mlp;
            auto tweaked = params;
            tweaked[p] = params[p] + h;
            nnfal::set_parameters(probe, tweaked);
            const double up = nnfal::mse_loss(probe, xs, ts);
            tweaked[p] = params[p] - h;
            nnfal::set_parameters(probe, tweaked);
            const double down = nnfal::mse_loss(probe, xs, ts);
            const double fd = (up - down) / (2.0 * h);
            const double scale = std::max({1.0, std::fabs(fd), std::fabs(grads[p])});
            if (std::fabs(fd - grads[p]) > 1e-4 * scale) {
                gate.require(false, "gradient mismatch on net " + std::to_string(nets) +
                                        " param " + std::to_string(p));
                break;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// 10. NNFal loop: surrogate attack, rigged refinement, honest failure
// ---------------------------------------------------------------------------
void criterion_10(Gate& gate) {
    const auto sys = make_system("const1d");

    // (a) train a surrogate of const1d and attack it.
    const auto data =
        generate_nn_dataset(*sys, kUnitBox, kNoInput, 1, 1.0, 0.1, 300, 5);
    nnfal::TrainConfig tcfg;
    tcfg.learning_rate = 3e-3;
    tcfg.batch_size = 64;
    tcfg.max_epochs = 40;
    tcfg.seed = 1;
    const auto surrogate = nnfal::train_mlp(data, {16, 16}, tcfg);

    nnfal::ReachabilitySpec spec;
    spec.input_box = Box{{0.0, 0.0}, {1.0, 1.0}}; // (x0, t)
    spec.unsafe = {nnfal::output_at_least(0, 0.15, 1)};

    const auto attack = nnfal::pgd_attack(surrogate, spec, {}, 500, 0.02, 8, 3);
    gate.require(attack.found, "pgd found no candidate on the surrogate");
    if (attack.found) {
        gate.require(attack.iterations < 500, "pgd exceeded 500 iterations");
        gate.require(attack.candidate_raw[0] > 0.1,
                     "candidate x0 = " + format_double(attack.candidate_raw[0]) +
                         " is outside the true violating set (0.1, 1]");
        // Grid-search oracle at resolution 1e-3 over I.
        double min_violating_x0 = 2.0;
        for (int xi = 0; xi <= 1000; ++xi)
            for (int ti = 0; ti <= 1000; ++ti) {
                const std::vector<double> x{xi * 1e-3, ti * 1e-3};
                std::vector<double> scaled(2);
                for (std::size_t d = 0; d < 2; ++d)
                    scaled[d] = surrogate.input_scaling->scale(d, x[d]);
                if (nnfal::unsafe_loss(surrogate, spec, scaled) == 0.0)
                    min_violating_x0 = std::min(min_violating_x0, x[0]);
            }
        gate.require(min_violating_x0 <= 1.0, "grid oracle found no surrogate violation");
        gate.require(min_violating_x0 > 0.1 && std::fabs(min_violating_x0 - 0.15) <= 0.1,
                     "grid oracle boundary " + format_double(min_violating_x0) +
                         " is far from the designed 0.15");
        gate.require(attack.candidate_raw[0] >= min_violating_x0 - 1e-3,
                     "pgd candidate disagrees with the grid oracle region");
    }

    // (b) rigged validator: first three candidates spurious.
    nnfal::Mlp exact = nnfal::make_mlp({2, 1}, 0);
    exact.weights[0] = {1.0, 0.0};
    exact.biases[0] = {0.0};
    nnfal::ReachabilitySpec espec;
    espec.input_box = Box{{0.0, 0.0}, {1.0, 1.0}};
    espec.unsafe = {nnfal::output_at_least(0, 0.15, 1)};
    nnfal::ValidationTarget target;
    target.formula = stl::parse("G[0,1] x < 0.1");
    nnfal::NnfalBudget budget;
    budget.seed = 33;
    budget.exclusion_radius = 1e-3;

    int verdicts = 0;
    const nnfal::Validator rigged = [&](const std::vector<double>& cand) {
        auto v = nnfal::validate(*sys, cand, target, 1, 1.0, 0.1);
        if (verdicts++ < 3) v.real = false;
        return v;
    };
    const auto report = nnfal::nnfal_run(*sys, exact, espec, target, budget, 1, 1.0, 0.1, rigged);
    gate.require(report.falsified, "rigged run did not end in success");
    gate.require(report.refinements == 3,
                 "MR = " + std::to_string(report.refinements) + ", expected 3");
    gate.require(report.excluded.size() == 3, "psi should hold 3 balls");
    const auto& entries = report.excluded.entries;
    for (std::size_t i = 0; i < entries.size(); ++i)
        for (std::size_t j = i + 1; j < entries.size(); ++j) {
            double dist = 0.0;
            for (std::size_t d = 0; d < entries[i].center_scaled.size(); ++d)
                dist = std::max(dist, std::fabs(entries[i].center_scaled[d] -
                                                entries[j].center_scaled[d]));
            gate.require(dist > entries[i].radius + entries[j].radius,
                         "excluded balls overlap");
        }
    if (report.counterexample) {
        auto accepted = flatten(report.counterexample->point);
        accepted.push_back(0.0);
        gate.require(!report.excluded.contains_scaled(accepted),
                     "accepted candidate sits inside an excluded ball");
    }

    // (c) unreachable unsafe set: fail at budget, never a false CE.
    nnfal::Mlp clamped = nnfal::make_mlp({2, 1}, 0);
    clamped.weights[0] = {0.0, 0.0};
    clamped.biases[0] = {0.05};
    nnfal::ReachabilitySpec cspec;
    cspec.input_box = Box{{0.0, 0.0}, {1.0, 1.0}};
    cspec.unsafe = {nnfal::output_at_least(0, 0.9, 1)};
    nnfal::NnfalBudget cbudget;
    cbudget.seed = 5;
    cbudget.max_attacks = 5;
    const auto fail = nnfal::nnfal_run(*sys, clamped, cspec, target, cbudget, 1, 1.0, 0.1);
    gate.require(!fail.falsified && !fail.counterexample.has_value(),
                 "unreachable set produced a counterexample");
    gate.require(fail.attack_calls == 5, "budget not fully consumed before failing");
}

// ---------------------------------------------------------------------------
// 11. Determinism of every subcommand across reruns and job counts
// ---------------------------------------------------------------------------
void criterion_11(Gate& gate) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "flexifal_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);

    const auto cli = [&](const std::vector<std::string>& args, const std::string& input = "") {
        const auto res = run_subprocess(FLEXIFAL_BIN, args, input, 300.0);
        return res;
    };
    const auto slurp = [&](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };

    // simulate (stdout + wire)
    const auto sim1 = cli({"simulate", "--system", "bouncing-ball", "--x0", "5,0"});
    const auto sim2 = cli({"simulate", "--system", "bouncing-ball", "--x0", "5,0"});
    gate.require(sim1.exit_code == 0 && sim1.out == sim2.out, "simulate is not deterministic");

    // monitor
    const fs::path traj_csv = dir / "traj.csv";
    {
        std::ofstream out(traj_csv);
        out << sim1.out;
    }
    const auto mon1 = cli({"monitor", "--traj", traj_csv.string(), "--spec", "G[0,10] x < 20"});
    const auto mon2 = cli({"monitor", "--traj", traj_csv.string(), "--spec", "G[0,10] x < 20"});
    gate.require(mon1.exit_code == 0 && mon1.out == mon2.out, "monitor is not deterministic");

    // gen-data across job counts, both modes
    for (const char* mode : {"nn", "rob"}) {
        const fs::path a = dir / (std::string("data_") + mode + "_a.csv");
        const fs::path b = dir / (std::string("data_") + mode + "_b.csv");
        std::vector<std::string> base{"gen-data", "--mode", mode, "--system", "two-tanks",
                                      "-N", "30", "--seed", "9", "--spec",
                                      find_benchmark("two-tanks").spec};
        auto ja = base;
        ja.insert(ja.end(), {"--jobs", "1", "--out", a.string()});
        auto jb = base;
        jb.insert(jb.end(), {"--jobs", "2", "--out", b.string()});
        const auto ra = cli(ja);
        const auto rb = cli(jb);
        gate.require(ra.exit_code == 0 && rb.exit_code == 0, "gen-data failed");
        gate.require(slurp(a) == slurp(b),
                     std::string("gen-data --mode ") + mode + " differs across --jobs");
    }

    // dod
    const auto dod1 = cli({"dod", "--system", "const1d", "--spec", "G[0,1] x < 0.5", "-N",
                           "500", "--seed", "3", "--jobs", "1"});
    const auto dod2 = cli({"dod", "--system", "const1d", "--spec", "G[0,1] x < 0.5", "-N",
                           "500", "--seed", "3", "--jobs", "2"});
    gate.require(dod1.exit_code == 0 && dod1.out == dod2.out, "dod differs across --jobs");

    // fit-tree + dump-tree on generated data
    const fs::path rob = dir / "data_rob_a.csv";
    const fs::path tree1 = dir / "tree1.json";
    const fs::path tree2 = dir / "tree2.json";
    cli({"fit-tree", "--data", rob.string(), "--out", tree1.string()});
    cli({"fit-tree", "--data", rob.string(), "--out", tree2.string()});
    gate.require(slurp(tree1) == slurp(tree2), "fit-tree is not deterministic");
    const auto dump1 = cli({"dump-tree", "--tree", tree1.string()});
    const auto dump2 = cli({"dump-tree", "--tree", tree1.string()});
    gate.require(dump1.exit_code == 0 && dump1.out == dump2.out, "dump-tree differs");

    // dtfal across job counts (same report basename, different directories;
    // trajectory refs are stored relative to the report).
    fs::create_directories(dir / "run1");
    fs::create_directories(dir / "run2");
    const fs::path rep1 = dir / "run1" / "report.json";
    const fs::path rep2 = dir / "run2" / "report.json";
    const std::vector<std::string> dt_base{"dtfal", "--system", "bouncing-ball", "-N", "200",
                                           "-R", "50", "--epochs", "3", "--seed", "21"};
    auto dt1 = dt_base;
    dt1.insert(dt1.end(), {"--jobs", "1", "--out", rep1.string()});
    auto dt2 = dt_base;
    dt2.insert(dt2.end(), {"--jobs", "2", "--out", rep2.string()});
    const auto dres1 = cli(dt1);
    const auto dres2 = cli(dt2);
    gate.require(dres1.exit_code == dres2.exit_code && dres1.out == dres2.out,
                 "dtfal stdout differs across --jobs");
    gate.require(slurp(rep1) == slurp(rep2), "dtfal reports differ across --jobs");

    // train-nn determinism
    const fs::path nn_csv = dir / "nn_small.csv";
    cli({"gen-data", "--mode", "nn", "--system", "const1d", "-N", "40", "--seed", "5", "--out",
         nn_csv.string()});
    const fs::path m1 = dir / "m1.nn";
    const fs::path m2 = dir / "m2.nn";
    cli({"train-nn", "--data", nn_csv.string(), "--hidden", "8,8", "--lr", "3e-3", "--epochs",
         "10", "--seed", "2", "--out", m1.string()});
    cli({"train-nn", "--data", nn_csv.string(), "--hidden", "8,8", "--lr", "3e-3", "--epochs",
         "10", "--seed", "2", "--out", m2.string()});
    gate.require(slurp(m1) == slurp(m2), "train-nn is not deterministic");

    // nnfal across job counts
    const fs::path nr1 = dir / "nnfal1.json";
    const fs::path nr2 = dir / "nnfal2.json";
    const std::vector<std::string> nn_base{"nnfal", "--system", "const1d", "--model",
                                           m1.string(), "--spec", "G[0,1] x < 0.1", "--unsafe",
                                           "x >= 0.2", "--seed", "11", "--max-attacks", "10"};
    auto na = nn_base;
    na.insert(na.end(), {"--jobs", "1", "--out", nr1.string()});
    auto nb = nn_base;
    nb.insert(nb.end(), {"--jobs", "2", "--out", nr2.string()});
    const auto nres1 = cli(na);
    const auto nres2 = cli(nb);
    gate.require(nres1.exit_code == nres2.exit_code && nres1.out == nres2.out &&
                     slurp(nr1) == slurp(nr2),
                 "nnfal differs across --jobs");
}

struct Criterion {
    int id;
    const char* name;
    std::function<void(Gate&)> run;
};

} // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i)
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[i + 1]);

    const std::vector<Criterion> criteria{
        {1, "STL robustness matches the brute-force oracle (1000 cases, 1e-9)", criterion_1},
        {2, "negation/min-max laws and desugaring are exact", criterion_2},
        {3, "CART splits match exhaustive enumeration (200 datasets)", criterion_3},
        {4, "explanation soundness (100%) and the worked figures", criterion_4},
        {5, "DTFal analytic benchmark: 10/10, <= 500 simulations, < 5 s", criterion_5},
        {6, "DTFal bouncing ball BB1: >= 9/10, <= 2000 simulations, < 60 s", criterion_6},
        {7, "50 counterexamples cost <= 2x one", criterion_7},
        {8, "DoD estimator within +-3 points, 10/10 seeds", criterion_8},
        {9, "backprop matches finite differences on 50 nets", criterion_9},
        {10, "NNFal: surrogate attack, rigged refinement, honest failure", criterion_10},
        {11, "byte-identical reports across reruns and --jobs", criterion_11},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        if (only && c.id != only) continue;
        Gate gate;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            c.run(gate);
        } catch (const std::exception& e) {
            gate.failures.push_back(std::string("exception: ") + e.what());
        }
        const double secs = elapsed_secs(t0);
        if (gate.failures.empty()) {
            std::printf("PASS criterion-%d (%.1fs): %s\n", c.id, secs, c.name);
        } else {
            ++failures;
            std::printf("FAIL criterion-%d (%.1fs): %s\n", c.id, secs, c.name);
            for (const auto& f : gate.failures) std::printf("      - %s\n", f.c_str());
        }
    }
    return failures == 0 ? 0 : 1;
}
