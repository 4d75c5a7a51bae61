// flexifal — falsification of STL safety properties of black-box systems via
// decision-tree guided search (dtfal) and neural-network surrogate attacks
// (nnfal), plus the supporting data/model/monitoring subcommands.

#include "flexifal/batch.hpp"
#include "flexifal/core.hpp"
#include "flexifal/dataset.hpp"
#include "flexifal/dtfal.hpp"
#include "flexifal/dtree.hpp"
#include "flexifal/nnfal.hpp"
#include "flexifal/rng.hpp"
#include "flexifal/stl.hpp"
#include "flexifal/systems.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace flexifal;

constexpr int kExitSuccess = 0;
constexpr int kExitError = 1;
constexpr int kExitBudget = 2;

std::vector<double> parse_vector(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        if (cell.empty()) continue;
        out.push_back(std::stod(cell));
    }
    return out;
}

// "lo,hi;lo,hi;..." — one lo,hi pair per dimension.
Box parse_box(const std::string& text) {
    Box b;
    if (text.empty()) return b;
    std::stringstream ss(text);
    std::string pair;
    while (std::getline(ss, pair, ';')) {
        if (pair.empty()) continue;
        const auto v = parse_vector(pair);
        if (v.size() != 2)
            throw std::invalid_argument("box dimension '" + pair + "' is not a lo,hi pair");
        b.lows.push_back(v[0]);
        b.highs.push_back(v[1]);
    }
    b.validate();
    return b;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << content;
}

// --spec accepts a formula or a path to a file holding one.
stl::FormulaPtr load_spec(const std::string& value) {
    if (std::filesystem::exists(value)) return stl::parse(read_file(value));
    return stl::parse(value);
}

// Options shared by the subcommands that run a system against boxes.
struct RunOptions {
    std::string system;
    std::string spec;
    std::string init_text;
    std::string input_text;
    std::size_t segments = 0;
    double horizon = 0.0;
    double dt = 0.0;
    std::uint64_t seed = 0;
    int jobs = 0;
    std::size_t ext_state_dim = 0;
    std::size_t ext_input_dim = 0;
    std::string ext_vars;
    double ext_timeout = 30.0;
};

void add_run_options(CLI::App* cmd, RunOptions& o, bool with_spec = true) {
    cmd->add_option("--system", o.system, "built-in system name or exec:<path>")->required();
    if (with_spec)
        cmd->add_option("--spec", o.spec, "STL formula text, or a file containing one");
    cmd->add_option("--init", o.init_text, "initial box lo,hi;lo,hi;...");
    cmd->add_option("--input-box", o.input_text, "input box lo,hi;... per input dim");
    cmd->add_option("-k,--segments", o.segments, "piecewise-constant input segments");
    cmd->add_option("-T,--horizon", o.horizon, "time horizon (seconds)");
    cmd->add_option("--dt", o.dt, "sample step (seconds)");
    cmd->add_option("--seed", o.seed, "master random seed")->envname("FLEXIFAL_SEED");
    cmd->add_option("--jobs", o.jobs, "worker threads (default: logical cores)");
    cmd->add_option("--ext-state-dim", o.ext_state_dim, "state dim of an exec: system");
    cmd->add_option("--ext-input-dim", o.ext_input_dim, "input dim of an exec: system");
    cmd->add_option("--ext-vars", o.ext_vars, "comma-separated var names of an exec: system");
    cmd->add_option("--ext-timeout", o.ext_timeout, "exec: subprocess timeout (seconds)");
}

// Resolved run configuration: the selected system plus boxes/k/T/dt with
// catalog defaults filled in.
struct ResolvedRun {
    std::shared_ptr<const System> system;
    std::string system_name;
    Box init;
    Box input_space;
    std::size_t segments = 1;
    double horizon = 1.0;
    double dt = 0.1;
    stl::FormulaPtr spec;
    std::string spec_text;
};

ResolvedRun resolve(const RunOptions& o, bool need_spec = true) {
    ResolvedRun r;
    r.system_name = o.system;
    const bool external = o.system.rfind("exec:", 0) == 0;
    if (external) {
        ExternalProtocolConfig cfg;
        cfg.state_dim = o.ext_state_dim;
        cfg.input_dim = o.ext_input_dim;
        cfg.timeout_secs = o.ext_timeout;
        std::stringstream ss(o.ext_vars);
        std::string name;
        while (std::getline(ss, name, ','))
            if (!name.empty()) cfg.var_names.push_back(name);
        r.system = make_system(o.system, &cfg);
        r.segments = o.segments ? o.segments : 1;
        if (o.horizon <= 0 || o.dt <= 0)
            throw std::invalid_argument("exec: systems need explicit --horizon and --dt");
    } else {
        const Benchmark& b = find_benchmark(o.system);
        r.system = b.system;
        r.init = b.init;
        r.input_space = b.input_space;
        r.segments = o.segments ? o.segments : b.segments;
        r.horizon = b.horizon;
        r.dt = b.dt;
        if (need_spec && o.spec.empty()) r.spec_text = b.spec;
    }
    if (o.horizon > 0) r.horizon = o.horizon;
    if (o.dt > 0) r.dt = o.dt;
    if (!o.init_text.empty()) r.init = parse_box(o.init_text);
    if (!o.input_text.empty()) r.input_space = parse_box(o.input_text);
    if (!o.spec.empty()) {
        r.spec = load_spec(o.spec);
        r.spec_text = stl::pretty_print(r.spec);
    } else if (need_spec) {
        if (r.spec_text.empty())
            throw std::invalid_argument("--spec is required for this system");
        r.spec = stl::parse(r.spec_text);
    }
    if (r.init.dim() != r.system->state_dim())
        throw std::invalid_argument("--init must have " + std::to_string(r.system->state_dim()) +
                                    " dimensions for this system");
    if (r.input_space.dim() != r.system->input_dim())
        throw std::invalid_argument("--input-box must have " +
                                    std::to_string(r.system->input_dim()) +
                                    " dimensions for this system");
    return r;
}

DatasetMeta make_meta(const ResolvedRun& r, const char* kind, std::uint64_t seed,
                      std::size_t rows) {
    DatasetMeta meta;
    meta.kind = kind;
    meta.system = r.system_name;
    meta.spec = r.spec ? r.spec_text : "";
    meta.seed = seed;
    meta.init = r.init;
    meta.input_space = r.input_space;
    meta.segments = r.segments;
    meta.state_dim = r.system->state_dim();
    meta.input_dim = r.system->input_dim();
    meta.label_dim = r.system->var_names().size();
    meta.horizon = r.horizon;
    meta.dt = r.dt;
    meta.rows = rows;
    return meta;
}

DatasetMeta load_meta_for(const std::string& data_path, const std::string& meta_path) {
    const std::string path = meta_path.empty() ? data_path + ".meta.json" : meta_path;
    return meta_from_json(read_file(path));
}

// The wire-protocol server half: one JSON request on stdin, CSV on stdout.
int run_wire(const System& sys) {
    std::stringstream ss;
    ss << std::cin.rdbuf();
    const auto req = nlohmann::json::parse(ss.str());
    const auto x0 = req.at("x0").get<std::vector<double>>();
    const double T = req.at("T").get<double>();
    const double dt = req.at("dt").get<double>();
    PiecewiseConstantSignal u;
    u.horizon = T;
    u.values = req.at("u").get<std::vector<std::vector<double>>>();
    if (u.values.empty()) u.values.assign(1, std::vector<double>{});
    const Trajectory traj = sys.simulate(x0, u, T, dt);
    std::cout << trajectory_to_csv(traj);
    return kExitSuccess;
}

nlohmann::json counterexamples_json(const std::vector<Counterexample>& ces) {
    auto arr = nlohmann::json::array();
    for (const auto& ce : ces)
        arr.push_back({{"features", flatten(ce.point)}, {"robustness", ce.robustness}});
    return arr;
}

std::string plot_data_csv(const std::vector<Counterexample>& ces) {
    std::string out = "ce_index,time";
    if (!ces.empty())
        for (const auto& n : ces.front().trajectory.var_names) out += "," + n;
    out += '\n';
    for (std::size_t i = 0; i < ces.size(); ++i) {
        const auto& traj = ces[i].trajectory;
        for (std::size_t j = 0; j < traj.samples(); ++j) {
            out += std::to_string(i);
            out += ',';
            out += format_double(traj.time_of(j));
            for (double v : traj.states[j]) {
                out += ',';
                out += format_double(v);
            }
            out += '\n';
        }
    }
    return out;
}

// Reads a key=value config file (one option per line, quotes optional,
// '#' comments) and injects the pairs as --key tokens right after the
// subcommand, before any explicit flags. With TakeLast options, explicit
// flags then override the file.
std::vector<std::string> inject_config(std::vector<std::string> args) {
    std::size_t at = SIZE_MAX, span = 0;
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
            at = i;
            span = 2;
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            at = i;
            span = 1;
            break;
        }
    }
    if (at == SIZE_MAX) return args;
    args.erase(args.begin() + static_cast<std::ptrdiff_t>(at),
               args.begin() + static_cast<std::ptrdiff_t>(at + span));

    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    std::vector<std::string> injected;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r\"");
            const auto b = s.find_last_not_of(" \t\r\"");
            return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) continue;
        injected.push_back("--" + key);
        injected.push_back(value);
    }
    // After the subcommand name, before everything else.
    const std::size_t pos = args.empty() ? 0 : 1;
    args.insert(args.begin() + static_cast<std::ptrdiff_t>(pos), injected.begin(),
                injected.end());
    return args;
}

// Parses "v >= -1 & x <= 2" into half-spaces over the system's variables.
std::vector<nnfal::HalfSpace> parse_unsafe(const std::string& text,
                                           const std::vector<std::string>& var_names) {
    const auto formula = stl::parse(text);
    std::vector<nnfal::HalfSpace> out;
    const std::function<void(const stl::Formula&)> walk = [&](const stl::Formula& f) {
        if (f.kind == stl::Formula::Kind::And) {
            walk(*f.lhs);
            walk(*f.rhs);
            return;
        }
        if (f.kind != stl::Formula::Kind::Atom)
            throw std::invalid_argument("--unsafe must be a conjunction of atoms");
        const auto it = std::find(var_names.begin(), var_names.end(), f.var);
        if (it == var_names.end())
            throw std::invalid_argument("unsafe set references unknown variable '" + f.var + "'");
        const auto dim = static_cast<std::size_t>(it - var_names.begin());
        if (f.cmp == stl::Cmp::Ge || f.cmp == stl::Cmp::Gt)
            out.push_back(nnfal::output_at_least(dim, f.threshold, var_names.size()));
        else
            out.push_back(nnfal::output_at_most(dim, f.threshold, var_names.size()));
    };
    walk(*formula);
    return out;
}

int main_impl(int argc, char** argv) {
    CLI::App app{"FlexiFal: surrogate-guided falsification of STL safety properties"};
    app.require_subcommand(1);

    // --- simulate ---------------------------------------------------------
    auto* c_sim = app.add_subcommand("simulate", "simulate one point and print the trajectory");
    RunOptions sim_opt;
    std::string sim_x0, sim_u, sim_out;
    bool sim_wire = false;
    add_run_options(c_sim, sim_opt, false);
    c_sim->add_option("--x0", sim_x0, "initial state, comma separated");
    c_sim->add_option("--u", sim_u, "input segments 'a,b;c,d;...' (k segments of m values)");
    c_sim->add_option("--out", sim_out, "write the trajectory CSV here instead of stdout");
    c_sim->add_flag("--wire", sim_wire, "serve one wire-protocol request on stdin");

    // --- monitor ----------------------------------------------------------
    auto* c_mon = app.add_subcommand("monitor", "robustness of a stored trajectory");
    std::string mon_traj, mon_spec;
    double mon_at = 0.0;
    c_mon->add_option("--traj", mon_traj, "trajectory CSV (time,var1,...)")->required();
    c_mon->add_option("--spec", mon_spec, "STL formula text or file")->required();
    c_mon->add_option("--at", mon_at, "evaluation time on the sample grid (default 0)");

    // --- gen-data ---------------------------------------------------------
    auto* c_gen = app.add_subcommand("gen-data", "generate a labeled dataset");
    RunOptions gen_opt;
    std::string gen_mode = "nn", gen_out;
    std::size_t gen_n = 100;
    add_run_options(c_gen, gen_opt);
    c_gen->add_option("--mode", gen_mode, "nn | rob")->check(CLI::IsMember({"nn", "rob"}));
    c_gen->add_option("-N,--trajectories", gen_n, "number of trajectories");
    c_gen->add_option("--out", gen_out, "output CSV path (sidecar .meta.json is added)")
        ->required();

    // --- fit-tree ---------------------------------------------------------
    auto* c_fit = app.add_subcommand("fit-tree", "fit a CART tree on a robustness dataset");
    std::string fit_data, fit_meta, fit_out;
    dtree::FitParams fit_params;
    long long fit_depth = -1;
    c_fit->add_option("--data", fit_data, "robustness dataset CSV")->required();
    c_fit->add_option("--meta", fit_meta, "dataset meta JSON (default <data>.meta.json)");
    c_fit->add_option("--out", fit_out, "tree JSON output path")->required();
    c_fit->add_option("--min-samples-split", fit_params.min_samples_split);
    c_fit->add_option("--min-samples-leaf", fit_params.min_samples_leaf);
    c_fit->add_option("--max-depth", fit_depth, "-1 = unlimited");

    // --- dump-tree --------------------------------------------------------
    auto* c_dump = app.add_subcommand("dump-tree", "render a stored tree");
    std::string dump_tree, dump_out;
    bool dump_json = false;
    c_dump->add_option("--tree", dump_tree, "tree JSON file")->required();
    c_dump->add_option("--out", dump_out, "write rendering here instead of stdout");
    c_dump->add_flag("--json", dump_json, "emit the JSON form instead of the rendering");

    // --- dod --------------------------------------------------------------
    auto* c_dod = app.add_subcommand("dod", "degree of difficulty (percent violating)");
    RunOptions dod_opt;
    std::size_t dod_n = 2000;
    add_run_options(c_dod, dod_opt);
    c_dod->add_option("-N,--trajectories", dod_n, "number of random simulations");

    // --- dtfal ------------------------------------------------------------
    auto* c_dt = app.add_subcommand("dtfal", "decision-tree guided falsification");
    RunOptions dt_opt;
    dtfal::DtfalConfig dt_cfg;
    std::string dt_out, dt_traj_dir, dt_plot;
    bool dt_timings = false;
    add_run_options(c_dt, dt_opt);
    c_dt->add_option("-N,--initial", dt_cfg.initial_trajectories, "initial trajectories");
    c_dt->add_option("-R,--leaf-samples", dt_cfg.samples_per_leaf, "simulations per explanation");
    c_dt->add_option("--epochs", dt_cfg.epochs, "max retrain iterations");
    c_dt->add_option("--min-ce", dt_cfg.min_counterexamples, "required counterexamples");
    c_dt->add_option("--leaf-cap", dt_cfg.leaf_cap, "leaves processed per epoch");
    c_dt->add_option("--out", dt_out, "report JSON path");
    c_dt->add_option("--traj-dir", dt_traj_dir, "directory for counterexample trajectory CSVs");
    c_dt->add_option("--plot-data", dt_plot, "write CE trajectories as one long-format CSV");
    c_dt->add_flag("--emit-timings", dt_timings, "include wall-clock time in the report");

    // --- train-nn ---------------------------------------------------------
    auto* c_train = app.add_subcommand("train-nn", "train an MLP surrogate on an nn dataset");
    std::string train_data, train_meta, train_out, train_hidden = "64,64,64";
    nnfal::TrainConfig train_cfg;
    bool train_no_es = false;
    c_train->add_option("--data", train_data, "nn dataset CSV")->required();
    c_train->add_option("--meta", train_meta, "dataset meta JSON (default <data>.meta.json)");
    c_train->add_option("--out", train_out, "model file path")->required();
    c_train->add_option("--hidden", train_hidden, "hidden widths, e.g. 64,64,64");
    c_train->add_option("--lr", train_cfg.learning_rate, "Adam learning rate");
    c_train->add_option("--batch", train_cfg.batch_size, "batch size");
    c_train->add_option("--epochs", train_cfg.max_epochs, "max training epochs");
    c_train->add_option("--patience", train_cfg.patience, "early-stopping patience");
    c_train->add_option("--val-frac", train_cfg.validation_fraction, "validation fraction");
    c_train->add_option("--seed", train_cfg.seed, "training seed")->envname("FLEXIFAL_SEED");
    c_train->add_flag("--no-early-stopping", train_no_es,
                      "train for the full epoch budget, keep lowest training loss");

    // --- nnfal ------------------------------------------------------------
    auto* c_nn = app.add_subcommand("nnfal", "attack an MLP surrogate, validate on the system");
    RunOptions nn_opt;
    std::string nn_model, nn_unsafe, nn_val_mode = "any", nn_out, nn_attack = "pgd";
    nnfal::NnfalBudget nn_budget;
    bool nn_timings = false;
    add_run_options(c_nn, nn_opt);
    c_nn->add_option("--model", nn_model, "trained model file")->required();
    c_nn->add_option("--unsafe", nn_unsafe,
                     "unsafe output set: conjunction of atoms over system vars");
    c_nn->add_option("--val-mode", nn_val_mode, "any | at-time")
        ->check(CLI::IsMember({"any", "at-time"}));
    c_nn->add_option("--attack", nn_attack, "pgd | fgsm")
        ->check(CLI::IsMember({"pgd", "fgsm"}));
    c_nn->add_option("--max-attacks", nn_budget.max_attacks, "attack-call budget");
    c_nn->add_option("--timeout-secs", nn_budget.timeout_secs, "wall-clock budget");
    c_nn->add_option("--delta", nn_budget.exclusion_radius, "spurious exclusion radius (scaled)");
    c_nn->add_option("--pgd-iters", nn_budget.pgd_iterations);
    c_nn->add_option("--pgd-step", nn_budget.pgd_step);
    c_nn->add_option("--pgd-restarts", nn_budget.pgd_restarts);
    c_nn->add_option("--fgsm-eps", nn_budget.fgsm_epsilon);
    c_nn->add_option("--out", nn_out, "report JSON path");
    c_nn->add_flag("--emit-timings", nn_timings, "include wall-clock time in the report");

    // --- list-systems -----------------------------------------------------
    auto* c_list = app.add_subcommand("list-systems", "print the built-in benchmark catalog");

    for (auto* sub : app.get_subcommands({})) {
        sub->add_option("--config")->description("key=value config file; flags override it");
        for (auto* opt : sub->get_options())
            if (opt->get_expected_min() > 0)
                opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        args = inject_config(std::move(args));
        std::reverse(args.begin(), args.end()); // CLI11 consumes reversed vectors
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        // CLI11's own exit codes collapse onto the documented 0/1 contract.
        return app.exit(e) == 0 ? kExitSuccess : kExitError;
    }

    if (c_sim->parsed()) {
        const ResolvedRun r = resolve(sim_opt, false);
        if (sim_wire) return run_wire(*r.system);
        if (sim_x0.empty()) throw std::invalid_argument("simulate needs --x0 (or --wire)");
        PiecewiseConstantSignal u;
        u.horizon = r.horizon;
        if (!sim_u.empty()) {
            std::stringstream ss(sim_u);
            std::string seg;
            while (std::getline(ss, seg, ';')) u.values.push_back(parse_vector(seg));
        } else {
            u.values.assign(r.segments, std::vector<double>(r.system->input_dim(), 0.0));
        }
        const auto traj = r.system->simulate(parse_vector(sim_x0), u, r.horizon, r.dt);
        const auto csv = trajectory_to_csv(traj);
        if (sim_out.empty()) std::cout << csv;
        else write_file(sim_out, csv);
        return kExitSuccess;
    }

    if (c_mon->parsed()) {
        std::ifstream in(mon_traj);
        if (!in) throw std::runtime_error("cannot open '" + mon_traj + "'");
        const Trajectory traj = trajectory_from_csv(in);
        const auto spec = load_spec(mon_spec);
        const auto rho = stl::robustness(*spec, traj, mon_at);
        std::cout << format_double(rho.value) << "\n";
        if (rho.boundary())
            std::cerr << "note: robustness is on the satisfy/violate boundary (|rho| < 1e-12)\n";
        return kExitSuccess;
    }

    if (c_gen->parsed()) {
        const ResolvedRun r = resolve(gen_opt, gen_mode == "rob");
        std::string csv;
        if (gen_mode == "nn") {
            const auto d = generate_nn_dataset(*r.system, r.init, r.input_space, r.segments,
                                               r.horizon, r.dt, gen_n, gen_opt.seed, gen_opt.jobs);
            csv = to_csv(d);
            auto meta = make_meta(r, "nn", gen_opt.seed, d.rows());
            write_file(gen_out + ".meta.json", meta_to_json(meta));
        } else {
            const auto d = generate_robustness_dataset(*r.system, r.init, r.input_space,
                                                       r.segments, r.horizon, r.dt, *r.spec,
                                                       gen_n, gen_opt.seed, gen_opt.jobs);
            csv = to_csv(d);
            auto meta = make_meta(r, "robustness", gen_opt.seed, d.rows());
            write_file(gen_out + ".meta.json", meta_to_json(meta));
        }
        write_file(gen_out, csv);
        std::cerr << "wrote " << gen_out << "\n";
        return kExitSuccess;
    }

    if (c_fit->parsed()) {
        const auto meta = load_meta_for(fit_data, fit_meta);
        const auto data = load_robustness_dataset(fit_data, meta);
        fit_params.max_depth = static_cast<int>(fit_depth);
        const auto tree = dtree::DecisionTree::fit(data, fit_params);
        write_file(fit_out, tree.to_json());
        std::cerr << "wrote " << fit_out << "\n";
        return kExitSuccess;
    }

    if (c_dump->parsed()) {
        const auto tree = dtree::DecisionTree::from_json(read_file(dump_tree));
        const std::string text = dump_json ? tree.to_json() : tree.render();
        if (dump_out.empty()) std::cout << text;
        else write_file(dump_out, text);
        return kExitSuccess;
    }

    if (c_dod->parsed()) {
        const ResolvedRun r = resolve(dod_opt);
        const double pct =
            degree_of_difficulty(*r.system, r.init, r.input_space, r.segments, r.horizon, r.dt,
                                 *r.spec, dod_n, dod_opt.seed, dod_opt.jobs);
        std::cout << format_double(pct) << "\n";
        return kExitSuccess;
    }

    if (c_dt->parsed()) {
        const ResolvedRun r = resolve(dt_opt);
        dt_cfg.segments = r.segments;
        dt_cfg.horizon = r.horizon;
        dt_cfg.dt = r.dt;
        dt_cfg.seed = dt_opt.seed;
        dt_cfg.jobs = dt_opt.jobs;
        const auto report = dtfal::run(*r.system, r.init, r.input_space, *r.spec, dt_cfg);

        std::vector<std::string> refs;
        if (!dt_out.empty()) {
            const std::filesystem::path out_path(dt_out);
            const std::filesystem::path dir =
                dt_traj_dir.empty()
                    ? out_path.parent_path() / (out_path.filename().string() + "_traj")
                    : std::filesystem::path(dt_traj_dir);
            if (!report.counterexamples.empty()) {
                std::filesystem::create_directories(dir);
                for (std::size_t i = 0; i < report.counterexamples.size(); ++i) {
                    const auto file = dir / ("ce_" + std::to_string(i) + ".csv");
                    write_file(file.string(),
                               trajectory_to_csv(report.counterexamples[i].trajectory));
                    // Stored relative to the report so reruns into different
                    // directories emit identical bytes.
                    refs.push_back(
                        std::filesystem::proximate(file, out_path.parent_path()).string());
                }
            }
            write_file(dt_out, dtfal::report_to_json(report, dt_cfg, r.system_name, r.spec_text,
                                                     refs, dt_timings));
        }
        if (!dt_plot.empty()) write_file(dt_plot, plot_data_csv(report.counterexamples));
        if (!report.counterexamples.empty())
            std::cout << counterexamples_to_csv(report.counterexamples);
        std::cerr << (report.falsified ? "falsified" : "budget exhausted") << ": "
                  << report.counterexamples.size() << " counterexample(s), "
                  << report.total_simulations << " simulations, " << report.epochs_used
                  << " epoch(s)\n";
        return report.falsified ? kExitSuccess : kExitBudget;
    }

    if (c_train->parsed()) {
        const auto meta = load_meta_for(train_data, train_meta);
        if (meta.kind != "nn")
            throw std::invalid_argument("train-nn expects an nn-mode dataset");
        const auto data = load_nn_dataset(train_data, meta);
        train_cfg.early_stopping = !train_no_es;
        std::vector<std::size_t> hidden;
        for (double v : parse_vector(train_hidden))
            hidden.push_back(static_cast<std::size_t>(v));
        nnfal::TrainSummary summary;
        const auto model = nnfal::train_mlp(data, hidden, train_cfg, &summary);
        nnfal::save_model(model, train_out);
        std::cerr << "trained " << summary.epochs_run << " epoch(s), best loss "
                  << format_double(summary.best_loss) << ", wrote " << train_out << "\n";
        return kExitSuccess;
    }

    if (c_nn->parsed()) {
        const ResolvedRun r = resolve(nn_opt, false);
        const auto model = nnfal::load_model(nn_model);

        nnfal::ReachabilitySpec spec;
        spec.input_box = flatten_search_space(r.init, r.input_space, r.segments);
        spec.input_box.lows.push_back(0.0);
        spec.input_box.highs.push_back(r.horizon);
        if (nn_unsafe.empty())
            throw std::invalid_argument("nnfal needs --unsafe (conjunction of atoms)");
        spec.unsafe = parse_unsafe(nn_unsafe, r.system->var_names());

        nnfal::ValidationTarget target;
        if (!nn_opt.spec.empty()) target.formula = load_spec(nn_opt.spec);
        target.unsafe = spec.unsafe;
        target.any_sample = nn_val_mode == "any";

        nn_budget.seed = nn_opt.seed;
        nn_budget.jobs = nn_opt.jobs;
        nn_budget.attack = nn_attack == "pgd" ? nnfal::AttackKind::Pgd : nnfal::AttackKind::Fgsm;
        const auto report = nnfal::nnfal_run(*r.system, model, spec, target, nn_budget,
                                             r.segments, r.horizon, r.dt);
        if (!nn_out.empty())
            write_file(nn_out,
                       nnfal::report_to_json(report, nn_budget, r.system_name, nn_timings));
        if (report.counterexample) {
            std::cout << counterexamples_to_csv({*report.counterexample});
            std::cerr << "falsified after " << report.attack_calls << " attack call(s), "
                      << report.refinements << " refinement(s)\n";
            return kExitSuccess;
        }
        std::cerr << "budget exhausted after " << report.attack_calls << " attack call(s), "
                  << report.refinements << " refinement(s)\n";
        return kExitBudget;
    }

    if (c_list->parsed()) {
        for (const auto& b : benchmark_catalog()) {
            std::cout << b.name << ": " << b.description << "\n    state_dim="
                      << b.system->state_dim() << " input_dim=" << b.system->input_dim()
                      << " k=" << b.segments << " T=" << format_double(b.horizon)
                      << " dt=" << format_double(b.dt) << "\n    default spec: " << b.spec
                      << "\n";
        }
        return kExitSuccess;
    }

    return kExitError;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return main_impl(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
}
