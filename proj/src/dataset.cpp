#include "flexifal/dataset.hpp"

#include "flexifal/batch.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

namespace flexifal {

SearchPoint sample_point(const Box& init, const Box& input_space, std::size_t segments,
                         double horizon, Rng& rng) {
    SearchPoint p;
    p.u.horizon = horizon;
    p.u.values.resize(segments);
    for (std::size_t j = 0; j < segments; ++j) {
        auto& seg = p.u.values[j];
        seg.resize(input_space.dim());
        for (std::size_t r = 0; r < input_space.dim(); ++r)
            seg[r] = rng.uniform(input_space.lows[r], input_space.highs[r]);
    }
    p.x0.resize(init.dim());
    for (std::size_t i = 0; i < init.dim(); ++i)
        p.x0[i] = rng.uniform(init.lows[i], init.highs[i]);
    return p;
}

std::vector<SampledTrajectory> sample_trajectories(const System& sys, const Box& init,
                                                   const Box& input_space, std::size_t segments,
                                                   double T, double dt, std::size_t count,
                                                   std::uint64_t seed, int jobs,
                                                   int max_retries) {
    init.validate();
    input_space.validate();
    if (segments < 1) throw std::invalid_argument("need at least one input segment");
    if (init.dim() != sys.state_dim() || input_space.dim() != sys.input_dim())
        throw std::invalid_argument("box dimensions do not match the system");

    return batch::parallel_map<SampledTrajectory>(count, jobs, [&](std::size_t i) {
        for (int retry = 0;; ++retry) {
            Rng rng = derive_stream(seed, {i, static_cast<std::uint64_t>(retry)});
            SearchPoint p = sample_point(init, input_space, segments, T, rng);
            try {
                Trajectory traj = sys.simulate(p.x0, p.u, T, dt);
                return SampledTrajectory{std::move(p), std::move(traj)};
            } catch (const SimulationError& e) {
                std::cerr << "warning: trajectory " << i << " blew up (" << e.what()
                          << "), resampling\n";
                if (retry >= max_retries)
                    throw SimulationError("trajectory " + std::to_string(i) + " failed after " +
                                          std::to_string(max_retries) + " resampling attempts");
            }
        }
    });
}

NNDataset generate_nn_dataset(const System& sys, const Box& init, const Box& input_space,
                              std::size_t segments, double T, double dt, std::size_t trajectories,
                              std::uint64_t seed, int jobs) {
    if (trajectories < 1) throw std::invalid_argument("need at least one trajectory");
    const auto sampled =
        sample_trajectories(sys, init, input_space, segments, T, dt, trajectories, seed, jobs);

    NNDataset d;
    d.state_dim = sys.state_dim();
    d.segments = segments;
    d.input_dim = sys.input_dim();
    d.horizon = T;
    d.dt = dt;
    d.input_names = feature_names(d.state_dim, segments, d.input_dim);
    d.input_names.push_back("t");
    const std::size_t label_dim = sys.var_names().size();
    for (std::size_t i = 0; i < label_dim; ++i) d.label_names.push_back("y_" + std::to_string(i));

    const std::size_t samples = sampled.front().trajectory.samples();
    d.inputs.reserve(trajectories * samples);
    d.labels.reserve(trajectories * samples);
    for (const auto& st : sampled) {
        const auto flat = flatten(st.point);
        for (std::size_t j = 0; j < st.trajectory.samples(); ++j) {
            auto row = flat;
            row.push_back(st.trajectory.time_of(j));
            d.inputs.push_back(std::move(row));
            d.labels.push_back(st.trajectory.states[j]);
        }
    }
    return d;
}

RobustnessDataset generate_robustness_dataset(const System& sys, const Box& init,
                                              const Box& input_space, std::size_t segments,
                                              double T, double dt, const stl::Formula& spec,
                                              std::size_t trajectories, std::uint64_t seed,
                                              int jobs) {
    if (trajectories < 1) throw std::invalid_argument("need at least one trajectory");
    if (stl::required_horizon(spec) > T + 1e-9)
        throw stl::HorizonError("horizon-insufficient: the specification needs " +
                                format_double(stl::required_horizon(spec)) +
                                "s but the horizon is " + format_double(T) + "s");
    const auto sampled =
        sample_trajectories(sys, init, input_space, segments, T, dt, trajectories, seed, jobs);

    RobustnessDataset d;
    d.state_dim = sys.state_dim();
    d.segments = segments;
    d.input_dim = sys.input_dim();
    d.horizon = T;
    d.dt = dt;
    d.names = feature_names(d.state_dim, segments, d.input_dim);
    d.features.reserve(trajectories);
    d.robustness.resize(trajectories);
    std::vector<Trajectory> trajs;
    trajs.reserve(trajectories);
    for (const auto& st : sampled) {
        d.features.push_back(flatten(st.point));
        trajs.push_back(st.trajectory);
    }
    d.robustness = batch::robustness_many(spec, trajs, jobs);
    return d;
}

std::pair<std::vector<std::vector<double>>, ScalingParams>
minmax_scale(const std::vector<std::vector<double>>& rows,
             const std::optional<ScalingParams>& params) {
    ScalingParams p;
    if (params) {
        p = *params;
    } else {
        if (rows.empty()) throw std::invalid_argument("cannot fit scaling on an empty matrix");
        const std::size_t dim = rows.front().size();
        p.mins.assign(dim, std::numeric_limits<double>::infinity());
        p.maxs.assign(dim, -std::numeric_limits<double>::infinity());
        for (const auto& r : rows)
            for (std::size_t i = 0; i < dim; ++i) {
                p.mins[i] = std::min(p.mins[i], r[i]);
                p.maxs[i] = std::max(p.maxs[i], r[i]);
            }
        for (std::size_t i = 0; i < dim; ++i)
            if (p.degenerate(i))
                std::cerr << "warning: feature " << i << " is constant; scaling it to 0\n";
    }
    std::vector<std::vector<double>> scaled(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        scaled[r].resize(rows[r].size());
        for (std::size_t i = 0; i < rows[r].size(); ++i) scaled[r][i] = p.scale(i, rows[r][i]);
    }
    return {std::move(scaled), std::move(p)};
}

std::vector<std::vector<double>> minmax_unscale(const std::vector<std::vector<double>>& rows,
                                                const ScalingParams& params) {
    std::vector<std::vector<double>> out(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out[r].resize(rows[r].size());
        for (std::size_t i = 0; i < rows[r].size(); ++i) out[r][i] = params.unscale(i, rows[r][i]);
    }
    return out;
}

double degree_of_difficulty(const System& sys, const Box& init, const Box& input_space,
                            std::size_t segments, double T, double dt, const stl::Formula& spec,
                            std::size_t trajectories, std::uint64_t seed, int jobs) {
    const auto d = generate_robustness_dataset(sys, init, input_space, segments, T, dt, spec,
                                               trajectories, seed, jobs);
    std::size_t violating = 0;
    for (double r : d.robustness)
        if (r < 0.0) ++violating;
    return 100.0 * static_cast<double>(violating) / static_cast<double>(trajectories);
}

namespace {

void append_row(std::string& out, const std::vector<double>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out += ',';
        out += format_double(row[i]);
    }
}

} // namespace

std::string to_csv(const NNDataset& d) {
    std::string out;
    for (std::size_t i = 0; i < d.input_names.size(); ++i) {
        if (i) out += ',';
        out += d.input_names[i];
    }
    for (const auto& n : d.label_names) {
        out += ',';
        out += n;
    }
    out += '\n';
    for (std::size_t r = 0; r < d.rows(); ++r) {
        append_row(out, d.inputs[r]);
        out += ',';
        append_row(out, d.labels[r]);
        out += '\n';
    }
    return out;
}

std::string to_csv(const RobustnessDataset& d) {
    std::string out;
    for (const auto& n : d.names) {
        out += n;
        out += ',';
    }
    out += "rho\n";
    for (std::size_t r = 0; r < d.rows(); ++r) {
        append_row(out, d.features[r]);
        out += ',';
        out += format_double(d.robustness[r]);
        out += '\n';
    }
    return out;
}

namespace {

nlohmann::json box_to_json(const Box& b) {
    return nlohmann::json{{"lows", b.lows}, {"highs", b.highs}};
}

Box box_from_json(const nlohmann::json& j) {
    return Box{j.at("lows").get<std::vector<double>>(), j.at("highs").get<std::vector<double>>()};
}

} // namespace

std::string meta_to_json(const DatasetMeta& m) {
    nlohmann::json j{
        {"kind", m.kind},
        {"system", m.system},
        {"spec", m.spec},
        {"seed", m.seed},
        {"init", box_to_json(m.init)},
        {"input_space", box_to_json(m.input_space)},
        {"segments", m.segments},
        {"state_dim", m.state_dim},
        {"input_dim", m.input_dim},
        {"label_dim", m.label_dim},
        {"horizon", m.horizon},
        {"dt", m.dt},
        {"rows", m.rows},
    };
    return j.dump(2);
}

DatasetMeta meta_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    DatasetMeta m;
    m.kind = j.at("kind").get<std::string>();
    m.system = j.value("system", "");
    m.spec = j.value("spec", "");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.init = box_from_json(j.at("init"));
    m.input_space = box_from_json(j.at("input_space"));
    m.segments = j.at("segments").get<std::size_t>();
    m.state_dim = j.at("state_dim").get<std::size_t>();
    m.input_dim = j.at("input_dim").get<std::size_t>();
    m.label_dim = j.value("label_dim", std::size_t{0});
    m.horizon = j.at("horizon").get<double>();
    m.dt = j.at("dt").get<double>();
    m.rows = j.value("rows", std::size_t{0});
    return m;
}

namespace {

std::vector<std::vector<double>> read_csv_rows(const std::string& path,
                                               std::vector<std::string>& header) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open dataset file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("dataset file is empty");
    header.clear();
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        row.reserve(header.size());
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            double v = 0.0;
            auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (res.ec != std::errc())
                throw std::invalid_argument("bad number '" + cell + "' in " + path);
            row.push_back(v);
        }
        if (row.size() != header.size())
            throw std::invalid_argument("ragged row in dataset file " + path);
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace

NNDataset load_nn_dataset(const std::string& csv_path, const DatasetMeta& meta) {
    std::vector<std::string> header;
    auto rows = read_csv_rows(csv_path, header);
    NNDataset d;
    d.state_dim = meta.state_dim;
    d.segments = meta.segments;
    d.input_dim = meta.input_dim;
    d.horizon = meta.horizon;
    d.dt = meta.dt;
    const std::size_t in_dim = meta.state_dim + meta.segments * meta.input_dim + 1;
    if (header.size() <= in_dim)
        throw std::invalid_argument("dataset has no label columns");
    d.input_names.assign(header.begin(), header.begin() + static_cast<std::ptrdiff_t>(in_dim));
    d.label_names.assign(header.begin() + static_cast<std::ptrdiff_t>(in_dim), header.end());
    for (auto& row : rows) {
        d.inputs.emplace_back(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(in_dim));
        d.labels.emplace_back(row.begin() + static_cast<std::ptrdiff_t>(in_dim), row.end());
    }
    return d;
}

RobustnessDataset load_robustness_dataset(const std::string& csv_path, const DatasetMeta& meta) {
    std::vector<std::string> header;
    auto rows = read_csv_rows(csv_path, header);
    if (header.empty() || header.back() != "rho")
        throw std::invalid_argument("robustness dataset must end with a rho column");
    RobustnessDataset d;
    d.state_dim = meta.state_dim;
    d.segments = meta.segments;
    d.input_dim = meta.input_dim;
    d.horizon = meta.horizon;
    d.dt = meta.dt;
    d.names.assign(header.begin(), header.end() - 1);
    for (auto& row : rows) {
        d.robustness.push_back(row.back());
        row.pop_back();
        d.features.push_back(std::move(row));
    }
    return d;
}

} // namespace flexifal
