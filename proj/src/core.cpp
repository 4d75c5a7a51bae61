#include "flexifal/core.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <sstream>
#include <stdexcept>

namespace flexifal {

std::size_t Trajectory::var_index(const std::string& name) const {
    auto it = std::find(var_names.begin(), var_names.end(), name);
    if (it == var_names.end())
        throw std::out_of_range("trajectory has no variable named '" + name + "'");
    return static_cast<std::size_t>(it - var_names.begin());
}

void Trajectory::validate() const {
    if (dt <= 0.0) throw std::invalid_argument("trajectory dt must be > 0");
    if (states.empty()) throw std::invalid_argument("trajectory must have at least one sample");
    const std::size_t n = states.front().size();
    for (const auto& s : states)
        if (s.size() != n) throw std::invalid_argument("trajectory samples have mixed dimensions");
    if (var_names.size() != n)
        throw std::invalid_argument("trajectory var_names size does not match state dimension");
}

void PiecewiseConstantSignal::validate() const {
    if (values.empty()) throw std::invalid_argument("input signal needs at least one segment");
    if (horizon <= 0.0) throw std::invalid_argument("input signal horizon must be > 0");
    const std::size_t m = values.front().size();
    for (const auto& v : values)
        if (v.size() != m) throw std::invalid_argument("input segments have mixed dimensions");
}

const std::vector<double>& signal_eval(const PiecewiseConstantSignal& u, double t) {
    if (u.values.empty()) throw std::domain_error("signal_eval on empty signal");
    if (t < 0.0 || t > u.horizon)
        throw std::domain_error("signal_eval time outside [0, horizon]");
    const auto k = static_cast<double>(u.values.size());
    auto idx = static_cast<std::size_t>(std::floor(t * k / u.horizon));
    if (idx >= u.values.size()) idx = u.values.size() - 1; // t == horizon
    return u.values[idx];
}

void Box::validate() const {
    if (lows.size() != highs.size()) throw std::invalid_argument("box lows/highs size mismatch");
    for (std::size_t i = 0; i < lows.size(); ++i)
        if (lows[i] > highs[i])
            throw std::invalid_argument("box has low > high at dimension " + std::to_string(i));
}

bool Box::contains(const std::vector<double>& x, double tol) const {
    if (x.size() != lows.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] < lows[i] - tol || x[i] > highs[i] + tol) return false;
    return true;
}

std::vector<double> flatten(const SearchPoint& point) {
    std::vector<double> out = point.x0;
    for (const auto& seg : point.u.values) out.insert(out.end(), seg.begin(), seg.end());
    return out;
}

SearchPoint unflatten(const std::vector<double>& features, std::size_t state_dim,
                      std::size_t segments, std::size_t input_dim, double horizon) {
    if (features.size() != state_dim + segments * input_dim)
        throw std::invalid_argument("unflatten: feature vector has wrong length");
    SearchPoint p;
    p.x0.assign(features.begin(), features.begin() + static_cast<std::ptrdiff_t>(state_dim));
    p.u.horizon = horizon;
    p.u.values.resize(segments);
    std::size_t pos = state_dim;
    for (std::size_t j = 0; j < segments; ++j) {
        p.u.values[j].assign(features.begin() + static_cast<std::ptrdiff_t>(pos),
                             features.begin() + static_cast<std::ptrdiff_t>(pos + input_dim));
        pos += input_dim;
    }
    return p;
}

std::vector<std::string> feature_names(std::size_t state_dim, std::size_t segments,
                                       std::size_t input_dim) {
    std::vector<std::string> names;
    names.reserve(state_dim + segments * input_dim);
    for (std::size_t i = 0; i < state_dim; ++i) names.push_back("x0_" + std::to_string(i));
    for (std::size_t j = 0; j < segments; ++j)
        for (std::size_t r = 0; r < input_dim; ++r)
            names.push_back("u_" + std::to_string(j) + "_" + std::to_string(r));
    return names;
}

Box flatten_search_space(const Box& init, const Box& input_space, std::size_t segments) {
    init.validate();
    input_space.validate();
    Box out = init;
    for (std::size_t j = 0; j < segments; ++j) {
        out.lows.insert(out.lows.end(), input_space.lows.begin(), input_space.lows.end());
        out.highs.insert(out.highs.end(), input_space.highs.begin(), input_space.highs.end());
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

double parse_double(std::string_view s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::invalid_argument("bad number '" + std::string(s) + "'");
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

void append_point_row(std::string& out, const SearchPoint& p) {
    const auto feats = flatten(p);
    for (std::size_t i = 0; i < feats.size(); ++i) {
        if (i) out += ',';
        out += format_double(feats[i]);
    }
}

std::string header_for(const SearchPoint& p) {
    const auto names = feature_names(p.x0.size(), p.u.segments(), p.u.dim());
    std::string h;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (i) h += ',';
        h += names[i];
    }
    return h;
}

} // namespace

std::string points_to_csv(const std::vector<SearchPoint>& points) {
    if (points.empty()) return "";
    std::string out = header_for(points.front());
    out += '\n';
    for (const auto& p : points) {
        append_point_row(out, p);
        out += '\n';
    }
    return out;
}

std::string counterexamples_to_csv(const std::vector<Counterexample>& ces) {
    if (ces.empty()) return "";
    std::string out = header_for(ces.front().point);
    out += ",robustness\n";
    for (const auto& ce : ces) {
        append_point_row(out, ce.point);
        out += ',';
        out += format_double(ce.robustness);
        out += '\n';
    }
    return out;
}

std::vector<SearchPoint> points_from_csv(std::istream& in, std::size_t state_dim,
                                         std::size_t segments, std::size_t input_dim,
                                         double horizon) {
    std::vector<SearchPoint> out;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (header) { header = false; continue; }
        const auto cells = split_csv_line(line);
        std::vector<double> feats;
        feats.reserve(cells.size());
        for (const auto& c : cells) feats.push_back(parse_double(c));
        // Tolerate a trailing robustness column from counterexample files.
        if (feats.size() == state_dim + segments * input_dim + 1) feats.pop_back();
        out.push_back(unflatten(feats, state_dim, segments, input_dim, horizon));
    }
    return out;
}

namespace {

nlohmann::json point_json(const SearchPoint& p) {
    return nlohmann::json{
        {"x0", p.x0},
        {"u", {{"horizon", p.u.horizon}, {"values", p.u.values}}},
    };
}

} // namespace

std::string point_to_json(const SearchPoint& point) { return point_json(point).dump(); }

std::string counterexample_to_json(const Counterexample& ce) {
    nlohmann::json j;
    j["point"] = point_json(ce.point);
    j["robustness"] = ce.robustness;
    j["trajectory"] = {
        {"dt", ce.trajectory.dt},
        {"var_names", ce.trajectory.var_names},
        {"states", ce.trajectory.states},
    };
    return j.dump();
}

SearchPoint point_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    SearchPoint p;
    p.x0 = j.at("x0").get<std::vector<double>>();
    p.u.horizon = j.at("u").at("horizon").get<double>();
    p.u.values = j.at("u").at("values").get<std::vector<std::vector<double>>>();
    return p;
}

std::string trajectory_to_csv(const Trajectory& traj) {
    std::string out = "time";
    for (const auto& n : traj.var_names) {
        out += ',';
        out += n;
    }
    out += '\n';
    for (std::size_t j = 0; j < traj.states.size(); ++j) {
        out += format_double(traj.time_of(j));
        for (double v : traj.states[j]) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    return out;
}

Trajectory trajectory_from_csv(std::istream& in) {
    Trajectory traj;
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("trajectory CSV is empty");
    auto header = split_csv_line(line);
    if (header.empty() || header.front() != "time")
        throw std::invalid_argument("trajectory CSV must start with a 'time' column");
    traj.var_names.assign(header.begin() + 1, header.end());
    std::vector<double> times;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw std::invalid_argument("trajectory CSV row has wrong column count");
        times.push_back(parse_double(cells.front()));
        std::vector<double> state;
        state.reserve(cells.size() - 1);
        for (std::size_t i = 1; i < cells.size(); ++i) state.push_back(parse_double(cells[i]));
        traj.states.push_back(std::move(state));
    }
    if (traj.states.empty()) throw std::invalid_argument("trajectory CSV has no samples");
    traj.dt = traj.states.size() > 1 ? times[1] - times[0] : 1.0;
    for (std::size_t j = 0; j < times.size(); ++j)
        if (std::fabs(times[j] - traj.dt * static_cast<double>(j)) > 1e-6)
            throw std::invalid_argument("trajectory CSV times are not a uniform grid");
    traj.validate();
    return traj;
}

} // namespace flexifal
