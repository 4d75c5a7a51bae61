#ifndef FLEXIFAL_CORE_HPP
#define FLEXIFAL_CORE_HPP

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace flexifal {

// Uniformly sampled state evolution. Sample j holds the state at time j*dt;
// the horizon is (states.size()-1)*dt.
struct Trajectory {
    double dt = 0.0;
    std::vector<std::vector<double>> states;
    std::vector<std::string> var_names;

    std::size_t samples() const { return states.size(); }
    std::size_t dim() const { return states.empty() ? 0 : states.front().size(); }
    double horizon() const { return states.empty() ? 0.0 : dt * static_cast<double>(states.size() - 1); }
    double time_of(std::size_t j) const { return dt * static_cast<double>(j); }

    // Index of a variable by name; throws std::out_of_range if absent.
    std::size_t var_index(const std::string& name) const;

    // Validates the type invariants; throws std::invalid_argument on violation.
    void validate() const;
};

// Piecewise-constant input signal: k equally spaced segments of dimension m
// over [0, horizon]. Segment j is constant on [j*T/k, (j+1)*T/k).
struct PiecewiseConstantSignal {
    double horizon = 0.0;
    std::vector<std::vector<double>> values; // k segment vectors, each of dim m

    std::size_t segments() const { return values.size(); }
    std::size_t dim() const { return values.empty() ? 0 : values.front().size(); }

    void validate() const;
};

// Evaluates the signal at time t in [0, T]. The boundary between segments
// belongs to the right segment (floor rule); t == T clamps to the last one.
// Throws std::domain_error for t outside [0, T].
const std::vector<double>& signal_eval(const PiecewiseConstantSignal& u, double t);

// Axis-aligned hyper-rectangle.
struct Box {
    std::vector<double> lows;
    std::vector<double> highs;

    std::size_t dim() const { return lows.size(); }
    void validate() const;
    bool contains(const std::vector<double>& x, double tol = 0.0) const;
};

// The falsification search variable: an initial state plus a piecewise
// constant input signal. The time horizon is fixed per benchmark.
struct SearchPoint {
    std::vector<double> x0;
    PiecewiseConstantSignal u;
};

struct Counterexample {
    SearchPoint point;
    Trajectory trajectory;
    double robustness = 0.0;
};

// Serializes a point as [x0, u_0, ..., u_{k-1}]; unflatten inverts it exactly.
std::vector<double> flatten(const SearchPoint& point);
SearchPoint unflatten(const std::vector<double>& features, std::size_t state_dim,
                      std::size_t segments, std::size_t input_dim, double horizon);

// Column names of the flattened layout: x0_0.., u_<segment>_<dim>..
std::vector<std::string> feature_names(std::size_t state_dim, std::size_t segments,
                                       std::size_t input_dim);

// Cartesian product [init x input^k] as one flat box; the search space of the
// flattened features.
Box flatten_search_space(const Box& init, const Box& input_space, std::size_t segments);

// Line-oriented CSV: header of feature names, one row per point;
// counterexamples carry a trailing robustness column.
std::string points_to_csv(const std::vector<SearchPoint>& points);
std::string counterexamples_to_csv(const std::vector<Counterexample>& ces);
std::vector<SearchPoint> points_from_csv(std::istream& in, std::size_t state_dim,
                                         std::size_t segments, std::size_t input_dim,
                                         double horizon);

// Self-describing JSON forms (nlohmann::json serialized as text).
std::string point_to_json(const SearchPoint& point);
std::string counterexample_to_json(const Counterexample& ce);
SearchPoint point_from_json(const std::string& text);

// Trajectory CSV: `time,var1,...,varn` rows on the dt grid (the subprocess
// wire format and the `simulate` output format).
std::string trajectory_to_csv(const Trajectory& traj);
Trajectory trajectory_from_csv(std::istream& in);

// Shortest round-trip decimal form of a double (what all CSV/text emitters use).
std::string format_double(double v);

} // namespace flexifal

#endif
