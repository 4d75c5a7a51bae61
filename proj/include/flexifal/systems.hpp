#ifndef FLEXIFAL_SYSTEMS_HPP
#define FLEXIFAL_SYSTEMS_HPP

#include "flexifal/core.hpp"

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace flexifal {

struct SimulationError : std::runtime_error {
    explicit SimulationError(const std::string& what, std::size_t bad_index = SIZE_MAX,
                             int exit_code = 0, std::string stderr_text = {})
        : std::runtime_error(what), bad_index(bad_index), exit_code(exit_code),
          stderr_text(std::move(stderr_text)) {}
    std::size_t bad_index; // first NaN/Inf sample for numerical blow-ups
    int exit_code;         // subprocess exit status, when applicable
    std::string stderr_text;
};

// Deterministic black-box simulator. Identical (x0, u, T, dt) must yield
// bit-identical trajectories, and simulate must be callable concurrently.
class System {
public:
    virtual ~System() = default;

    virtual std::size_t state_dim() const = 0;   // searchable initial-state dims (n0)
    virtual std::size_t input_dim() const = 0;   // input signal dims (m)
    virtual std::vector<std::string> var_names() const = 0; // trajectory vars (n >= n0)

    virtual Trajectory simulate(const std::vector<double>& x0, const PiecewiseConstantSignal& u,
                                double T, double dt) const = 0;

    Trajectory simulate_point(const SearchPoint& p, double T, double dt) const {
        return simulate(p.x0, p.u, T, dt);
    }
};

// Classical 4th-order Runge-Kutta step with the input held constant.
using VectorField =
    std::function<void(const std::vector<double>& x, const std::vector<double>& u_val,
                       std::vector<double>& dxdt)>;

std::vector<double> step_rk4(const VectorField& f, const std::vector<double>& x,
                             const std::vector<double>& u_val, double h);

// Hybrid automaton with urgent transition semantics: a transition fires at the
// first step boundary where its guard holds, lowest-indexed guard first.
struct GuardedTransition {
    std::size_t source = 0;
    std::function<bool(const std::vector<double>&)> guard;
    std::size_t target = 0;
    std::function<void(std::vector<double>&)> reset; // in place; null = identity
};

class HybridSystem : public System {
public:
    HybridSystem(std::size_t state_dim, std::size_t input_dim, std::vector<std::string> var_names,
                 std::vector<VectorField> modes, std::vector<GuardedTransition> guards,
                 std::function<std::size_t(const std::vector<double>&)> initial_mode = {},
                 std::function<std::vector<double>(const std::vector<double>&)> output = {});

    std::size_t state_dim() const override { return state_dim_; }
    std::size_t input_dim() const override { return input_dim_; }
    std::vector<std::string> var_names() const override { return var_names_; }

    Trajectory simulate(const std::vector<double>& x0, const PiecewiseConstantSignal& u, double T,
                        double dt) const override;

    const std::vector<GuardedTransition>& guards() const { return guards_; }

private:
    std::size_t state_dim_;
    std::size_t input_dim_;
    std::vector<std::string> var_names_;
    std::vector<VectorField> modes_;
    std::vector<GuardedTransition> guards_;
    std::function<std::size_t(const std::vector<double>&)> initial_mode_;
    std::function<std::vector<double>(const std::vector<double>&)> output_;
};

// Applies the first enabled guard of `mode` to the post-step state, returning
// the (possibly reset) state and successor mode.
std::pair<std::size_t, std::vector<double>> handle_guards(const HybridSystem& hs, std::size_t mode,
                                                          const std::vector<double>& x_prev,
                                                          std::vector<double> x_next);

// Subprocess-backed system. Each simulate call spawns the executable, writes
// one JSON request {"x0":[...],"u":[[...],...],"T":..,"dt":..} to its stdin and
// parses a `time,var1,...` CSV from its stdout; exit code 0 means success.
struct ExternalProtocolConfig {
    std::size_t state_dim = 0;
    std::size_t input_dim = 0;
    std::vector<std::string> var_names;
    double timeout_secs = 30.0;
};

class ExternalSystem : public System {
public:
    ExternalSystem(std::string command, ExternalProtocolConfig config);

    std::size_t state_dim() const override { return config_.state_dim; }
    std::size_t input_dim() const override { return config_.input_dim; }
    std::vector<std::string> var_names() const override { return config_.var_names; }

    Trajectory simulate(const std::vector<double>& x0, const PiecewiseConstantSignal& u, double T,
                        double dt) const override;

private:
    std::string command_;
    ExternalProtocolConfig config_;
};

// Raw subprocess runner used by ExternalSystem (exposed for tests).
struct SubprocessResult {
    int exit_code = -1;
    bool timed_out = false;
    std::string out;
    std::string err;
};
SubprocessResult run_subprocess(const std::string& command, const std::vector<std::string>& args,
                                const std::string& stdin_data, double timeout_secs);

// Built-in benchmark catalog. Boxes, horizon and discretization defaults are
// pinned per system; `spec` holds the default safety property.
struct Benchmark {
    std::string name;
    std::shared_ptr<const System> system;
    Box init;
    Box input_space;
    std::size_t segments = 1; // k
    double horizon = 1.0;     // T
    double dt = 0.1;
    std::string spec;
    std::string description;
};

const std::vector<Benchmark>& benchmark_catalog();
const Benchmark& find_benchmark(const std::string& name);

// Selector used across the CLI: a catalog name, or "exec:<path>" for an
// external executable (dims supplied by the caller).
std::shared_ptr<const System> make_system(const std::string& selector,
                                          const ExternalProtocolConfig* external_config = nullptr);

} // namespace flexifal

#endif
