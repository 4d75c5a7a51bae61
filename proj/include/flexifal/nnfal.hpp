#ifndef FLEXIFAL_NNFAL_HPP
#define FLEXIFAL_NNFAL_HPP

#include "flexifal/core.hpp"
#include "flexifal/dataset.hpp"
#include "flexifal/stl.hpp"
#include "flexifal/systems.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

// Neural-network surrogate falsification: train a ReLU MLP on trajectory
// data, attack it with signed-gradient methods against a reachability
// specification, validate candidates on the real system and carve out the
// spurious ones.
namespace flexifal::nnfal {

// Fully connected ReLU network, identity output layer. Weight matrix l is
// row-major widths[l+1] x widths[l]. Inputs are consumed in scaled space when
// input_scaling is present.
struct Mlp {
    std::vector<std::size_t> widths;
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;
    std::optional<ScalingParams> input_scaling;
    std::uint64_t seed = 0;
    std::string training_note;

    std::size_t input_dim() const { return widths.front(); }
    std::size_t output_dim() const { return widths.back(); }
    std::size_t layer_count() const { return weights.size(); }
    std::size_t parameter_count() const;
};

// Uniform fan-in initialization: each layer in U(-sqrt(1/fan_in), +sqrt(1/fan_in)).
Mlp make_mlp(const std::vector<std::size_t>& widths, std::uint64_t seed);

std::vector<double> forward(const Mlp& mlp, const std::vector<double>& x_scaled);
// Applies the model's input scaling first.
std::vector<double> forward_raw(const Mlp& mlp, const std::vector<double>& x_raw);

// MSE over the batch (mean over rows and output dims) plus parameter
// gradients laid out like the parameter_count() flattening: all weight
// matrices in layer order, then all bias vectors.
double mse_loss(const Mlp& mlp, const std::vector<std::vector<double>>& inputs,
                const std::vector<std::vector<double>>& targets);
double mse_loss_and_gradients(const Mlp& mlp, const std::vector<std::vector<double>>& inputs,
                              const std::vector<std::vector<double>>& targets,
                              std::vector<double>& gradients);

std::vector<double> flatten_parameters(const Mlp& mlp);
void set_parameters(Mlp& mlp, const std::vector<double>& params);

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 200;
    std::size_t patience = 5;
    double validation_fraction = 0.2;
    std::uint64_t seed = 0;
    bool early_stopping = true;

    void validate() const;
};

struct TrainSummary {
    std::size_t epochs_run = 0;
    double best_loss = 0.0;   // validation loss, or training loss without early stopping
    double final_train_loss = 0.0;
};

// Adam (beta1 0.9, beta2 0.999, eps 1e-8) on MSE; inputs are MinMax scaled
// and the fitted scaling is stored in the model. With early stopping the
// checkpoint with the lowest validation loss is returned, otherwise the one
// with the lowest training loss.
Mlp train_mlp(const NNDataset& data, const std::vector<std::size_t>& hidden_widths,
              const TrainConfig& cfg, TrainSummary* summary = nullptr);

// Unsafe output set: conjunction of half-spaces normal . y <= offset.
struct HalfSpace {
    std::vector<double> normal;
    double offset = 0.0;
};

// y >= c on output dim i, and y <= c, as half-space rows.
HalfSpace output_at_least(std::size_t dim, double c, std::size_t output_dim);
HalfSpace output_at_most(std::size_t dim, double c, std::size_t output_dim);

struct ReachabilitySpec {
    Box input_box;                // I over the flattened (x0, u, t) features, raw units
    std::vector<HalfSpace> unsafe; // U; non-empty

    void validate(std::size_t input_dim, std::size_t output_dim) const;
};

// Hinge loss: sum of positive violation slacks of U's half-spaces at the
// network output; zero exactly when the output lies in U.
double unsafe_loss(const Mlp& mlp, const ReachabilitySpec& spec,
                   const std::vector<double>& x_scaled);

// Excluded L-inf balls, stored in the network's scaled input space.
struct SpuriousSet {
    struct Entry {
        std::vector<double> center_scaled;
        double radius = 0.0;
    };
    std::vector<Entry> entries;

    bool contains_scaled(const std::vector<double>& x_scaled) const;
    std::size_t size() const { return entries.size(); }
};

// psi' = psi union {(candidate, delta)}; the candidate is given in raw units
// and stored scaled.
SpuriousSet exclude_spurious(SpuriousSet psi, const Mlp& mlp,
                             const std::vector<double>& candidate_raw, double delta);

struct AttackResult {
    bool found = false;
    std::vector<double> candidate_raw;
    std::size_t iterations = 0; // iterations spent in the successful restart
    std::size_t restart = 0;
};

// Projected signed-gradient descent on the hinge loss, restarted from random
// interior points. Iterates inside an excluded ball are resampled. Restarts
// may run in parallel; the lowest successful restart index wins.
AttackResult pgd_attack(const Mlp& mlp, const ReachabilitySpec& spec, const SpuriousSet& psi,
                        std::size_t iterations, double step, std::size_t restarts,
                        std::uint64_t seed, int jobs = 0);

// Single signed-gradient step of magnitude epsilon from one random point.
AttackResult fgsm_attack(const Mlp& mlp, const ReachabilitySpec& spec, const SpuriousSet& psi,
                         double epsilon, std::uint64_t seed);

// What a candidate is checked against on the real system: an STL formula
// (robustness < 0) or the unsafe set itself, either anywhere along the
// trajectory or only at the candidate's time feature snapped to the grid.
struct ValidationTarget {
    stl::FormulaPtr formula;        // preferred when set
    std::vector<HalfSpace> unsafe;  // used when formula is null
    bool any_sample = true;         // false: check only at the candidate's t
};

struct ValidationResult {
    bool real = false;
    double robustness = 0.0; // negative iff real
    Trajectory trajectory;
    std::string note;
};

// Resimulates the candidate (x0, u, t) on the true system. Simulation
// failures validate as spurious.
ValidationResult validate(const System& sys, const std::vector<double>& candidate_raw,
                          const ValidationTarget& target, std::size_t segments, double horizon,
                          double dt);

enum class AttackKind { Pgd, Fgsm };

struct NnfalBudget {
    std::size_t max_attacks = 25;
    double timeout_secs = 600.0;
    std::uint64_t seed = 0;
    double exclusion_radius = 1e-3; // delta, scaled space
    AttackKind attack = AttackKind::Pgd;
    std::size_t pgd_iterations = 200;
    double pgd_step = 0.02;
    std::size_t pgd_restarts = 8;
    double fgsm_epsilon = 0.5;
    int jobs = 0;
};

struct AttackEvent {
    std::size_t call = 0;
    bool candidate_found = false;
    bool real = false;
    std::vector<double> candidate_raw;
};

struct NnfalReport {
    bool falsified = false;
    std::optional<Counterexample> counterexample;
    std::size_t refinements = 0; // spurious candidates excluded (MR)
    std::size_t attack_calls = 0;
    std::vector<AttackEvent> events;
    SpuriousSet excluded;
    double wall_time_secs = 0.0;
};

// attack -> validate -> exclude loop until a real counterexample or budget
// exhaustion. `validator` defaults to validate() on sys; tests inject rigged
// verdicts through it.
using Validator = std::function<ValidationResult(const std::vector<double>& candidate_raw)>;
NnfalReport nnfal_run(const System& sys, const Mlp& surrogate, const ReachabilitySpec& spec,
                      const ValidationTarget& target, const NnfalBudget& budget,
                      std::size_t segments, double horizon, double dt,
                      const Validator& validator = {});

// Successes of a closed falsification task over per-run seed indices.
std::size_t falsification_rate(const std::function<bool(std::size_t)>& task,
                               std::size_t runs = 10);

// Model file: one line of JSON (widths, scaling, seed, note, blob length)
// followed by the raw little-endian float64 parameter blob.
void save_model(const Mlp& mlp, const std::string& path);
Mlp load_model(const std::string& path);

std::string report_to_json(const NnfalReport& report, const NnfalBudget& budget,
                           const std::string& system_name, bool include_timing = false);

} // namespace flexifal::nnfal

#endif
