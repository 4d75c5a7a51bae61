#include "flexifal/nnfal.hpp"

#include "flexifal/batch.hpp"
#include "flexifal/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace flexifal::nnfal {

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
}

Mlp make_mlp(const std::vector<std::size_t>& widths, std::uint64_t seed) {
    if (widths.size() < 2) throw std::invalid_argument("an MLP needs input and output widths");
    for (std::size_t w : widths)
        if (w == 0) throw std::invalid_argument("layer widths must be positive");
    Mlp mlp;
    mlp.widths = widths;
    mlp.seed = seed;
    Rng rng = derive_stream(seed, {7});
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const std::size_t fan_in = widths[l];
        const std::size_t fan_out = widths[l + 1];
        const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
        std::vector<double> w(fan_out * fan_in);
        for (double& v : w) v = rng.uniform(-bound, bound);
        mlp.weights.push_back(std::move(w));
        mlp.biases.emplace_back(fan_out, 0.0);
    }
    return mlp;
}

namespace {

// Forward pass keeping pre-activations and activations for backprop.
struct ForwardTrace {
    std::vector<std::vector<double>> pre;  // z per layer (1..L)
    std::vector<std::vector<double>> act;  // a per layer (0..L); act[L] is the output
};

void forward_trace(const Mlp& mlp, const std::vector<double>& x, ForwardTrace& tr) {
    const std::size_t layers = mlp.layer_count();
    tr.pre.resize(layers);
    tr.act.resize(layers + 1);
    tr.act[0] = x;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t out = mlp.widths[l + 1];
        const std::size_t in = mlp.widths[l];
        auto& z = tr.pre[l];
        z.assign(out, 0.0);
        const auto& w = mlp.weights[l];
        const auto& a = tr.act[l];
        for (std::size_t o = 0; o < out; ++o) {
            double s = mlp.biases[l][o];
            const double* row = w.data() + o * in;
            for (std::size_t i = 0; i < in; ++i) s += row[i] * a[i];
            z[o] = s;
        }
        auto& next = tr.act[l + 1];
        next = z;
        if (l + 1 < layers)
            for (double& v : next) v = v > 0.0 ? v : 0.0;
    }
}

// Backward pass from dL/dy. Parameter gradients are accumulated when
// param_grads is non-null (layout of flatten_parameters); the gradient with
// respect to the input is returned through input_grad when requested.
void backward(const Mlp& mlp, const ForwardTrace& tr, std::vector<double> delta,
              std::vector<double>* param_grads, std::vector<double>* input_grad) {
    const std::size_t layers = mlp.layer_count();
    std::vector<std::size_t> weight_offsets(layers), bias_offsets(layers);
    if (param_grads) {
        std::size_t off = 0;
        for (std::size_t l = 0; l < layers; ++l) {
            weight_offsets[l] = off;
            off += mlp.weights[l].size();
        }
        for (std::size_t l = 0; l < layers; ++l) {
            bias_offsets[l] = off;
            off += mlp.biases[l].size();
        }
    }
    for (std::size_t li = layers; li-- > 0;) {
        const std::size_t out = mlp.widths[li + 1];
        const std::size_t in = mlp.widths[li];
        const auto& a = tr.act[li];
        if (param_grads) {
            double* gw = param_grads->data() + weight_offsets[li];
            double* gb = param_grads->data() + bias_offsets[li];
            for (std::size_t o = 0; o < out; ++o) {
                gb[o] += delta[o];
                double* row = gw + o * in;
                for (std::size_t i = 0; i < in; ++i) row[i] += delta[o] * a[i];
            }
        }
        const bool need_prev = li > 0 || input_grad != nullptr;
        if (!need_prev) break;
        std::vector<double> prev(in, 0.0);
        const auto& w = mlp.weights[li];
        for (std::size_t o = 0; o < out; ++o) {
            const double d = delta[o];
            const double* row = w.data() + o * in;
            for (std::size_t i = 0; i < in; ++i) prev[i] += row[i] * d;
        }
        if (li > 0) {
            const auto& z = tr.pre[li - 1];
            for (std::size_t i = 0; i < in; ++i)
                if (z[i] <= 0.0) prev[i] = 0.0;
        } else if (input_grad) {
            *input_grad = prev;
            return;
        }
        delta = std::move(prev);
    }
}

} // namespace

std::vector<double> forward(const Mlp& mlp, const std::vector<double>& x_scaled) {
    if (x_scaled.size() != mlp.input_dim())
        throw std::invalid_argument("forward expects " + std::to_string(mlp.input_dim()) +
                                    " inputs, got " + std::to_string(x_scaled.size()));
    ForwardTrace tr;
    forward_trace(mlp, x_scaled, tr);
    return tr.act.back();
}

std::vector<double> forward_raw(const Mlp& mlp, const std::vector<double>& x_raw) {
    if (!mlp.input_scaling) return forward(mlp, x_raw);
    std::vector<double> scaled(x_raw.size());
    for (std::size_t i = 0; i < x_raw.size(); ++i) scaled[i] = mlp.input_scaling->scale(i, x_raw[i]);
    return forward(mlp, scaled);
}

double mse_loss(const Mlp& mlp, const std::vector<std::vector<double>>& inputs,
                const std::vector<std::vector<double>>& targets) {
    if (inputs.empty() || inputs.size() != targets.size())
        throw std::invalid_argument("mse_loss needs matching non-empty inputs and targets");
    double sum = 0.0;
    for (std::size_t r = 0; r < inputs.size(); ++r) {
        const auto y = forward(mlp, inputs[r]);
        for (std::size_t o = 0; o < y.size(); ++o) {
            const double e = y[o] - targets[r][o];
            sum += e * e;
        }
    }
    return sum / (static_cast<double>(inputs.size()) * static_cast<double>(mlp.output_dim()));
}

double mse_loss_and_gradients(const Mlp& mlp, const std::vector<std::vector<double>>& inputs,
                              const std::vector<std::vector<double>>& targets,
                              std::vector<double>& gradients) {
    if (inputs.empty() || inputs.size() != targets.size())
        throw std::invalid_argument("mse needs matching non-empty inputs and targets");
    gradients.assign(mlp.parameter_count(), 0.0);
    const double denom =
        static_cast<double>(inputs.size()) * static_cast<double>(mlp.output_dim());
    double sum = 0.0;
    ForwardTrace tr;
    for (std::size_t r = 0; r < inputs.size(); ++r) {
        forward_trace(mlp, inputs[r], tr);
        const auto& y = tr.act.back();
        std::vector<double> delta(y.size());
        for (std::size_t o = 0; o < y.size(); ++o) {
            const double e = y[o] - targets[r][o];
            sum += e * e;
            delta[o] = 2.0 * e / denom;
        }
        backward(mlp, tr, std::move(delta), &gradients, nullptr);
    }
    return sum / denom;
}

std::vector<double> flatten_parameters(const Mlp& mlp) {
    std::vector<double> out;
    out.reserve(mlp.parameter_count());
    for (const auto& w : mlp.weights) out.insert(out.end(), w.begin(), w.end());
    for (const auto& b : mlp.biases) out.insert(out.end(), b.begin(), b.end());
    return out;
}

void set_parameters(Mlp& mlp, const std::vector<double>& params) {
    if (params.size() != mlp.parameter_count())
        throw std::invalid_argument("parameter vector size mismatch");
    std::size_t off = 0;
    for (auto& w : mlp.weights) {
        std::copy(params.begin() + static_cast<std::ptrdiff_t>(off),
                  params.begin() + static_cast<std::ptrdiff_t>(off + w.size()), w.begin());
        off += w.size();
    }
    for (auto& b : mlp.biases) {
        std::copy(params.begin() + static_cast<std::ptrdiff_t>(off),
                  params.begin() + static_cast<std::ptrdiff_t>(off + b.size()), b.begin());
        off += b.size();
    }
}

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw std::invalid_argument("learning rate must be > 0");
    if (patience < 1) throw std::invalid_argument("patience must be >= 1");
    if (batch_size < 1 || max_epochs < 1)
        throw std::invalid_argument("batch size and epoch count must be >= 1");
    if (validation_fraction < 0.0 || validation_fraction >= 1.0)
        throw std::invalid_argument("validation fraction must lie in [0, 1)");
}

Mlp train_mlp(const NNDataset& data, const std::vector<std::size_t>& hidden_widths,
              const TrainConfig& cfg, TrainSummary* summary) {
    cfg.validate();
    if (data.rows() == 0) throw std::invalid_argument("cannot train on an empty dataset");

    auto [scaled_inputs, scaling] = minmax_scale(data.inputs);
    std::vector<std::size_t> widths;
    widths.push_back(data.inputs.front().size());
    widths.insert(widths.end(), hidden_widths.begin(), hidden_widths.end());
    widths.push_back(data.labels.front().size());

    Mlp mlp = make_mlp(widths, derive_seed(cfg.seed, {0}));
    mlp.input_scaling = scaling;

    // Deterministic shuffle for the train/validation split.
    std::vector<std::size_t> order(data.rows());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    {
        Rng rng = derive_stream(cfg.seed, {1});
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.below(i)]);
    }
    std::size_t n_val = 0;
    if (cfg.early_stopping)
        n_val = static_cast<std::size_t>(std::llround(cfg.validation_fraction *
                                                      static_cast<double>(data.rows())));
    if (n_val >= data.rows()) n_val = data.rows() - 1;
    std::vector<std::size_t> train_idx(order.begin(),
                                       order.end() - static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> val_idx(order.end() - static_cast<std::ptrdiff_t>(n_val),
                                     order.end());

    const auto gather = [&](const std::vector<std::size_t>& idx,
                            std::vector<std::vector<double>>& in,
                            std::vector<std::vector<double>>& tg) {
        in.clear();
        tg.clear();
        for (std::size_t r : idx) {
            in.push_back(scaled_inputs[r]);
            tg.push_back(data.labels[r]);
        }
    };
    std::vector<std::vector<double>> train_in, train_tg, val_in, val_tg;
    gather(train_idx, train_in, train_tg);
    gather(val_idx, val_in, val_tg);

    // Adam state (beta1 0.9, beta2 0.999, eps 1e-8).
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<double> params = flatten_parameters(mlp);
    std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0), grads;
    std::size_t adam_t = 0;

    double best_metric = std::numeric_limits<double>::infinity();
    std::vector<double> best_params = params;
    std::size_t bad_epochs = 0, epochs_run = 0;
    double last_train_loss = 0.0;

    std::vector<std::size_t> batch_order(train_idx.size());
    for (std::size_t i = 0; i < batch_order.size(); ++i) batch_order[i] = i;
    std::vector<std::vector<double>> batch_in, batch_tg;

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        Rng rng = derive_stream(cfg.seed, {2, epoch});
        for (std::size_t i = batch_order.size(); i > 1; --i)
            std::swap(batch_order[i - 1], batch_order[rng.below(i)]);

        for (std::size_t start = 0; start < batch_order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, batch_order.size());
            batch_in.clear();
            batch_tg.clear();
            for (std::size_t i = start; i < stop; ++i) {
                batch_in.push_back(train_in[batch_order[i]]);
                batch_tg.push_back(train_tg[batch_order[i]]);
            }
            mse_loss_and_gradients(mlp, batch_in, batch_tg, grads);
            ++adam_t;
            const double corr1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t));
            const double corr2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t));
            for (std::size_t i = 0; i < params.size(); ++i) {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
                params[i] -= cfg.learning_rate * (m[i] / corr1) / (std::sqrt(v[i] / corr2) + eps);
            }
            set_parameters(mlp, params);
        }

        last_train_loss = mse_loss(mlp, train_in, train_tg);
        const double monitored = (cfg.early_stopping && !val_in.empty())
                                     ? mse_loss(mlp, val_in, val_tg)
                                     : last_train_loss;
        if (!std::isfinite(monitored))
            throw std::runtime_error("training diverged: loss is not finite at epoch " +
                                     std::to_string(epoch) + " (lr=" +
                                     format_double(cfg.learning_rate) + ")");
        epochs_run = epoch + 1;
        if (monitored < best_metric) {
            best_metric = monitored;
            best_params = params;
            bad_epochs = 0;
        } else if (++bad_epochs >= cfg.patience && cfg.early_stopping) {
            break;
        }
    }

    set_parameters(mlp, best_params);
    mlp.training_note = "adam lr=" + format_double(cfg.learning_rate) +
                        " epochs=" + std::to_string(epochs_run) +
                        (cfg.early_stopping ? " early-stopped" : " fixed-epochs");
    if (summary) {
        summary->epochs_run = epochs_run;
        summary->best_loss = best_metric;
        summary->final_train_loss = last_train_loss;
    }
    return mlp;
}

// ---------------------------------------------------------------------------
// Reachability specs and attacks
// ---------------------------------------------------------------------------

HalfSpace output_at_least(std::size_t dim, double c, std::size_t output_dim) {
    HalfSpace h;
    h.normal.assign(output_dim, 0.0);
    h.normal[dim] = -1.0;
    h.offset = -c;
    return h;
}

HalfSpace output_at_most(std::size_t dim, double c, std::size_t output_dim) {
    HalfSpace h;
    h.normal.assign(output_dim, 0.0);
    h.normal[dim] = 1.0;
    h.offset = c;
    return h;
}

void ReachabilitySpec::validate(std::size_t input_dim, std::size_t output_dim) const {
    input_box.validate();
    if (input_box.dim() != input_dim)
        throw std::invalid_argument("reachability input box has dimension " +
                                    std::to_string(input_box.dim()) + ", expected " +
                                    std::to_string(input_dim));
    if (unsafe.empty()) throw std::invalid_argument("unsafe set must have at least one constraint");
    for (const auto& h : unsafe)
        if (h.normal.size() != output_dim)
            throw std::invalid_argument("unsafe half-space dimension mismatch");
}

namespace {

double hinge_loss_from_output(const ReachabilitySpec& spec, const std::vector<double>& y,
                              std::vector<double>* dldy) {
    if (dldy) dldy->assign(y.size(), 0.0);
    double loss = 0.0;
    for (const auto& h : spec.unsafe) {
        double margin = -h.offset;
        for (std::size_t i = 0; i < y.size(); ++i) margin += h.normal[i] * y[i];
        if (margin > 0.0) {
            loss += margin;
            if (dldy)
                for (std::size_t i = 0; i < y.size(); ++i) (*dldy)[i] += h.normal[i];
        }
    }
    return loss;
}

double hinge_loss_and_input_grad(const Mlp& mlp, const ReachabilitySpec& spec,
                                 const std::vector<double>& x_scaled,
                                 std::vector<double>* input_grad) {
    ForwardTrace tr;
    forward_trace(mlp, x_scaled, tr);
    std::vector<double> dldy;
    const double loss = hinge_loss_from_output(spec, tr.act.back(), input_grad ? &dldy : nullptr);
    if (input_grad) {
        if (loss > 0.0) backward(mlp, tr, std::move(dldy), nullptr, input_grad);
        else input_grad->assign(x_scaled.size(), 0.0);
    }
    return loss;
}

Box scaled_input_box(const Mlp& mlp, const ReachabilitySpec& spec) {
    Box b = spec.input_box;
    if (mlp.input_scaling)
        for (std::size_t i = 0; i < b.dim(); ++i) {
            b.lows[i] = mlp.input_scaling->scale(i, b.lows[i]);
            b.highs[i] = mlp.input_scaling->scale(i, b.highs[i]);
        }
    return b;
}

std::vector<double> unscale_candidate(const Mlp& mlp, const std::vector<double>& x_scaled) {
    if (!mlp.input_scaling) return x_scaled;
    std::vector<double> raw(x_scaled.size());
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = mlp.input_scaling->unscale(i, x_scaled[i]);
    return raw;
}

std::vector<double> sample_box(const Box& b, Rng& rng) {
    std::vector<double> x(b.dim());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(b.lows[i], b.highs[i]);
    return x;
}

constexpr int kBallResampleCap = 64;

} // namespace

double unsafe_loss(const Mlp& mlp, const ReachabilitySpec& spec,
                   const std::vector<double>& x_scaled) {
    return hinge_loss_and_input_grad(mlp, spec, x_scaled, nullptr);
}

bool SpuriousSet::contains_scaled(const std::vector<double>& x_scaled) const {
    for (const auto& e : entries) {
        double dist = 0.0;
        for (std::size_t i = 0; i < x_scaled.size(); ++i)
            dist = std::max(dist, std::fabs(x_scaled[i] - e.center_scaled[i]));
        if (dist <= e.radius) return true;
    }
    return false;
}

SpuriousSet exclude_spurious(SpuriousSet psi, const Mlp& mlp,
                             const std::vector<double>& candidate_raw, double delta) {
    if (delta < 0.0) throw std::invalid_argument("exclusion radius must be >= 0");
    SpuriousSet::Entry e;
    e.radius = delta;
    e.center_scaled.resize(candidate_raw.size());
    for (std::size_t i = 0; i < candidate_raw.size(); ++i)
        e.center_scaled[i] =
            mlp.input_scaling ? mlp.input_scaling->scale(i, candidate_raw[i]) : candidate_raw[i];
    psi.entries.push_back(std::move(e));
    return psi;
}

AttackResult pgd_attack(const Mlp& mlp, const ReachabilitySpec& spec, const SpuriousSet& psi,
                        std::size_t iterations, double step, std::size_t restarts,
                        std::uint64_t seed, int jobs) {
    spec.validate(mlp.input_dim(), mlp.output_dim());
    if (iterations < 1 || restarts < 1)
        throw std::invalid_argument("pgd needs iterations >= 1 and restarts >= 1");
    const Box box = scaled_input_box(mlp, spec);

    const auto attempts = batch::parallel_map<AttackResult>(restarts, jobs, [&](std::size_t r) {
        Rng rng = derive_stream(seed, {r});
        std::vector<double> x = sample_box(box, rng);
        std::vector<double> grad;
        AttackResult res;
        for (std::size_t it = 0; it < iterations; ++it) {
            int resamples = 0;
            while (psi.contains_scaled(x)) {
                if (++resamples > kBallResampleCap) return res;
                x = sample_box(box, rng);
            }
            const double loss = hinge_loss_and_input_grad(mlp, spec, x, &grad);
            if (loss == 0.0) {
                res.found = true;
                res.candidate_raw = unscale_candidate(mlp, x);
                res.iterations = it;
                res.restart = r;
                return res;
            }
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double dir = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
                x[i] = std::clamp(x[i] - step * dir, box.lows[i], box.highs[i]);
            }
        }
        return res;
    });
    for (const auto& a : attempts)
        if (a.found) return a;
    return {};
}

AttackResult fgsm_attack(const Mlp& mlp, const ReachabilitySpec& spec, const SpuriousSet& psi,
                         double epsilon, std::uint64_t seed) {
    spec.validate(mlp.input_dim(), mlp.output_dim());
    const Box box = scaled_input_box(mlp, spec);
    Rng rng = derive_stream(seed, {0});
    std::vector<double> x = sample_box(box, rng);
    int resamples = 0;
    while (psi.contains_scaled(x)) {
        if (++resamples > kBallResampleCap) return {};
        x = sample_box(box, rng);
    }
    std::vector<double> grad;
    hinge_loss_and_input_grad(mlp, spec, x, &grad);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dir = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
        x[i] = std::clamp(x[i] - epsilon * dir, box.lows[i], box.highs[i]);
    }
    if (unsafe_loss(mlp, spec, x) == 0.0 && !psi.contains_scaled(x)) {
        AttackResult res;
        res.found = true;
        res.candidate_raw = unscale_candidate(mlp, x);
        res.iterations = 1;
        return res;
    }
    return {};
}

// ---------------------------------------------------------------------------
// Validation and the refinement loop
// ---------------------------------------------------------------------------

ValidationResult validate(const System& sys, const std::vector<double>& candidate_raw,
                          const ValidationTarget& target, std::size_t segments, double horizon,
                          double dt) {
    const std::size_t n0 = sys.state_dim();
    const std::size_t m = sys.input_dim();
    if (candidate_raw.size() != n0 + segments * m + 1)
        throw std::invalid_argument("candidate must be a flattened (x0, u, t) vector");

    std::vector<double> point_feats(candidate_raw.begin(), candidate_raw.end() - 1);
    const SearchPoint point = unflatten(point_feats, n0, segments, m, horizon);
    const double t_raw = candidate_raw.back();
    const auto steps = static_cast<long long>(std::llround(horizon / dt));
    const long long t_idx =
        std::clamp(static_cast<long long>(std::llround(t_raw / dt)), 0LL, steps);

    ValidationResult out;
    try {
        out.trajectory = sys.simulate(point.x0, point.u, horizon, dt);
    } catch (const SimulationError& e) {
        out.real = false;
        out.note = std::string("simulation failed: ") + e.what();
        return out;
    }

    if (target.formula) {
        out.robustness = stl::robustness(*target.formula, out.trajectory).value;
        out.real = out.robustness < 0.0;
        return out;
    }
    if (target.unsafe.empty())
        throw std::invalid_argument("validation target needs a formula or an unsafe set");

    const auto depth_at = [&](std::size_t j) {
        double depth = std::numeric_limits<double>::infinity();
        for (const auto& h : target.unsafe) {
            double margin = h.offset;
            for (std::size_t i = 0; i < h.normal.size(); ++i)
                margin -= h.normal[i] * out.trajectory.states[j][i];
            depth = std::min(depth, margin);
        }
        return depth;
    };
    double depth;
    if (target.any_sample) {
        depth = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < out.trajectory.samples(); ++j)
            depth = std::max(depth, depth_at(j));
    } else {
        depth = depth_at(static_cast<std::size_t>(t_idx));
    }
    out.robustness = -depth;
    out.real = depth > 0.0;
    return out;
}

NnfalReport nnfal_run(const System& sys, const Mlp& surrogate, const ReachabilitySpec& spec,
                      const ValidationTarget& target, const NnfalBudget& budget,
                      std::size_t segments, double horizon, double dt,
                      const Validator& validator) {
    const auto t_start = std::chrono::steady_clock::now();
    const auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    };
    const Validator check = validator ? validator : [&](const std::vector<double>& cand) {
        return validate(sys, cand, target, segments, horizon, dt);
    };

    NnfalReport report;
    SpuriousSet psi;
    for (std::size_t call = 0; call < budget.max_attacks; ++call) {
        if (elapsed() >= budget.timeout_secs) break;
        const std::uint64_t attack_seed = derive_seed(budget.seed, {call});
        const AttackResult attack =
            budget.attack == AttackKind::Pgd
                ? pgd_attack(surrogate, spec, psi, budget.pgd_iterations, budget.pgd_step,
                             budget.pgd_restarts, attack_seed, budget.jobs)
                : fgsm_attack(surrogate, spec, psi, budget.fgsm_epsilon, attack_seed);
        report.attack_calls = call + 1;

        AttackEvent event;
        event.call = call;
        event.candidate_found = attack.found;
        if (!attack.found) {
            report.events.push_back(std::move(event));
            continue;
        }
        event.candidate_raw = attack.candidate_raw;

        const ValidationResult verdict = check(attack.candidate_raw);
        event.real = verdict.real;
        report.events.push_back(std::move(event));

        if (verdict.real) {
            Counterexample ce;
            std::vector<double> feats(attack.candidate_raw.begin(),
                                      attack.candidate_raw.end() - 1);
            ce.point = unflatten(feats, sys.state_dim(), segments, sys.input_dim(), horizon);
            ce.trajectory = verdict.trajectory;
            ce.robustness = verdict.robustness;
            report.counterexample = std::move(ce);
            report.falsified = true;
            break;
        }
        psi = exclude_spurious(psi, surrogate, attack.candidate_raw, budget.exclusion_radius);
        ++report.refinements;
    }
    report.excluded = std::move(psi);
    report.wall_time_secs = elapsed();
    return report;
}

std::size_t falsification_rate(const std::function<bool(std::size_t)>& task, std::size_t runs) {
    std::size_t successes = 0;
    for (std::size_t i = 0; i < runs; ++i)
        if (task(i)) ++successes;
    return successes;
}

// ---------------------------------------------------------------------------
// Model persistence
// ---------------------------------------------------------------------------

void save_model(const Mlp& mlp, const std::string& path) {
    nlohmann::json header;
    header["widths"] = mlp.widths;
    header["seed"] = mlp.seed;
    header["training_note"] = mlp.training_note;
    if (mlp.input_scaling)
        header["scaling"] = {{"mins", mlp.input_scaling->mins},
                             {"maxs", mlp.input_scaling->maxs}};
    else
        header["scaling"] = nullptr;
    const auto params = flatten_parameters(mlp);
    header["blob_doubles"] = params.size();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write model file '" + path + "'");
    out << header.dump() << '\n';
    out.write(reinterpret_cast<const char*>(params.data()),
              static_cast<std::streamsize>(params.size() * sizeof(double)));
    if (!out) throw std::runtime_error("failed writing model blob to '" + path + "'");
}

Mlp load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file '" + path + "'");
    std::string header_line;
    if (!std::getline(in, header_line)) throw std::runtime_error("model file has no header");
    const auto header = nlohmann::json::parse(header_line);

    Mlp mlp;
    mlp.widths = header.at("widths").get<std::vector<std::size_t>>();
    mlp.seed = header.value("seed", std::uint64_t{0});
    mlp.training_note = header.value("training_note", "");
    for (std::size_t l = 0; l + 1 < mlp.widths.size(); ++l) {
        mlp.weights.emplace_back(mlp.widths[l + 1] * mlp.widths[l], 0.0);
        mlp.biases.emplace_back(mlp.widths[l + 1], 0.0);
    }
    if (!header.at("scaling").is_null()) {
        ScalingParams sp;
        sp.mins = header.at("scaling").at("mins").get<std::vector<double>>();
        sp.maxs = header.at("scaling").at("maxs").get<std::vector<double>>();
        mlp.input_scaling = std::move(sp);
    }
    const auto blob_doubles = header.at("blob_doubles").get<std::size_t>();
    if (blob_doubles != mlp.parameter_count())
        throw std::runtime_error("model blob length does not match the declared widths");
    std::vector<double> params(blob_doubles);
    in.read(reinterpret_cast<char*>(params.data()),
            static_cast<std::streamsize>(blob_doubles * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != blob_doubles * sizeof(double))
        throw std::runtime_error("model blob is truncated");
    set_parameters(mlp, params);
    return mlp;
}

std::string report_to_json(const NnfalReport& report, const NnfalBudget& budget,
                           const std::string& system_name, bool include_timing) {
    nlohmann::json j;
    j["tool"] = "flexifal";
    j["strategy"] = "nnfal";
    j["falsified"] = report.falsified;
    j["config"] = {
        {"system", system_name},
        {"max_attacks", budget.max_attacks},
        {"seed", budget.seed},
        {"exclusion_radius", budget.exclusion_radius},
        {"attack", budget.attack == AttackKind::Pgd ? "pgd" : "fgsm"},
    };
    j["attack_calls"] = report.attack_calls;
    j["refinements"] = report.refinements;
    j["excluded_points"] = report.excluded.size();
    if (report.counterexample) {
        j["counterexample"] = {{"features", flatten(report.counterexample->point)},
                               {"robustness", report.counterexample->robustness}};
    }
    auto events = nlohmann::json::array();
    for (const auto& e : report.events) {
        nlohmann::json ev{{"call", e.call}, {"candidate_found", e.candidate_found}};
        if (e.candidate_found) {
            ev["real"] = e.real;
            ev["candidate"] = e.candidate_raw;
        }
        events.push_back(std::move(ev));
    }
    j["events"] = std::move(events);
    if (include_timing) j["wall_time_secs"] = report.wall_time_secs;
    return j.dump(2);
}

} // namespace flexifal::nnfal
