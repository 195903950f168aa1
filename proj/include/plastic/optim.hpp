#ifndef PLASTIC_OPTIM_HPP
#define PLASTIC_OPTIM_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "plastic/model.hpp"
#include "plastic/rng.hpp"

namespace plastic {

struct OptimHyper {
    double learning_rate = 1e-5;
    double rms_decay = 0.9;
    double momentum = 0.5;
    double epsilon = 1e-8;
    std::size_t batch_size = 50;
};

/// RMSProp accumulator plus Nesterov velocity, shape-congruent with the
/// parameters they drive.
class OptimState {
public:
    OptimState(const ParamSet& theta, OptimHyper hyper)
        : hyper_(hyper),
          mean_square_(ParamSet::zeros_like(theta)),
          velocity_(ParamSet::zeros_like(theta)) {}

    const OptimHyper& hyper() const { return hyper_; }
    const ParamSet& mean_square() const { return mean_square_; }
    const ParamSet& velocity() const { return velocity_; }

    friend void rmsprop_nesterov_step(OptimState&, ParamSet&, const ParamSet&);

private:
    OptimHyper hyper_;
    ParamSet mean_square_;
    ParamSet velocity_;
};

/// One update: the gradient is RMS-normalised first, then Nesterov momentum
/// is applied to the scaled step (look-ahead form):
///   ms <- rho*ms + (1-rho)*g^2
///   scaled <- g / sqrt(ms + eps)
///   v <- mu*v - eta*scaled
///   theta <- theta + mu*v - eta*scaled
inline void rmsprop_nesterov_step(OptimState& state, ParamSet& theta, const ParamSet& grad) {
    if (!theta.congruent_with(grad) || !theta.congruent_with(state.mean_square_))
        throw UsageError("rmsprop_nesterov_step: state/theta/grad are not shape-congruent");
    const OptimHyper& h = state.hyper_;
    for (std::size_t e = 0; e < theta.entries().size(); ++e) {
        Tensor& t = theta.entries()[e].value;
        const Tensor& g = grad.entries()[e].value;
        Tensor& ms = state.mean_square_.entries()[e].value;
        Tensor& v = state.velocity_.entries()[e].value;
        for (std::size_t i = 0; i < t.size(); ++i) {
            ms[i] = h.rms_decay * ms[i] + (1.0 - h.rms_decay) * g[i] * g[i];
            const double scaled = g[i] / std::sqrt(ms[i] + h.epsilon);
            v[i] = h.momentum * v[i] - h.learning_rate * scaled;
            t[i] += h.momentum * v[i] - h.learning_rate * scaled;
        }
    }
}

struct EpochMetrics {
    double train_loss = 0.0;  // item-weighted mean of the optimised objective
    std::size_t steps = 0;
};

/// One pass over the training set: shuffle with the epoch-seeded rng,
/// iterate mini-batches (the final short batch is kept), and step after each
/// batch. Aborts with a layer-naming diagnostic if a gradient goes
/// non-finite.
inline EpochMetrics run_epoch(const NetworkSpec& spec, const NetworkShapes& shapes, ParamSet& theta,
                              OptimState& state, const std::vector<Tensor>& items,
                              const std::vector<int>& labels, Rng& rng,
                              const PriorRegBinding* prior = nullptr) {
    if (items.empty()) throw ConfigError("run_epoch: empty training set");
    if (spec.task != Task::AE && labels.size() != items.size())
        throw ConfigError("run_epoch: item/label count mismatch");

    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    const std::size_t batch = state.hyper().batch_size;
    EpochMetrics metrics;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t end = std::min(order.size(), start + batch);
        std::vector<const Tensor*> bitems;
        std::vector<int> blabels;
        bitems.reserve(end - start);
        for (std::size_t i = start; i < end; ++i) {
            bitems.push_back(&items[order[i]]);
            if (spec.task != Task::AE) blabels.push_back(labels[order[i]]);
        }
        ParamSet grads = ParamSet::zeros_like(theta);
        BatchLoss loss =
            network_batch_loss(spec, shapes, theta, bitems, blabels, Mode::Train, rng, &grads, prior);
        for (const ParamSet::Entry& e : grads.entries())
            for (std::size_t i = 0; i < e.value.size(); ++i)
                if (!std::isfinite(e.value[i]))
                    throw TrainingError("non-finite gradient in layer " + std::to_string(e.layer) +
                                        " (" + e.name + "); training aborted");
        rmsprop_nesterov_step(state, theta, grads);
        loss_sum += loss.total * static_cast<double>(end - start);
        ++metrics.steps;
    }
    metrics.train_loss = loss_sum / static_cast<double>(items.size());
    return metrics;
}

// --------------------------------------------------------------------------
// Early stopping
// --------------------------------------------------------------------------

struct EarlyStopState {
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::size_t patience = 200;
    ParamSet best_params;
};

/// Records a validation observation for a 1-based epoch. An improvement of
/// at least 1e-9 below the best resets the patience window and snapshots the
/// parameters. Returns true when patience has expired (the caller also stops
/// at its epoch cap); the final model is the snapshot, not the last state.
inline bool early_stop_update(EarlyStopState& state, std::size_t epoch, double validation_loss,
                              const ParamSet& params) {
    if (validation_loss <= state.best_loss - 1e-9) {
        state.best_loss = validation_loss;
        state.best_epoch = epoch;
        state.best_params = params;
    }
    return epoch - state.best_epoch >= state.patience;
}

// --------------------------------------------------------------------------
// Training driver
// --------------------------------------------------------------------------

struct EpochReport {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double valid_loss = 0.0;  // task loss, eval mode
};

struct TrainResult {
    ParamSet best_params;
    double best_valid_loss = 0.0;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
};

/// Task loss on a held-out set, eval mode (dropout off).
inline double evaluate_task_loss(const NetworkSpec& spec, const NetworkShapes& shapes,
                                 const ParamSet& params, const std::vector<Tensor>& items,
                                 const std::vector<int>& labels) {
    std::vector<const Tensor*> ptrs;
    ptrs.reserve(items.size());
    for (const Tensor& t : items) ptrs.push_back(&t);
    Rng rng(0);  // eval consumes no randomness
    return network_batch_loss(spec, shapes, params, ptrs, labels, Mode::Eval, rng, nullptr).task;
}

/// Full training loop: per epoch, one run_epoch pass, one validation
/// evaluation, one early-stopping update, then the per-epoch hook (for
/// test-set curves). All randomness derives from `seed` through the
/// documented split scheme, so a (spec, data, seed) triple reproduces its
/// trajectory bit-exactly.
inline TrainResult train_model(
    const NetworkSpec& spec, ParamSet params, const std::vector<Tensor>& train_items,
    const std::vector<int>& train_labels, const std::vector<Tensor>& valid_items,
    const std::vector<int>& valid_labels, const OptimHyper& hyper, std::size_t max_epochs,
    std::size_t patience, std::uint64_t seed, const PriorRegBinding* prior = nullptr,
    const std::function<void(const EpochReport&, const ParamSet&)>& per_epoch_hook = {}) {
    if (valid_items.empty()) throw ConfigError("train_model: empty validation set");
    NetworkShapes shapes = validate_spec(spec);
    OptimState state(params, hyper);
    EarlyStopState stopper;
    stopper.patience = patience;

    TrainResult result;
    for (std::size_t epoch = 1; epoch <= max_epochs; ++epoch) {
        Rng epoch_rng(derive_seed(seed, "epoch", epoch));
        EpochMetrics em = run_epoch(spec, shapes, params, state, train_items, train_labels,
                                    epoch_rng, prior);
        const double valid_loss =
            evaluate_task_loss(spec, shapes, params, valid_items, valid_labels);
        const bool halt = early_stop_update(stopper, epoch, valid_loss, params);
        result.epochs_run = epoch;
        if (per_epoch_hook) per_epoch_hook({epoch, em.train_loss, valid_loss}, params);
        if (halt) break;
    }
    result.best_params = std::move(stopper.best_params);
    result.best_valid_loss = stopper.best_loss;
    result.best_epoch = stopper.best_epoch;
    return result;
}

}  // namespace plastic

#endif  // PLASTIC_OPTIM_HPP
