#ifndef PLASTIC_STRATEGIES_HPP
#define PLASTIC_STRATEGIES_HPP

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "plastic/checkpoint.hpp"
#include "plastic/model.hpp"

namespace plastic {

/// The four ways a target model's initial parameters (and loss augmentation)
/// are constructed from a prior model and a fresh initialisation:
///   RESET      start from scratch, ignore the prior
///   RESET_PRF  start from scratch, pull conv filters towards the prior's
///   REUSE_ALL  copy the whole prior except the output layer
///   REUSE_CF   copy only the convolutional kernels
enum class Strategy { Reset, ResetPrf, ReuseAll, ReuseCf };

inline const char* to_string(Strategy s) {
    switch (s) {
        case Strategy::Reset: return "RESET";
        case Strategy::ResetPrf: return "RESET_PRF";
        case Strategy::ReuseAll: return "REUSE_ALL";
        case Strategy::ReuseCf: return "REUSE_CF";
    }
    return "?";
}

inline Strategy strategy_from_string(const std::string& s) {
    if (s == "RESET") return Strategy::Reset;
    if (s == "RESET_PRF") return Strategy::ResetPrf;
    if (s == "REUSE_ALL") return Strategy::ReuseAll;
    if (s == "REUSE_CF") return Strategy::ReuseCf;
    throw ConfigError("unknown strategy '" + s + "'");
}

struct AdaptationStrategy {
    Strategy kind = Strategy::Reset;
    double prf_lambda = 0.0;          // RESET_PRF pull strength
    std::optional<Task> prior_task;   // tag of the prior model; absent for RESET

    bool needs_prior() const { return kind != Strategy::Reset; }
};

/// Immutable copy of a prior model's convolutional kernels, addressed by
/// encoder layer id.
struct PriorSnapshot {
    std::vector<std::pair<int, Tensor>> filters;
};

/// Pulls the convolutional kernel tensors out of a prior checkpoint.
inline PriorSnapshot extract_prior_filters(const Checkpoint& prior) {
    PriorSnapshot snap;
    for (const ParamSet::Entry& e : prior.params.entries())
        if (e.name == "kernels") snap.filters.emplace_back(e.layer, e.value);
    if (snap.filters.empty())
        throw TransferError("prior checkpoint contains no convolutional layers");
    return snap;
}

struct PreparedTarget {
    ParamSet params;
    std::optional<PriorRegBinding> loss_augment;
};

namespace detail {

/// Restructures the prior's spec towards the target task per the mirroring
/// rules, so its parameter addresses line up with the target's.
inline NetworkSpec convert_prior_spec(const NetworkSpec& prior, const NetworkSpec& target) {
    auto classifier_part = [&](const NetworkSpec& mt) {
        NetworkShapes shapes = validate_spec(mt);
        NetworkSpec cl;
        cl.input_shape = mt.input_shape;
        cl.task = Task::CL;
        cl.num_classes = mt.num_classes;
        cl.reg = mt.reg;
        cl.layers.assign(mt.layers.begin(), mt.layers.begin() + shapes.head_index + 1);
        return cl;
    };
    const bool target_classifies = target.task != Task::AE;
    if (target_classifies) {
        switch (prior.task) {
            case Task::CL: return prior;
            case Task::AE: return build_cnn_from_cae(prior, target.num_classes);
            case Task::MT: return classifier_part(prior);
        }
    } else {
        switch (prior.task) {
            case Task::AE: return prior;
            case Task::CL: return build_cae_from_cnn(prior);
            case Task::MT: return build_cae_from_cnn(classifier_part(prior));
        }
    }
    throw UsageError("unreachable prior conversion");
}

/// Conv layer ids of a spec, in order.
inline std::vector<int> conv_layers(const NetworkSpec& spec) {
    std::vector<int> out;
    for (std::size_t l = 0; l < spec.layers.size(); ++l)
        if (std::holds_alternative<ConvSpec>(spec.layers[l])) out.push_back(static_cast<int>(l));
    return out;
}

/// Maps the prior's kernel tensors onto the target's conv layer ids,
/// matching by position in the conv sequence and checking shapes.
inline std::vector<std::pair<int, Tensor>> align_filters(const PriorSnapshot& snap,
                                                         const NetworkSpec& target_spec,
                                                         const ParamSet& target_params) {
    const std::vector<int> targets = conv_layers(target_spec);
    if (targets.size() != snap.filters.size())
        throw TransferError("prior has " + std::to_string(snap.filters.size()) +
                            " convolutional layers, target has " + std::to_string(targets.size()));
    std::vector<std::pair<int, Tensor>> aligned;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const Tensor& prior_k = snap.filters[i].second;
        const Tensor& target_k = target_params.at(targets[i], "kernels");
        if (prior_k.shape() != target_k.shape())
            throw TransferError("layer " + std::to_string(targets[i]) + ": prior kernels " +
                                Tensor::shape_str(prior_k.shape()) + " do not fit target " +
                                Tensor::shape_str(target_k.shape()));
        aligned.emplace_back(targets[i], prior_k);
    }
    return aligned;
}

}  // namespace detail

/// Builds the target model's starting parameters from one shared fresh
/// initialisation (the same (spec, seed) across all strategies in a run) and
/// the prior checkpoint, per the selected strategy. RESET_PRF additionally
/// returns a prior-regulariser binding for the training loss.
inline PreparedTarget prepare_target(const AdaptationStrategy& strategy, const Checkpoint* prior,
                                     const NetworkSpec& target_spec, std::uint64_t seed) {
    if (strategy.needs_prior() && prior == nullptr)
        throw ConfigError(std::string(to_string(strategy.kind)) + " requires a prior checkpoint");

    PreparedTarget out{init_params(target_spec, seed), std::nullopt};

    switch (strategy.kind) {
        case Strategy::Reset:
            break;

        case Strategy::ResetPrf: {
            if (strategy.prf_lambda < 0.0)
                throw ConfigError("RESET_PRF pull strength must be >= 0");
            PriorSnapshot snap = extract_prior_filters(*prior);
            PriorRegBinding binding;
            binding.lambda = strategy.prf_lambda;
            binding.filters = detail::align_filters(snap, target_spec, out.params);
            out.loss_augment = std::move(binding);
            break;
        }

        case Strategy::ReuseCf: {
            PriorSnapshot snap = extract_prior_filters(*prior);
            for (auto& [layer, kernels] : detail::align_filters(snap, target_spec, out.params))
                out.params.at(layer, "kernels") = kernels;
            break;
        }

        case Strategy::ReuseAll: {
            const NetworkSpec converted = detail::convert_prior_spec(prior->spec, target_spec);
            const NetworkShapes target_shapes = validate_spec(target_spec);
            // After conversion the prior's stack must mirror the target's
            // layer for layer (the output layer itself is replaced anyway).
            if (converted.layers.size() != target_spec.layers.size())
                throw TransferError("prior provides " + std::to_string(converted.layers.size()) +
                                    " layers after conversion, target expects " +
                                    std::to_string(target_spec.layers.size()));
            for (std::size_t l = 0; l < target_spec.layers.size(); ++l)
                if (std::string(layer_kind_name(converted.layers[l])) !=
                    layer_kind_name(target_spec.layers[l]))
                    throw TransferError("layer " + std::to_string(l) + ": prior provides " +
                                        layer_kind_name(converted.layers[l]) + ", target expects " +
                                        layer_kind_name(target_spec.layers[l]));
            // Copy every prior parameter whose address exists in the target,
            // except the output layer, which keeps its fresh initialisation.
            // Conversion never invents decoder parameters; they stay tied.
            for (ParamSet::Entry& e : out.params.entries()) {
                if (e.layer == target_shapes.head_index) continue;
                if (!prior->params.has(e.layer, e.name))
                    throw TransferError("layer " + std::to_string(e.layer) +
                                        ": prior model has no '" + e.name + "' to reuse");
                const Tensor& src = prior->params.at(e.layer, e.name);
                if (src.shape() != e.value.shape())
                    throw TransferError("layer " + std::to_string(e.layer) + ": prior " + e.name +
                                        " " + Tensor::shape_str(src.shape()) + " do not fit target " +
                                        Tensor::shape_str(e.value.shape()));
                e.value = src;
            }
            break;
        }
    }
    return out;
}

}  // namespace plastic

#endif  // PLASTIC_STRATEGIES_HPP
