#ifndef PLASTIC_MODEL_HPP
#define PLASTIC_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "plastic/layers.hpp"
#include "plastic/losses.hpp"
#include "plastic/rng.hpp"
#include "plastic/tensor.hpp"

namespace plastic {

enum class Task { CL, AE, MT };

inline const char* to_string(Task t) {
    switch (t) {
        case Task::CL: return "CL";
        case Task::AE: return "AE";
        case Task::MT: return "MT";
    }
    return "?";
}

inline Task task_from_string(const std::string& s) {
    if (s == "CL") return Task::CL;
    if (s == "AE") return Task::AE;
    if (s == "MT") return Task::MT;
    throw ConfigError("unknown task '" + s + "'");
}

struct RegConfig {
    double l2_lambda = 0.0;
    double prior_lambda = 0.0;  // used only when a prior snapshot is bound
    double sparsity_coeff = 0.0;
    double sparsity_target = 0.0;
};

/// Declarative description of a layer stack, separated from its learnable
/// parameters. CL specs end in a softmax head over num_classes; AE specs
/// reproduce input_shape; MT specs share the encoder between a classifier
/// head and a mirrored decoder tail.
struct NetworkSpec {
    std::vector<std::size_t> input_shape;  // [C,H,W]
    std::vector<LayerSpec> layers;
    Task task = Task::CL;
    std::size_t num_classes = 0;  // CL/MT
    double alpha_mt = 0.0;        // MT
    RegConfig reg;
};

/// Build-time shape analysis of a spec: per-layer input/output extents plus
/// the structural landmarks other modules navigate by.
struct NetworkShapes {
    std::vector<std::vector<std::size_t>> in_shape, out_shape;
    int head_index = -1;     // classifier output layer (CL/MT)
    int first_decoder = -1;  // first tied decoder layer (AE/MT)
    int sparsity_layer = -1; // conv-stage exit where Hoyer sparseness is read
};

// --------------------------------------------------------------------------
// ParamSet
// --------------------------------------------------------------------------

/// Per-layer named parameter tensors, addressable by (layer id, name) with a
/// stable iteration order (spec order). Tied decoder layers own no storage.
class ParamSet {
public:
    struct Entry {
        int layer;
        std::string name;
        Tensor value;
    };

    void add(int layer, std::string name, Tensor value) {
        entries_.push_back({layer, std::move(name), std::move(value)});
    }

    bool has(int layer, std::string_view name) const { return find(layer, name) != nullptr; }

    const Tensor& at(int layer, std::string_view name) const {
        if (const Entry* e = find(layer, name)) return e->value;
        throw UsageError("no parameter (" + std::to_string(layer) + ", " + std::string(name) + ")");
    }

    Tensor& at(int layer, std::string_view name) {
        return const_cast<Tensor&>(std::as_const(*this).at(layer, name));
    }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    /// Same addresses and shapes, all values zero.
    static ParamSet zeros_like(const ParamSet& p) {
        ParamSet z;
        for (const Entry& e : p.entries_) z.add(e.layer, e.name, Tensor(e.value.shape(), 0.0));
        return z;
    }

    bool congruent_with(const ParamSet& o) const {
        if (entries_.size() != o.entries_.size()) return false;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const Entry& a = entries_[i];
            const Entry& b = o.entries_[i];
            if (a.layer != b.layer || a.name != b.name || a.value.shape() != b.value.shape())
                return false;
        }
        return true;
    }

private:
    const Entry* find(int layer, std::string_view name) const {
        for (const Entry& e : entries_)
            if (e.layer == layer && e.name == name) return &e;
        return nullptr;
    }

    std::vector<Entry> entries_;
};

/// Loss augmentation pulling convolutional kernels towards a prior model's
/// kernels: (lambda/2)*||prior - theta||^2 over the listed layer addresses.
struct PriorRegBinding {
    double lambda = 0.0;
    std::vector<std::pair<int, Tensor>> filters;  // (conv layer id, prior kernels)
};

// --------------------------------------------------------------------------
// Spec validation
// --------------------------------------------------------------------------

namespace detail {
inline std::size_t flat_count(const std::vector<std::size_t>& shape) {
    return Tensor::count(shape);
}
}  // namespace detail

/// Checks that consecutive layer shapes compose, tied references are sound,
/// softmax appears only as a classifier's final activation, and the task
/// contract (CL head size / AE reconstruction shape / MT fork) holds.
/// Returns the shape analysis used by forward/backward.
inline NetworkShapes validate_spec(const NetworkSpec& spec) {
    if (spec.input_shape.size() != 3)
        throw ConfigError("spec input_shape must be [C,H,W]");
    if (spec.layers.empty()) throw ConfigError("spec has no layers");
    if ((spec.task == Task::CL || spec.task == Task::MT) && spec.num_classes < 2)
        throw ConfigError("classifier specs need num_classes >= 2");
    if (spec.task == Task::MT && !(spec.alpha_mt >= 0.0 && spec.alpha_mt <= 1.0))
        throw ConfigError("multi-task weight must lie in [0,1]");

    NetworkShapes shapes;
    const std::size_t n = spec.layers.size();
    shapes.in_shape.resize(n);
    shapes.out_shape.resize(n);

    // Landmark positions.
    for (std::size_t l = 0; l < n; ++l) {
        const bool is_decoder = tied_layer_of(spec.layers[l]) >= 0;
        if (is_decoder && shapes.first_decoder < 0) shapes.first_decoder = static_cast<int>(l);
        if (!is_decoder && shapes.first_decoder >= 0)
            throw ConfigError("layer " + std::to_string(l) +
                              ": encoder layer after the decoder tail began");
    }
    if (spec.task == Task::CL) {
        if (shapes.first_decoder >= 0) throw ConfigError("CL spec must not contain decoder layers");
        shapes.head_index = static_cast<int>(n) - 1;
    } else if (spec.task == Task::MT) {
        if (shapes.first_decoder <= 0)
            throw ConfigError("MT spec needs a decoder tail after the classifier head");
        shapes.head_index = shapes.first_decoder - 1;
    }
    // Decoders may tie only to encoder layers (everything before the decoder
    // tail, excluding an MT spec's classifier head).
    const int enc_end =
        spec.task == Task::MT
            ? shapes.head_index
            : (shapes.first_decoder >= 0 ? shapes.first_decoder : static_cast<int>(n));

    // Conv-stage exit: end of the leading run of conv/pool layers.
    for (std::size_t l = 0; l < n; ++l) {
        if (std::holds_alternative<ConvSpec>(spec.layers[l]) ||
            std::holds_alternative<MaxPoolSpec>(spec.layers[l]))
            shapes.sparsity_layer = static_cast<int>(l);
        else
            break;
    }
    if (spec.reg.sparsity_coeff > 0.0 && shapes.sparsity_layer < 0)
        throw ConfigError("sparsity penalty requires a leading convolutional stage");

    std::vector<std::size_t> cur = spec.input_shape;
    for (std::size_t l = 0; l < n; ++l) {
        // The decoder chain of an MT spec starts from the code (the head's
        // input), not from the head's output.
        if (spec.task == Task::MT && static_cast<int>(l) == shapes.first_decoder)
            cur = shapes.in_shape[shapes.head_index];
        shapes.in_shape[l] = cur;
        const std::string where = "layer " + std::to_string(l) + " (" +
                                  layer_kind_name(spec.layers[l]) + ")";

        std::visit(
            [&](const auto& s) {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, ConvSpec>) {
                    if (cur.size() != 3)
                        throw ConfigError(where + ": needs a [C,H,W] input, got " +
                                          Tensor::shape_str(cur));
                    if (s.h1 == 0 || s.h2 == 0 || s.maps == 0)
                        throw ConfigError(where + ": zero extent");
                    if (s.h1 > cur[1] || s.h2 > cur[2])
                        throw ConfigError(where + ": kernel exceeds input extent");
                    if (s.act == Activation::Softmax)
                        throw ConfigError(where + ": softmax is reserved for the classifier head");
                    cur = {s.maps, cur[1] - s.h1 + 1, cur[2] - s.h2 + 1};
                } else if constexpr (std::is_same_v<T, MaxPoolSpec>) {
                    if (cur.size() != 3 || s.p1 == 0 || s.p2 == 0 || cur[1] % s.p1 || cur[2] % s.p2)
                        throw ConfigError(where + ": pool " + std::to_string(s.p1) + "x" +
                                          std::to_string(s.p2) + " does not divide " +
                                          Tensor::shape_str(cur));
                    cur = {cur[0], cur[1] / s.p1, cur[2] / s.p2};
                } else if constexpr (std::is_same_v<T, DenseSpec>) {
                    if (s.units == 0) throw ConfigError(where + ": zero units");
                    const bool is_head = static_cast<int>(l) == shapes.head_index;
                    if (s.act == Activation::Softmax && !is_head)
                        throw ConfigError(where + ": softmax is reserved for the classifier head");
                    if (is_head) {
                        if (s.act != Activation::Softmax)
                            throw ConfigError(where + ": classifier head must use softmax");
                        if (s.units != spec.num_classes)
                            throw ConfigError(where + ": head units " + std::to_string(s.units) +
                                              " != num_classes " + std::to_string(spec.num_classes));
                    }
                    cur = {s.units};
                } else if constexpr (std::is_same_v<T, DropoutSpec>) {
                    if (!(s.p >= 0.0 && s.p < 1.0))
                        throw ConfigError(where + ": dropout probability must lie in [0,1)");
                } else if constexpr (std::is_same_v<T, DenseDecodeSpec>) {
                    if (s.tied_to < 0 || s.tied_to >= enc_end ||
                        !std::holds_alternative<DenseSpec>(spec.layers[s.tied_to]))
                        throw ConfigError(where + ": must tie to an earlier dense encoder layer");
                    const auto& enc = std::get<DenseSpec>(spec.layers[s.tied_to]);
                    if (detail::flat_count(cur) != enc.units)
                        throw ConfigError(where + ": input size " +
                                          std::to_string(detail::flat_count(cur)) +
                                          " != tied unit count " + std::to_string(enc.units));
                    if (s.act == Activation::Softmax)
                        throw ConfigError(where + ": softmax is reserved for the classifier head");
                    cur = shapes.in_shape[s.tied_to];
                } else if constexpr (std::is_same_v<T, ConvDecodeSpec>) {
                    if (s.tied_to < 0 || s.tied_to >= enc_end ||
                        !std::holds_alternative<ConvSpec>(spec.layers[s.tied_to]))
                        throw ConfigError(where + ": must tie to an earlier conv encoder layer");
                    const auto& enc = std::get<ConvSpec>(spec.layers[s.tied_to]);
                    if (cur.size() != 3 || cur[0] != enc.maps)
                        throw ConfigError(where + ": input map axis must be " +
                                          std::to_string(enc.maps) + ", got " +
                                          Tensor::shape_str(cur));
                    if (s.act == Activation::Softmax)
                        throw ConfigError(where + ": softmax is reserved for the classifier head");
                    std::vector<std::size_t> restored = {shapes.in_shape[s.tied_to][0],
                                                         cur[1] + enc.h1 - 1, cur[2] + enc.h2 - 1};
                    if (restored != shapes.in_shape[s.tied_to])
                        throw ConfigError(where + ": restores " + Tensor::shape_str(restored) +
                                          " but tied layer consumed " +
                                          Tensor::shape_str(shapes.in_shape[s.tied_to]));
                    cur = restored;
                } else {  // UnpoolSpec
                    if (s.tied_to < 0 || s.tied_to >= enc_end ||
                        !std::holds_alternative<MaxPoolSpec>(spec.layers[s.tied_to]))
                        throw ConfigError(where + ": must tie to an earlier max-pool layer");
                    if (cur != shapes.out_shape[s.tied_to])
                        throw ConfigError(where + ": input " + Tensor::shape_str(cur) +
                                          " != tied pool output " +
                                          Tensor::shape_str(shapes.out_shape[s.tied_to]));
                    cur = shapes.in_shape[s.tied_to];
                }
            },
            spec.layers[l]);
        shapes.out_shape[l] = cur;
    }

    if (spec.task == Task::CL || spec.task == Task::MT) {
        const auto& head = spec.layers[shapes.head_index];
        if (!std::holds_alternative<DenseSpec>(head))
            throw ConfigError("classifier head must be a dense layer");
        // Head shape was checked in-loop; here only its existence matters.
    }
    if (spec.task == Task::AE || spec.task == Task::MT) {
        if (shapes.out_shape.back() != spec.input_shape)
            throw ConfigError("reconstruction shape " + Tensor::shape_str(shapes.out_shape.back()) +
                              " does not restore input shape " +
                              Tensor::shape_str(spec.input_shape));
    }
    return shapes;
}

// --------------------------------------------------------------------------
// Initialisation
// --------------------------------------------------------------------------

/// Uniform fan-balanced initialisation: weights from +-sqrt(6/(fan_in +
/// fan_out)), biases zero. The draw order is the spec order, so the same
/// (spec, seed) is bitwise reproducible and specs sharing an encoder prefix
/// share its initial values.
inline ParamSet init_params(const NetworkSpec& spec, std::uint64_t seed) {
    NetworkShapes shapes = validate_spec(spec);
    Rng rng(seed);
    ParamSet params;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        if (const auto* conv = std::get_if<ConvSpec>(&spec.layers[l])) {
            const std::size_t c = shapes.in_shape[l][0];
            const double fan_in = static_cast<double>(c * conv->h1 * conv->h2);
            const double fan_out = static_cast<double>(conv->maps * conv->h1 * conv->h2);
            const double bound = std::sqrt(6.0 / (fan_in + fan_out));
            Tensor k({conv->maps, c, conv->h1, conv->h2});
            for (std::size_t i = 0; i < k.size(); ++i) k[i] = rng.uniform(-bound, bound);
            params.add(static_cast<int>(l), "kernels", std::move(k));
            params.add(static_cast<int>(l), "bias", Tensor({conv->maps}, 0.0));
        } else if (const auto* dense = std::get_if<DenseSpec>(&spec.layers[l])) {
            const std::size_t fan_in = detail::flat_count(shapes.in_shape[l]);
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + dense->units));
            Tensor w({dense->units, fan_in});
            for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
            params.add(static_cast<int>(l), "weights", std::move(w));
            params.add(static_cast<int>(l), "bias", Tensor({dense->units}, 0.0));
        }
    }
    return params;
}

// --------------------------------------------------------------------------
// Forward / backward over the whole stack
// --------------------------------------------------------------------------

/// One item's pass through the network. Caches are populated in train mode
/// only; eval passes keep just the transient pool index maps the decoder
/// needs.
struct ItemForward {
    Tensor class_probs;     // CL/MT
    Tensor reconstruction;  // AE/MT
    Tensor sparsity_act;    // conv-stage exit activation, when tracked
    std::vector<ForwardCache> caches;
};

namespace detail {

inline LayerParams resolve_params(const NetworkSpec& spec, const ParamSet& params, std::size_t l) {
    LayerParams lp;
    if (std::holds_alternative<ConvSpec>(spec.layers[l])) {
        lp.weights = &params.at(static_cast<int>(l), "kernels");
        lp.bias = &params.at(static_cast<int>(l), "bias");
    } else if (std::holds_alternative<DenseSpec>(spec.layers[l])) {
        lp.weights = &params.at(static_cast<int>(l), "weights");
        lp.bias = &params.at(static_cast<int>(l), "bias");
    }
    return lp;
}

inline TiedContext resolve_tied(const NetworkSpec& spec, const NetworkShapes& shapes,
                                const ParamSet& params, const std::vector<ForwardCache>& caches,
                                std::size_t l) {
    TiedContext tied;
    const int t = tied_layer_of(spec.layers[l]);
    if (t < 0) return tied;
    tied.tied_input_shape = shapes.in_shape[t];
    if (std::holds_alternative<ConvSpec>(spec.layers[t]))
        tied.tied_weights = &params.at(t, "kernels");
    else if (std::holds_alternative<DenseSpec>(spec.layers[t]))
        tied.tied_weights = &params.at(t, "weights");
    else
        tied.pool_index = &caches[t].pool_index;
    return tied;
}

}  // namespace detail

/// Forward pass for one item. `track_sparsity` records the conv-stage exit
/// activation; `mode` Train fills caches for backward.
inline ItemForward forward_item(const NetworkSpec& spec, const NetworkShapes& shapes,
                                const ParamSet& params, const Tensor& input, Mode mode, Rng& rng,
                                bool track_sparsity = false) {
    if (input.shape() != spec.input_shape)
        throw DimensionError("forward: item shape " + Tensor::shape_str(input.shape()) +
                             " does not match spec input " + Tensor::shape_str(spec.input_shape));
    ItemForward fwd;
    fwd.caches.resize(spec.layers.size());
    Tensor cur = input;
    Tensor code;  // encoder output feeding both heads of an MT spec
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        if (spec.task == Task::MT && static_cast<int>(l) == shapes.first_decoder) cur = code;
        const LayerParams lp = detail::resolve_params(spec, params, l);
        const TiedContext tied = detail::resolve_tied(spec, shapes, params, fwd.caches, l);
        // Pool maps are needed by unpool even in eval mode.
        const bool want_cache =
            mode == Mode::Train || std::holds_alternative<MaxPoolSpec>(spec.layers[l]);
        Tensor out = layer_forward(spec.layers[l], lp, tied, cur, mode, rng,
                                   want_cache ? &fwd.caches[l] : nullptr);
        if (spec.task == Task::MT && static_cast<int>(l) == shapes.head_index) {
            code = std::move(cur);
            fwd.class_probs = out;
        }
        cur = std::move(out);
        if (track_sparsity && static_cast<int>(l) == shapes.sparsity_layer) fwd.sparsity_act = cur;
    }
    switch (spec.task) {
        case Task::CL: fwd.class_probs = std::move(cur); break;
        case Task::AE: fwd.reconstruction = std::move(cur); break;
        case Task::MT: fwd.reconstruction = std::move(cur); break;
    }
    return fwd;
}

/// Reverse pass for one item; accumulates parameter gradients into grad_acc
/// (tied decoder contributions land on the shared encoder addresses).
/// grad_probs/grad_recon/grad_sparsity seed the classifier head, the
/// reconstruction tail and the conv-stage exit respectively.
inline void backward_item(const NetworkSpec& spec, const NetworkShapes& shapes,
                          const ParamSet& params, const ItemForward& fwd, const Tensor* grad_probs,
                          const Tensor* grad_recon, const Tensor* grad_sparsity,
                          ParamSet& grad_acc) {
    const int n = static_cast<int>(spec.layers.size());

    auto backstep = [&](int l, Tensor& g) {
        const LayerParams lp = detail::resolve_params(spec, params, static_cast<std::size_t>(l));
        const TiedContext tied =
            detail::resolve_tied(spec, shapes, params, fwd.caches, static_cast<std::size_t>(l));
        auto [gin, grads] = layer_backward(spec.layers[l], lp, tied, fwd.caches[l], g);
        const int owner = tied_layer_of(spec.layers[l]) >= 0 ? tied_layer_of(spec.layers[l]) : l;
        if (grads.weights) {
            const char* wname = std::holds_alternative<ConvSpec>(spec.layers[owner]) ? "kernels" : "weights";
            grad_acc.at(owner, wname) += *grads.weights;
        }
        if (grads.bias) grad_acc.at(owner, "bias") += *grads.bias;
        g = std::move(gin);
    };

    auto inject_sparsity = [&](int l, Tensor& g) {
        if (grad_sparsity && l == shapes.sparsity_layer) g += *grad_sparsity;
    };

    if (spec.task == Task::MT) {
        Tensor g = *grad_recon;
        for (int l = n - 1; l >= shapes.first_decoder; --l) backstep(l, g);
        Tensor gh = *grad_probs;
        backstep(shapes.head_index, gh);
        g += gh;  // both heads meet at the code
        for (int l = shapes.head_index - 1; l >= 0; --l) {
            inject_sparsity(l, g);
            backstep(l, g);
        }
    } else {
        Tensor g = spec.task == Task::CL ? *grad_probs : *grad_recon;
        for (int l = n - 1; l >= 0; --l) {
            inject_sparsity(l, g);
            backstep(l, g);
        }
    }
}

// --------------------------------------------------------------------------
// Batch objective
// --------------------------------------------------------------------------

struct BatchLoss {
    double total = 0.0;    // optimised objective: task + every enabled regulariser
    double task = 0.0;     // CCE (CL), MSE (AE) or their scalarisation (MT)
    double cl_term = 0.0;  // MT diagnostics
    double ae_term = 0.0;
};

/// Evaluates the full objective on a batch; when `grads` is non-null, also
/// accumulates d(total)/d(theta) into it (caller provides a zeroed
/// ParamSet). Labels are required for CL/MT and ignored for AE.
inline BatchLoss network_batch_loss(const NetworkSpec& spec, const NetworkShapes& shapes,
                                    const ParamSet& params,
                                    const std::vector<const Tensor*>& items,
                                    const std::vector<int>& labels, Mode mode, Rng& rng,
                                    ParamSet* grads, const PriorRegBinding* prior = nullptr) {
    if (items.empty()) throw UsageError("network_batch_loss: empty batch");
    const bool needs_labels = spec.task != Task::AE;
    if (needs_labels && labels.size() != items.size())
        throw DimensionError("network_batch_loss: " + std::to_string(items.size()) + " items vs " +
                             std::to_string(labels.size()) + " labels");
    const double n = static_cast<double>(items.size());
    const bool sparsity_on = spec.reg.sparsity_coeff > 0.0;
    const bool train = mode == Mode::Train;

    BatchLoss out;
    double cl_sum = 0.0, ae_sum = 0.0, sparsity_sum = 0.0;

    for (std::size_t i = 0; i < items.size(); ++i) {
        ItemForward fwd = forward_item(spec, shapes, params, *items[i], mode, rng, sparsity_on);

        Tensor onehot;
        std::vector<Tensor> probs1, target1;
        if (spec.task != Task::AE) {
            if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= spec.num_classes)
                throw UsageError("label " + std::to_string(labels[i]) + " outside class range");
            onehot = Tensor({spec.num_classes}, 0.0);
            onehot[static_cast<std::size_t>(labels[i])] = 1.0;
            cl_sum += cce({fwd.class_probs}, {onehot});
        }
        if (spec.task != Task::CL) ae_sum += mse({fwd.reconstruction}, {*items[i]});
        if (sparsity_on)
            sparsity_sum +=
                hoyer_penalty(fwd.sparsity_act, spec.reg.sparsity_coeff, spec.reg.sparsity_target);

        if (grads) {
            if (!train) throw UsageError("gradients require a train-mode pass");
            Tensor gp, gr, gs;
            if (spec.task != Task::AE) {
                gp = cce_backward({fwd.class_probs}, {onehot})[0];
                const double scale = (spec.task == Task::MT ? 1.0 - spec.alpha_mt : 1.0) / n;
                gp *= scale;
            }
            if (spec.task != Task::CL) {
                gr = mse_backward({fwd.reconstruction}, {*items[i]})[0];
                const double scale = (spec.task == Task::MT ? spec.alpha_mt : 1.0) / n;
                gr *= scale;
            }
            if (sparsity_on) {
                gs = hoyer_penalty_grad(fwd.sparsity_act, spec.reg.sparsity_coeff,
                                        spec.reg.sparsity_target);
                gs *= 1.0 / n;
            }
            backward_item(spec, shapes, params, fwd, gp.size() ? &gp : nullptr,
                          gr.size() ? &gr : nullptr, gs.size() ? &gs : nullptr, *grads);
        }
    }

    out.cl_term = cl_sum / n;
    out.ae_term = ae_sum / n;
    switch (spec.task) {
        case Task::CL: out.task = out.cl_term; break;
        case Task::AE: out.task = out.ae_term; break;
        case Task::MT: out.task = multitask(out.cl_term, out.ae_term, spec.alpha_mt); break;
    }
    out.total = out.task + sparsity_sum / n;

    if (spec.reg.l2_lambda > 0.0) {
        for (const ParamSet::Entry& e : params.entries()) {
            if (e.name == "bias") continue;
            out.total += l2_penalty(e.value, spec.reg.l2_lambda);
            if (grads) l2_grad_acc(e.value, spec.reg.l2_lambda, grads->at(e.layer, e.name));
        }
    }
    if (prior && prior->lambda > 0.0) {
        std::vector<Tensor> cur, old;
        for (const auto& [layer, snapshot] : prior->filters) {
            cur.push_back(params.at(layer, "kernels"));
            old.push_back(snapshot);
        }
        out.total += prior_reg(cur, old, prior->lambda);
        if (grads)
            for (const auto& [layer, snapshot] : prior->filters)
                prior_reg_grad_acc(params.at(layer, "kernels"), snapshot, prior->lambda,
                                   grads->at(layer, "kernels"));
    }
    return out;
}

// --------------------------------------------------------------------------
// Structural transfer between tasks
// --------------------------------------------------------------------------

/// Mirrors a classifier into an autoencoder: drops the classification head,
/// then appends, for each remaining layer in reverse order, its decoding
/// counterpart (dense -> tied transposed dense, conv -> tied flipped full
/// conv, pool -> unpool). Dropout layers have no mirror. All decoders are
/// tied and bias-free.
inline NetworkSpec build_cae_from_cnn(const NetworkSpec& spec) {
    if (spec.task != Task::CL)
        throw UsageError("build_cae_from_cnn: spec is " + std::string(to_string(spec.task)) +
                         ", expected CL");
    validate_spec(spec);
    NetworkSpec ae;
    ae.input_shape = spec.input_shape;
    ae.task = Task::AE;
    ae.reg = spec.reg;
    ae.layers.assign(spec.layers.begin(), spec.layers.end() - 1);  // drop the head
    for (int l = static_cast<int>(ae.layers.size()) - 1; l >= 0; --l) {
        if (const auto* d = std::get_if<DenseSpec>(&spec.layers[l]))
            ae.layers.push_back(DenseDecodeSpec{l, d->act});
        else if (const auto* c = std::get_if<ConvSpec>(&spec.layers[l]))
            ae.layers.push_back(ConvDecodeSpec{l, c->act});
        else if (std::holds_alternative<MaxPoolSpec>(spec.layers[l]))
            ae.layers.push_back(UnpoolSpec{l});
        // Dropout: regularisation, not structure; nothing to mirror.
    }
    validate_spec(ae);
    return ae;
}

/// Removes the decoder tail of an autoencoder and appends a softmax
/// classification head with num_classes units. Encoder layer ids (and hence
/// parameter addresses) are unchanged.
inline NetworkSpec build_cnn_from_cae(const NetworkSpec& spec, std::size_t num_classes) {
    if (spec.task != Task::AE)
        throw UsageError("build_cnn_from_cae: spec is " + std::string(to_string(spec.task)) +
                         ", expected AE");
    NetworkShapes shapes = validate_spec(spec);
    NetworkSpec cl;
    cl.input_shape = spec.input_shape;
    cl.task = Task::CL;
    cl.num_classes = num_classes;
    cl.reg = spec.reg;
    const std::size_t enc_end =
        shapes.first_decoder >= 0 ? static_cast<std::size_t>(shapes.first_decoder) : spec.layers.size();
    cl.layers.assign(spec.layers.begin(), spec.layers.begin() + enc_end);
    cl.layers.push_back(DenseSpec{num_classes, Activation::Softmax});
    validate_spec(cl);
    return cl;
}

/// Shared-encoder two-head spec: the classifier head stays in place and the
/// mirrored decoder tail is appended after it; both heads read the code and
/// their gradients sum into the shared encoder.
inline NetworkSpec build_mt_from_cnn(const NetworkSpec& spec, double alpha_mt) {
    if (spec.task != Task::CL)
        throw UsageError("build_mt_from_cnn: spec is " + std::string(to_string(spec.task)) +
                         ", expected CL");
    NetworkSpec ae = build_cae_from_cnn(spec);
    NetworkSpec mt;
    mt.input_shape = spec.input_shape;
    mt.task = Task::MT;
    mt.num_classes = spec.num_classes;
    mt.alpha_mt = alpha_mt;
    mt.reg = spec.reg;
    mt.layers = spec.layers;  // encoder + head
    mt.layers.insert(mt.layers.end(), ae.layers.begin() + (spec.layers.size() - 1), ae.layers.end());
    validate_spec(mt);
    return mt;
}

}  // namespace plastic

#endif  // PLASTIC_MODEL_HPP
