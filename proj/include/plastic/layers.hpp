#ifndef PLASTIC_LAYERS_HPP
#define PLASTIC_LAYERS_HPP

#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "plastic/activations.hpp"
#include "plastic/errors.hpp"
#include "plastic/rng.hpp"
#include "plastic/tensor.hpp"

namespace plastic {

// --------------------------------------------------------------------------
// Layer descriptions. Decoder layers (DenseDecode/ConvDecode/Unpool) own no
// parameters: they borrow the weights or pool indices of the encoder layer
// they are tied to, with kernels flipped for the convolutional decoder and
// weights transposed for the dense decoder. Decoders carry no biases.
// --------------------------------------------------------------------------

struct ConvSpec {
    std::size_t maps, h1, h2;
    Activation act;
};
struct MaxPoolSpec {
    std::size_t p1, p2;
};
struct DenseSpec {
    std::size_t units;
    Activation act;
};
struct DropoutSpec {
    double p;  // drop probability, in [0,1)
};
struct DenseDecodeSpec {
    int tied_to;
    Activation act;
};
struct ConvDecodeSpec {
    int tied_to;
    Activation act;
};
struct UnpoolSpec {
    int tied_to;
};

using LayerSpec = std::variant<ConvSpec, MaxPoolSpec, DenseSpec, DropoutSpec, DenseDecodeSpec,
                               ConvDecodeSpec, UnpoolSpec>;

inline const char* layer_kind_name(const LayerSpec& s) {
    return std::visit(
        [](const auto& v) -> const char* {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, ConvSpec>) return "conv";
            else if constexpr (std::is_same_v<T, MaxPoolSpec>) return "maxpool";
            else if constexpr (std::is_same_v<T, DenseSpec>) return "dense";
            else if constexpr (std::is_same_v<T, DropoutSpec>) return "dropout";
            else if constexpr (std::is_same_v<T, DenseDecodeSpec>) return "dense_decode";
            else if constexpr (std::is_same_v<T, ConvDecodeSpec>) return "conv_decode";
            else return "unpool";
        },
        s);
}

/// Encoder layer id a decoder borrows from, or -1 for layers that stand alone.
inline int tied_layer_of(const LayerSpec& s) {
    if (auto* d = std::get_if<DenseDecodeSpec>(&s)) return d->tied_to;
    if (auto* c = std::get_if<ConvDecodeSpec>(&s)) return c->tied_to;
    if (auto* u = std::get_if<UnpoolSpec>(&s)) return u->tied_to;
    return -1;
}

inline bool layer_has_params(const LayerSpec& s) {
    return std::holds_alternative<ConvSpec>(s) || std::holds_alternative<DenseSpec>(s);
}

enum class Mode { Train, Eval };

/// Views into the parameter storage for one layer. Owning layers (conv,
/// dense) get their own weights/bias; decode layers get the tied encoder's
/// weights through `tied_weights` instead.
struct LayerParams {
    const Tensor* weights = nullptr;
    const Tensor* bias = nullptr;
};

/// Cross-layer context a decoder needs from its tied encoder layer during
/// the same pass.
struct TiedContext {
    const Tensor* tied_weights = nullptr;          // encoder kernels / dense weights
    const PoolIndexMap* pool_index = nullptr;      // tied max-pool's indices, this pass
    std::vector<std::size_t> tied_input_shape;     // encoder layer's input shape
};

/// Per-layer state captured by a train-mode forward pass, consumed by
/// backward. Eval-mode passes keep only the pool index maps (the decoder
/// needs them) and nothing stochastic.
struct ForwardCache {
    bool valid = false;
    Tensor input;
    Tensor output;
    PoolIndexMap pool_index;
    Tensor dropout_mask;  // already scaled by 1/(1-p)
};

/// Parameter-gradient contribution of one layer. For tied decoders this is
/// the contribution attributed to the shared encoder weights.
struct LayerGrads {
    std::optional<Tensor> weights;
    std::optional<Tensor> bias;
};

namespace detail {

/// d(corr_full)/d(kernel): corr_valid of the (virtually) padded input with
/// the upstream gradient. x is [h,w], g is [h+kh-1, w+kw-1], out is [kh,kw].
inline void corr2d_full_kernel_grad_acc(const double* x, std::size_t h, std::size_t w,
                                        const double* g, std::size_t gh, std::size_t gw,
                                        std::size_t kh, std::size_t kw, double* out) {
    const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh) - 1;
    const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(kw) - 1;
    for (std::size_t u = 0; u < kh; ++u) {
        const std::ptrdiff_t r0 = std::max<std::ptrdiff_t>(0, ph - static_cast<std::ptrdiff_t>(u));
        const std::ptrdiff_t r1 =
            std::min<std::ptrdiff_t>(gh, static_cast<std::ptrdiff_t>(h) + ph - static_cast<std::ptrdiff_t>(u));
        for (std::size_t v = 0; v < kw; ++v) {
            const std::ptrdiff_t s0 = std::max<std::ptrdiff_t>(0, pw - static_cast<std::ptrdiff_t>(v));
            const std::ptrdiff_t s1 =
                std::min<std::ptrdiff_t>(gw, static_cast<std::ptrdiff_t>(w) + pw - static_cast<std::ptrdiff_t>(v));
            double acc = 0.0;
            for (std::ptrdiff_t r = r0; r < r1; ++r) {
                const double* xrow = x + (static_cast<std::ptrdiff_t>(u) + r - ph) * static_cast<std::ptrdiff_t>(w);
                const double* grow = g + r * static_cast<std::ptrdiff_t>(gw);
                for (std::ptrdiff_t s = s0; s < s1; ++s)
                    acc += xrow[static_cast<std::ptrdiff_t>(v) + s - pw] * grow[s];
            }
            out[u * kw + v] += acc;
        }
    }
}

inline Tensor flatten(const Tensor& t) { return t.reshaped({t.size()}); }

}  // namespace detail

// --------------------------------------------------------------------------
// Forward
// --------------------------------------------------------------------------

inline Tensor layer_forward(const LayerSpec& spec, const LayerParams& params,
                            const TiedContext& tied, const Tensor& input, Mode mode, Rng& rng,
                            ForwardCache* cache) {
    Tensor out = std::visit(
        [&](const auto& s) -> Tensor {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ConvSpec>) {
                Tensor pre = conv2d_valid(input, *params.weights, *params.bias);
                return activate(s.act, pre);
            } else if constexpr (std::is_same_v<T, MaxPoolSpec>) {
                auto [pooled, map] = maxpool2d(input, s.p1, s.p2);
                if (cache) cache->pool_index = std::move(map);
                return std::move(pooled);
            } else if constexpr (std::is_same_v<T, DenseSpec>) {
                const Tensor& w = *params.weights;
                const Tensor& b = *params.bias;
                if (w.dim(1) != input.size())
                    throw DimensionError("dense: weight input axis " + std::to_string(w.dim(1)) +
                                         " does not match flattened input size " +
                                         std::to_string(input.size()));
                Tensor pre({s.units});
                for (std::size_t p = 0; p < s.units; ++p) {
                    const double* row = w.data() + p * w.dim(1);
                    double acc = b[p];
                    for (std::size_t q = 0; q < w.dim(1); ++q) acc += row[q] * input[q];
                    pre[p] = acc;
                }
                return activate(s.act, pre);
            } else if constexpr (std::is_same_v<T, DropoutSpec>) {
                if (mode == Mode::Eval) return input;
                const double keep = 1.0 - s.p;
                Tensor mask(input.shape());
                for (std::size_t i = 0; i < mask.size(); ++i)
                    mask[i] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
                Tensor out(input.shape());
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = input[i] * mask[i];
                if (cache) cache->dropout_mask = std::move(mask);
                return out;
            } else if constexpr (std::is_same_v<T, DenseDecodeSpec>) {
                const Tensor& w = *tied.tied_weights;  // [units, n]
                if (input.size() != w.dim(0))
                    throw DimensionError("dense_decode: input size " + std::to_string(input.size()) +
                                         " does not match tied unit axis " + std::to_string(w.dim(0)));
                const std::size_t n = w.dim(1);
                Tensor pre({n}, 0.0);
                for (std::size_t p = 0; p < w.dim(0); ++p) {
                    const double* row = w.data() + p * n;
                    const double zp = input[p];
                    if (zp == 0.0) continue;
                    for (std::size_t q = 0; q < n; ++q) pre[q] += row[q] * zp;
                }
                Tensor act_out = activate(s.act, pre);
                return act_out.reshaped(tied.tied_input_shape);
            } else if constexpr (std::is_same_v<T, ConvDecodeSpec>) {
                const Tensor& k = *tied.tied_weights;  // [M, C, kh, kw]
                const std::size_t m = k.dim(0), c = k.dim(1), kh = k.dim(2), kw = k.dim(3);
                if (input.rank() != 3 || input.dim(0) != m)
                    throw DimensionError("conv_decode: input map axis must be " + std::to_string(m) +
                                         ", got " + Tensor::shape_str(input.shape()));
                const std::size_t h = input.dim(1), w = input.dim(2);
                const std::size_t oh = h + kh - 1, ow = w + kw - 1;
                Tensor flipped = flip2(k);
                Tensor pre({c, oh, ow}, 0.0);
                for (std::size_t j = 0; j < c; ++j) {
                    double* omap = pre.data() + j * oh * ow;
                    for (std::size_t i = 0; i < m; ++i)
                        detail::corr2d_full_acc(input.data() + i * h * w, h, w,
                                                flipped.data() + (i * c + j) * kh * kw, kh, kw, omap);
                }
                return activate(s.act, pre);
            } else {  // UnpoolSpec
                if (tied.pool_index == nullptr)
                    throw UsageError("unpool: tied pool index map not available in this pass");
                return unpool2d(input, *tied.pool_index, tied.tied_input_shape);
            }
        },
        spec);
    // Eval-mode passes keep only the pool index map (stored above); a full
    // cache is a train-mode artefact.
    if (cache && mode == Mode::Train) {
        cache->valid = true;
        cache->input = input;
        cache->output = out;
    }
    return out;
}

// --------------------------------------------------------------------------
// Backward
// --------------------------------------------------------------------------

inline std::pair<Tensor, LayerGrads> layer_backward(const LayerSpec& spec, const LayerParams& params,
                                                    const TiedContext& tied, const ForwardCache& cache,
                                                    const Tensor& grad_out) {
    if (!cache.valid)
        throw UsageError(std::string("layer_backward(") + layer_kind_name(spec) +
                         "): no forward cache; run forward in train mode first");
    LayerGrads grads;
    Tensor grad_in = std::visit(
        [&](const auto& s) -> Tensor {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ConvSpec>) {
                const Tensor& k = *params.weights;
                const std::size_t m = k.dim(0), c = k.dim(1), kh = k.dim(2), kw = k.dim(3);
                const Tensor& x = cache.input;
                const std::size_t h = x.dim(1), w = x.dim(2);
                const std::size_t oh = h - kh + 1, ow = w - kw + 1;
                Tensor gu = activation_backward(s.act, cache.output, grad_out);
                Tensor gb({m});
                Tensor gk({m, c, kh, kw}, 0.0);
                Tensor gx({c, h, w}, 0.0);
                Tensor flipped = flip2(k);
                for (std::size_t i = 0; i < m; ++i) {
                    const double* gmap = gu.data() + i * oh * ow;
                    double bsum = 0.0;
                    for (std::size_t p = 0; p < oh * ow; ++p) bsum += gmap[p];
                    gb[i] = bsum;
                    for (std::size_t j = 0; j < c; ++j) {
                        detail::corr2d_valid_acc(x.data() + j * h * w, h, w, gmap, oh, ow,
                                                 gk.data() + (i * c + j) * kh * kw);
                        detail::corr2d_full_acc(gmap, oh, ow,
                                                flipped.data() + (i * c + j) * kh * kw, kh, kw,
                                                gx.data() + j * h * w);
                    }
                }
                grads.weights = std::move(gk);
                grads.bias = std::move(gb);
                return gx;
            } else if constexpr (std::is_same_v<T, MaxPoolSpec>) {
                const PoolIndexMap& map = cache.pool_index;
                const auto& in_shape = cache.input.shape();
                Tensor gx(in_shape, 0.0);
                const std::size_t oh = map.shape[1], ow = map.shape[2];
                for (std::size_t j = 0; j < map.shape[0]; ++j)
                    for (std::size_t r = 0; r < oh; ++r)
                        for (std::size_t s2 = 0; s2 < ow; ++s2) {
                            auto [ir, is] = map.indices[(j * oh + r) * ow + s2];
                            gx(j, ir, is) += grad_out(j, r, s2);
                        }
                return gx;
            } else if constexpr (std::is_same_v<T, DenseSpec>) {
                const Tensor& w = *params.weights;
                Tensor gu = activation_backward(s.act, cache.output, grad_out);
                const std::size_t n = w.dim(1);
                Tensor gw({s.units, n});
                Tensor gxf({n}, 0.0);
                const Tensor xf = detail::flatten(cache.input);
                for (std::size_t p = 0; p < s.units; ++p) {
                    const double gp = gu[p];
                    const double* wrow = w.data() + p * n;
                    double* gwrow = gw.data() + p * n;
                    for (std::size_t q = 0; q < n; ++q) {
                        gwrow[q] = gp * xf[q];
                        gxf[q] += gp * wrow[q];
                    }
                }
                grads.weights = std::move(gw);
                grads.bias = std::move(gu);
                return gxf.reshaped(cache.input.shape());
            } else if constexpr (std::is_same_v<T, DropoutSpec>) {
                const Tensor& mask = cache.dropout_mask;
                if (!mask.same_shape(grad_out))
                    throw UsageError("dropout backward: cache holds no train-mode mask");
                Tensor gx(grad_out.shape());
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = grad_out[i] * mask[i];
                return gx;
            } else if constexpr (std::is_same_v<T, DenseDecodeSpec>) {
                const Tensor& w = *tied.tied_weights;  // [units, n]
                const std::size_t units = w.dim(0), n = w.dim(1);
                Tensor gu = activation_backward(s.act, detail::flatten(cache.output),
                                                detail::flatten(grad_out));
                const Tensor z = detail::flatten(cache.input);  // the code vector
                Tensor gw({units, n});
                Tensor gz({units});
                for (std::size_t p = 0; p < units; ++p) {
                    const double* wrow = w.data() + p * n;
                    double* gwrow = gw.data() + p * n;
                    const double zp = z[p];
                    double acc = 0.0;
                    for (std::size_t q = 0; q < n; ++q) {
                        gwrow[q] = zp * gu[q];
                        acc += wrow[q] * gu[q];
                    }
                    gz[p] = acc;
                }
                grads.weights = std::move(gw);  // attributed to the tied encoder weights
                return gz;
            } else if constexpr (std::is_same_v<T, ConvDecodeSpec>) {
                const Tensor& k = *tied.tied_weights;  // [M, C, kh, kw]
                const std::size_t m = k.dim(0), c = k.dim(1), kh = k.dim(2), kw = k.dim(3);
                const Tensor& x = cache.input;  // [M, h, w]
                const std::size_t h = x.dim(1), w2 = x.dim(2);
                const std::size_t oh = h + kh - 1, ow = w2 + kw - 1;
                Tensor gu = activation_backward(s.act, cache.output, grad_out);
                Tensor gx({m, h, w2}, 0.0);
                Tensor gk_flipped({m, c, kh, kw}, 0.0);
                for (std::size_t j = 0; j < c; ++j) {
                    const double* gmap = gu.data() + j * oh * ow;
                    for (std::size_t i = 0; i < m; ++i) {
                        // d/d input: valid correlation of the upstream grad with
                        // the unflipped tied kernel.
                        detail::corr2d_valid_acc(gmap, oh, ow, k.data() + (i * c + j) * kh * kw,
                                                 kh, kw, gx.data() + i * h * w2);
                        // d/d flipped kernel, flipped back below.
                        detail::corr2d_full_kernel_grad_acc(x.data() + i * h * w2, h, w2, gmap, oh,
                                                            ow, kh, kw,
                                                            gk_flipped.data() + (i * c + j) * kh * kw);
                    }
                }
                grads.weights = flip2(gk_flipped);  // attributed to the tied encoder kernels
                return gx;
            } else {  // UnpoolSpec
                if (tied.pool_index == nullptr)
                    throw UsageError("unpool backward: tied pool index map not available");
                const PoolIndexMap& map = *tied.pool_index;
                const std::size_t oh = map.shape[1], ow = map.shape[2];
                Tensor gx({map.shape[0], oh, ow});
                for (std::size_t j = 0; j < map.shape[0]; ++j)
                    for (std::size_t r = 0; r < oh; ++r)
                        for (std::size_t s2 = 0; s2 < ow; ++s2) {
                            auto [ir, is] = map.indices[(j * oh + r) * ow + s2];
                            gx(j, r, s2) = grad_out(j, ir, is);
                        }
                return gx;
            }
        },
        spec);
    return {std::move(grad_in), std::move(grads)};
}

}  // namespace plastic

#endif  // PLASTIC_LAYERS_HPP
