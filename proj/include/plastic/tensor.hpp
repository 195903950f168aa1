#ifndef PLASTIC_TENSOR_HPP
#define PLASTIC_TENSOR_HPP

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "plastic/errors.hpp"

namespace plastic {

/// Dense n-dimensional array of 64-bit reals, flat row-major storage.
/// The universal value type for inputs, activations, kernels and gradients.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(count(shape_), fill) {}

    static Tensor from(std::vector<std::size_t> shape, std::vector<double> data) {
        if (count(shape) != data.size())
            throw DimensionError("tensor data length " + std::to_string(data.size()) +
                                 " does not match shape product " + std::to_string(count(shape)));
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::move(data);
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_[axis]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& operator()(std::size_t i) { return data_[i]; }
    double operator()(std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    Tensor& operator+=(const Tensor& o) {
        assert(same_shape(o));
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    Tensor& operator-=(const Tensor& o) {
        assert(same_shape(o));
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }

    Tensor& operator*=(double c) {
        for (double& v : data_) v *= c;
        return *this;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    /// Same data, new shape; element counts must agree.
    Tensor reshaped(std::vector<std::size_t> shape) const {
        if (count(shape) != data_.size())
            throw DimensionError("reshape to incompatible element count");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

    static std::string shape_str(const std::vector<std::size_t>& shape) {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

/// Argmax memory of a max-pooling pass: for each pooled cell, the absolute
/// (row, col) of the winning element in the pre-pooling feature map.
struct PoolIndexMap {
    std::vector<std::size_t> shape;  // pooled output shape [C, Ho, Wo]
    std::vector<std::pair<std::uint32_t, std::uint32_t>> indices;

    std::size_t size() const { return indices.size(); }
};

namespace detail {

/// out[r,s] = sum_{u,v} x[r+u, s+v] * k[u,v]; out extents (H-h1+1, W-h2+1).
/// Accumulates into out (caller zeroes or seeds it).
inline void corr2d_valid_acc(const double* x, std::size_t h, std::size_t w,
                             const double* k, std::size_t kh, std::size_t kw,
                             double* out) {
    const std::size_t oh = h - kh + 1, ow = w - kw + 1;
    for (std::size_t r = 0; r < oh; ++r) {
        for (std::size_t s = 0; s < ow; ++s) {
            double acc = 0.0;
            for (std::size_t u = 0; u < kh; ++u) {
                const double* xrow = x + (r + u) * w + s;
                const double* krow = k + u * kw;
                for (std::size_t v = 0; v < kw; ++v) acc += xrow[v] * krow[v];
            }
            out[r * ow + s] += acc;
        }
    }
}

/// Full-mode correlation: x zero-padded by (kh-1, kw-1) on every side, then
/// valid correlation; out extents (H+h1-1, W+h2-1). Accumulates into out.
inline void corr2d_full_acc(const double* x, std::size_t h, std::size_t w,
                            const double* k, std::size_t kh, std::size_t kw,
                            double* out) {
    const std::size_t oh = h + kh - 1, ow = w + kw - 1;
    const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh) - 1;
    const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(kw) - 1;
    for (std::size_t r = 0; r < oh; ++r) {
        // valid u range: 0 <= r+u-ph < h
        const std::ptrdiff_t u0 = std::max<std::ptrdiff_t>(0, ph - static_cast<std::ptrdiff_t>(r));
        const std::ptrdiff_t u1 = std::min<std::ptrdiff_t>(kh, static_cast<std::ptrdiff_t>(h) + ph - static_cast<std::ptrdiff_t>(r));
        for (std::size_t s = 0; s < ow; ++s) {
            const std::ptrdiff_t v0 = std::max<std::ptrdiff_t>(0, pw - static_cast<std::ptrdiff_t>(s));
            const std::ptrdiff_t v1 = std::min<std::ptrdiff_t>(kw, static_cast<std::ptrdiff_t>(w) + pw - static_cast<std::ptrdiff_t>(s));
            double acc = 0.0;
            for (std::ptrdiff_t u = u0; u < u1; ++u) {
                const double* xrow = x + (static_cast<std::ptrdiff_t>(r) + u - ph) * static_cast<std::ptrdiff_t>(w);
                const double* krow = k + u * static_cast<std::ptrdiff_t>(kw);
                for (std::ptrdiff_t v = v0; v < v1; ++v)
                    acc += xrow[static_cast<std::ptrdiff_t>(s) + v - pw] * krow[v];
            }
            out[r * ow + s] += acc;
        }
    }
}

}  // namespace detail

/// Valid-mode multi-channel spatial correlation with one scalar bias per
/// output map:
///   out[i] = sum_j corr_valid(input[j], kernels[i,j]) + bias[i].
/// input [C,H,W], kernels [M,C,h1,h2], bias [M] -> out [M, H-h1+1, W-h2+1].
inline Tensor conv2d_valid(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
    if (input.rank() != 3)
        throw DimensionError("conv2d_valid: input rank (axis count) must be 3 [C,H,W], got " +
                             Tensor::shape_str(input.shape()));
    if (kernels.rank() != 4)
        throw DimensionError("conv2d_valid: kernel rank must be 4 [M,C,h1,h2], got " +
                             Tensor::shape_str(kernels.shape()));
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t m = kernels.dim(0), kc = kernels.dim(1), kh = kernels.dim(2), kw = kernels.dim(3);
    if (kc != c)
        throw DimensionError("conv2d_valid: kernel channel axis is " + std::to_string(kc) +
                             " but input has " + std::to_string(c) + " channels");
    if (kh > h)
        throw DimensionError("conv2d_valid: kernel height axis " + std::to_string(kh) +
                             " exceeds input height " + std::to_string(h));
    if (kw > w)
        throw DimensionError("conv2d_valid: kernel width axis " + std::to_string(kw) +
                             " exceeds input width " + std::to_string(w));
    if (bias.rank() != 1 || bias.dim(0) != m)
        throw DimensionError("conv2d_valid: bias axis must have one entry per output map (" +
                             std::to_string(m) + "), got " + Tensor::shape_str(bias.shape()));

    const std::size_t oh = h - kh + 1, ow = w - kw + 1;
    Tensor out({m, oh, ow});
    for (std::size_t i = 0; i < m; ++i) {
        double* omap = out.data() + i * oh * ow;
        const double b = bias[i];
        for (std::size_t p = 0; p < oh * ow; ++p) omap[p] = b;
        for (std::size_t j = 0; j < c; ++j) {
            detail::corr2d_valid_acc(input.data() + j * h * w, h, w,
                                     kernels.data() + (i * c + j) * kh * kw, kh, kw, omap);
        }
    }
    return out;
}

/// Non-overlapping max pooling over (p1, p2) windows. Returns the pooled
/// tensor and the argmax memory needed to unpool. Ties resolve to the first
/// element in row-major window order.
inline std::pair<Tensor, PoolIndexMap> maxpool2d(const Tensor& input, std::size_t p1, std::size_t p2) {
    if (input.rank() != 3)
        throw DimensionError("maxpool2d: input rank must be 3 [C,H,W], got " +
                             Tensor::shape_str(input.shape()));
    if (p1 == 0 || p2 == 0) throw DimensionError("maxpool2d: pool extents must be positive");
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (h % p1 != 0)
        throw DimensionError("maxpool2d: height axis " + std::to_string(h) +
                             " not divisible by pool height " + std::to_string(p1));
    if (w % p2 != 0)
        throw DimensionError("maxpool2d: width axis " + std::to_string(w) +
                             " not divisible by pool width " + std::to_string(p2));

    const std::size_t oh = h / p1, ow = w / p2;
    Tensor out({c, oh, ow});
    PoolIndexMap map;
    map.shape = {c, oh, ow};
    map.indices.resize(c * oh * ow);

    for (std::size_t j = 0; j < c; ++j) {
        const double* in = input.data() + j * h * w;
        for (std::size_t r = 0; r < oh; ++r) {
            for (std::size_t s = 0; s < ow; ++s) {
                std::size_t br = r * p1, bs = s * p2;
                double best = in[br * w + bs];
                std::size_t best_r = br, best_s = bs;
                for (std::size_t u = 0; u < p1; ++u) {
                    for (std::size_t v = 0; v < p2; ++v) {
                        double val = in[(br + u) * w + (bs + v)];
                        if (val > best) {
                            best = val;
                            best_r = br + u;
                            best_s = bs + v;
                        }
                    }
                }
                out(j, r, s) = best;
                map.indices[(j * oh + r) * ow + s] = {static_cast<std::uint32_t>(best_r),
                                                      static_cast<std::uint32_t>(best_s)};
            }
        }
    }
    return {std::move(out), std::move(map)};
}

/// Writes each pooled value back to its remembered argmax position inside a
/// zero tensor of the pre-pooling shape.
inline Tensor unpool2d(const Tensor& input, const PoolIndexMap& map,
                       const std::vector<std::size_t>& out_shape) {
    if (input.shape() != map.shape)
        throw DimensionError("unpool2d: input shape " + Tensor::shape_str(input.shape()) +
                             " does not match index map shape " + Tensor::shape_str(map.shape));
    if (out_shape.size() != 3 || out_shape[0] != input.dim(0))
        throw DimensionError("unpool2d: out_shape must be [C,H,W] with matching channel axis");
    const std::size_t c = out_shape[0], h = out_shape[1], w = out_shape[2];
    const std::size_t oh = input.dim(1), ow = input.dim(2);

    Tensor out(out_shape, 0.0);
    for (std::size_t j = 0; j < c; ++j) {
        for (std::size_t r = 0; r < oh; ++r) {
            for (std::size_t s = 0; s < ow; ++s) {
                auto [ir, is] = map.indices[(j * oh + r) * ow + s];
                if (ir >= h || is >= w)
                    throw CorruptionError("unpool2d: stored index (" + std::to_string(ir) + "," +
                                          std::to_string(is) + ") lies outside out_shape " +
                                          Tensor::shape_str(out_shape));
                out(j, ir, is) = input(j, r, s);
            }
        }
    }
    return out;
}

/// Reverses the last two axes. An involution; used to derive decoding
/// kernels from encoding kernels.
inline Tensor flip2(const Tensor& t) {
    if (t.rank() < 2)
        throw DimensionError("flip2: tensor rank must be at least 2, got " +
                             std::to_string(t.rank()));
    const std::size_t kh = t.dim(t.rank() - 2), kw = t.dim(t.rank() - 1);
    const std::size_t plane = kh * kw;
    const std::size_t n = t.size() / plane;
    Tensor out(t.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const double* src = t.data() + i * plane;
        double* dst = out.data() + i * plane;
        for (std::size_t u = 0; u < kh; ++u)
            for (std::size_t v = 0; v < kw; ++v)
                dst[u * kw + v] = src[(kh - 1 - u) * kw + (kw - 1 - v)];
    }
    return out;
}

}  // namespace plastic

#endif  // PLASTIC_TENSOR_HPP
