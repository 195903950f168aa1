#ifndef PLASTIC_ACTIVATIONS_HPP
#define PLASTIC_ACTIVATIONS_HPP

#include <cmath>
#include <string>

#include "plastic/errors.hpp"
#include "plastic/tensor.hpp"

namespace plastic {

enum class Activation { Sigmoid, Tanh, Relu, Softmax, Identity };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::Softmax: return "softmax";
        case Activation::Identity: return "identity";
    }
    return "?";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    if (s == "softmax") return Activation::Softmax;
    if (s == "identity") return Activation::Identity;
    throw ConfigError("unknown activation '" + s + "'");
}

namespace detail {
/// Saturation-stable logistic function.
inline double sigmoid(double y) {
    if (y >= 0.0) return 1.0 / (1.0 + std::exp(-y));
    const double e = std::exp(y);
    return e / (1.0 + e);
}
}  // namespace detail

/// Applies an activation to a pre-activation tensor. Sigmoid/Tanh/ReLU are
/// elementwise; Softmax normalises over all elements of the tensor (it is
/// only legal on a classifier's final output vector) using max-subtraction
/// so large inputs cannot overflow.
inline Tensor activate(Activation kind, const Tensor& z) {
    Tensor y(z.shape());
    switch (kind) {
        case Activation::Sigmoid:
            for (std::size_t i = 0; i < z.size(); ++i) y[i] = detail::sigmoid(z[i]);
            break;
        case Activation::Tanh:
            for (std::size_t i = 0; i < z.size(); ++i) y[i] = std::tanh(z[i]);
            break;
        case Activation::Relu:
            for (std::size_t i = 0; i < z.size(); ++i) y[i] = z[i] > 0.0 ? z[i] : 0.0;
            break;
        case Activation::Identity:
            for (std::size_t i = 0; i < z.size(); ++i) y[i] = z[i];
            break;
        case Activation::Softmax: {
            double zmax = z[0];
            for (std::size_t i = 1; i < z.size(); ++i) zmax = std::max(zmax, z[i]);
            double sum = 0.0;
            for (std::size_t i = 0; i < z.size(); ++i) {
                y[i] = std::exp(z[i] - zmax);
                sum += y[i];
            }
            for (std::size_t i = 0; i < z.size(); ++i) y[i] /= sum;
            break;
        }
    }
    return y;
}

/// Pulls a gradient back through an activation: given the activation output
/// y = f(z) and dL/dy, returns dL/dz. All supported activations admit a
/// derivative expressed through the output, so no pre-activation is cached.
/// Softmax applies its full Jacobian (it is not elementwise).
inline Tensor activation_backward(Activation kind, const Tensor& output, const Tensor& grad_out) {
    if (!output.same_shape(grad_out))
        throw DimensionError("activation_backward: output shape " + Tensor::shape_str(output.shape()) +
                             " does not match gradient shape " + Tensor::shape_str(grad_out.shape()));
    Tensor g(output.shape());
    switch (kind) {
        case Activation::Sigmoid:
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] = grad_out[i] * output[i] * (1.0 - output[i]);
            break;
        case Activation::Tanh:
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] = grad_out[i] * (1.0 - output[i] * output[i]);
            break;
        case Activation::Relu:
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = output[i] > 0.0 ? grad_out[i] : 0.0;
            break;
        case Activation::Identity:
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i];
            break;
        case Activation::Softmax: {
            double dot = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) dot += grad_out[i] * output[i];
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = output[i] * (grad_out[i] - dot);
            break;
        }
    }
    return g;
}

}  // namespace plastic

#endif  // PLASTIC_ACTIVATIONS_HPP
