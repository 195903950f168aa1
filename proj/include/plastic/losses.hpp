#ifndef PLASTIC_LOSSES_HPP
#define PLASTIC_LOSSES_HPP

#include <cmath>
#include <string>
#include <vector>

#include "plastic/errors.hpp"
#include "plastic/tensor.hpp"

namespace plastic {

/// Floor applied inside the CCE log so perfect-confidence mistakes stay finite.
inline constexpr double kLogFloor = 1e-12;

namespace detail {
inline void require_same_batch(const std::vector<Tensor>& pred, const std::vector<Tensor>& target,
                               const char* who) {
    if (pred.size() != target.size())
        throw DimensionError(std::string(who) + ": batch sizes differ (" +
                             std::to_string(pred.size()) + " vs " + std::to_string(target.size()) + ")");
    if (pred.empty()) throw DimensionError(std::string(who) + ": empty batch");
    for (std::size_t n = 0; n < pred.size(); ++n)
        if (!pred[n].same_shape(target[n]))
            throw DimensionError(std::string(who) + ": item " + std::to_string(n) + " shapes " +
                                 Tensor::shape_str(pred[n].shape()) + " vs " +
                                 Tensor::shape_str(target[n].shape()));
}
}  // namespace detail

/// Mean categorical cross entropy over a batch of probability vectors
/// against one-hot targets.
inline double cce(const std::vector<Tensor>& pred, const std::vector<Tensor>& target) {
    detail::require_same_batch(pred, target, "cce");
    const double n = static_cast<double>(pred.size());
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double rowsum = 0.0;
        for (std::size_t k = 0; k < pred[i].size(); ++k) rowsum += pred[i][k];
        if (std::abs(rowsum - 1.0) > 1e-6)
            throw UsageError("cce: prediction row " + std::to_string(i) + " sums to " +
                             std::to_string(rowsum) + ", not a probability vector");
        for (std::size_t k = 0; k < pred[i].size(); ++k) {
            const double t = target[i][k];
            if (t != 0.0) total -= t * std::log(std::max(pred[i][k], kLogFloor));
        }
    }
    return total / n;
}

/// dL/dpred for the mean CCE. Zero where the target is zero and where the
/// prediction sits below the log floor.
inline std::vector<Tensor> cce_backward(const std::vector<Tensor>& pred,
                                        const std::vector<Tensor>& target) {
    detail::require_same_batch(pred, target, "cce");
    const double n = static_cast<double>(pred.size());
    std::vector<Tensor> grads;
    grads.reserve(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        Tensor g(pred[i].shape(), 0.0);
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double t = target[i][k];
            if (t != 0.0 && pred[i][k] > kLogFloor) g[k] = -t / (pred[i][k] * n);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

/// Mean (over the batch) of the squared 2-norm of the residual of each item.
inline double mse(const std::vector<Tensor>& pred, const std::vector<Tensor>& target) {
    detail::require_same_batch(pred, target, "mse");
    const double n = static_cast<double>(pred.size());
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        for (std::size_t k = 0; k < pred[i].size(); ++k) {
            const double d = target[i][k] - pred[i][k];
            total += d * d;
        }
    return total / n;
}

inline std::vector<Tensor> mse_backward(const std::vector<Tensor>& pred,
                                        const std::vector<Tensor>& target) {
    detail::require_same_batch(pred, target, "mse");
    const double n = static_cast<double>(pred.size());
    std::vector<Tensor> grads;
    grads.reserve(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        Tensor g(pred[i].shape());
        for (std::size_t k = 0; k < g.size(); ++k)
            g[k] = 2.0 * (pred[i][k] - target[i][k]) / n;
        grads.push_back(std::move(g));
    }
    return grads;
}

/// Scalarised two-task objective: (1 - alpha) * classification + alpha *
/// reconstruction.
inline double multitask(double l_cl, double l_ae, double alpha_mt) {
    if (!(alpha_mt >= 0.0 && alpha_mt <= 1.0))
        throw ConfigError("multitask weight must lie in [0,1], got " + std::to_string(alpha_mt));
    return (1.0 - alpha_mt) * l_cl + alpha_mt * l_ae;
}

/// Quadratic pull towards a prior parameter snapshot: (lambda/2)*||old - theta||^2.
inline double prior_reg(const std::vector<Tensor>& theta, const std::vector<Tensor>& theta_old,
                        double lambda) {
    if (theta.size() != theta_old.size())
        throw ConfigError("prior_reg: snapshot covers " + std::to_string(theta_old.size()) +
                          " tensors, current parameters have " + std::to_string(theta.size()));
    double sq = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        if (!theta[i].same_shape(theta_old[i]))
            throw ConfigError("prior_reg: snapshot tensor " + std::to_string(i) + " shape " +
                              Tensor::shape_str(theta_old[i].shape()) + " does not match " +
                              Tensor::shape_str(theta[i].shape()));
        for (std::size_t k = 0; k < theta[i].size(); ++k) {
            const double d = theta_old[i][k] - theta[i][k];
            sq += d * d;
        }
    }
    return 0.5 * lambda * sq;
}

/// Accumulates lambda * (theta - theta_old) into grad.
inline void prior_reg_grad_acc(const Tensor& theta, const Tensor& theta_old, double lambda,
                               Tensor& grad) {
    if (!theta.same_shape(theta_old) || !theta.same_shape(grad))
        throw ConfigError("prior_reg: gradient/param/snapshot shapes do not agree");
    for (std::size_t k = 0; k < theta.size(); ++k)
        grad[k] += lambda * (theta[k] - theta_old[k]);
}

/// Hoyer sparseness of a tensor's elements: (sqrt(n) - |a|_1/|a|_2) / (sqrt(n) - 1),
/// 1 for a one-hot vector, 0 for a uniform one, scale-invariant. The all-zero
/// tensor is a documented degenerate case scored 0.
inline double hoyer_sparseness(const Tensor& a) {
    const double n = static_cast<double>(a.size());
    if (a.size() < 2) throw DimensionError("hoyer_sparseness: needs at least 2 elements");
    double l1 = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        l1 += std::abs(a[i]);
        sq += a[i] * a[i];
    }
    if (sq == 0.0) return 0.0;
    const double root_n = std::sqrt(n);
    return (root_n - l1 / std::sqrt(sq)) / (root_n - 1.0);
}

/// Squared deviation of the measured sparseness from its target.
inline double hoyer_penalty(const Tensor& a, double coeff, double target) {
    const double s = hoyer_sparseness(a);
    const double d = target - s;
    return coeff * d * d;
}

/// Gradient of hoyer_penalty w.r.t. the activations. Zero in the all-zero
/// degenerate case.
inline Tensor hoyer_penalty_grad(const Tensor& a, double coeff, double target) {
    Tensor g(a.shape(), 0.0);
    double l1 = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        l1 += std::abs(a[i]);
        sq += a[i] * a[i];
    }
    if (sq == 0.0) return g;
    const double n = static_cast<double>(a.size());
    const double root_n = std::sqrt(n);
    const double l2 = std::sqrt(sq);
    const double s = (root_n - l1 / l2) / (root_n - 1.0);
    const double dpds = -2.0 * coeff * (target - s);
    const double scale = -1.0 / (root_n - 1.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double sign = a[i] > 0.0 ? 1.0 : (a[i] < 0.0 ? -1.0 : 0.0);
        const double dratio = sign / l2 - l1 * a[i] / (sq * l2);
        g[i] = dpds * scale * dratio;
    }
    return g;
}

/// (lambda/2)*||w||^2 contribution of one weight tensor.
inline double l2_penalty(const Tensor& w, double lambda) {
    double sq = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) sq += w[i] * w[i];
    return 0.5 * lambda * sq;
}

inline void l2_grad_acc(const Tensor& w, double lambda, Tensor& grad) {
    for (std::size_t i = 0; i < w.size(); ++i) grad[i] += lambda * w[i];
}

}  // namespace plastic

#endif  // PLASTIC_LOSSES_HPP
