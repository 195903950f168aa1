#ifndef PLASTIC_TESTS_TEST_UTIL_HPP
#define PLASTIC_TESTS_TEST_UTIL_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "plastic/rng.hpp"
#include "plastic/tensor.hpp"

namespace testutil {

using plastic::Rng;
using plastic::Tensor;

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

/// Brute-force valid correlation oracle: plain quadruple loop, independent
/// of the library's implementation.
inline Tensor conv2d_valid_oracle(const Tensor& x, const Tensor& k, const Tensor& b) {
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t m = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    Tensor out({m, h - kh + 1, w - kw + 1});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t r = 0; r + kh <= h; ++r)
            for (std::size_t s = 0; s + kw <= w; ++s) {
                double acc = b[i];
                for (std::size_t j = 0; j < c; ++j)
                    for (std::size_t u = 0; u < kh; ++u)
                        for (std::size_t v = 0; v < kw; ++v)
                            acc += x(j, r + u, s + v) * k(i, j, u, v);
                out(i, r, s) = acc;
            }
    return out;
}

/// Brute-force per-window max oracle.
inline Tensor maxpool_oracle(const Tensor& x, std::size_t p1, std::size_t p2) {
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out({c, h / p1, w / p2});
    for (std::size_t j = 0; j < c; ++j)
        for (std::size_t r = 0; r < h / p1; ++r)
            for (std::size_t s = 0; s < w / p2; ++s) {
                double best = x(j, r * p1, s * p2);
                for (std::size_t u = 0; u < p1; ++u)
                    for (std::size_t v = 0; v < p2; ++v)
                        best = std::max(best, x(j, r * p1 + u, s * p2 + v));
                out(j, r, s) = best;
            }
    return out;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double max_rel_diff(const Tensor& a, const Tensor& b, double floor = 1e-8) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        m = std::max(m, std::abs(a[i] - b[i]) / denom);
    }
    return m;
}

/// Central finite differences of a scalar function of a flat parameter
/// vector, compared against an analytic gradient. Returns the worst relative
/// mismatch over all coordinates.
inline double grad_check(const std::function<double(const std::vector<double>&)>& f,
                         std::vector<double> x, const std::vector<double>& analytic,
                         double step = 1e-5, double denom_floor = 1e-4) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + step;
        const double fp = f(x);
        x[i] = orig - step;
        const double fm = f(x);
        x[i] = orig;
        const double numeric = (fp - fm) / (2.0 * step);
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), denom_floor});
        worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
    return worst;
}

}  // namespace testutil

#endif  // PLASTIC_TESTS_TEST_UTIL_HPP
