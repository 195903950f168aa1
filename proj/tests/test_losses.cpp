#include "plastic/losses.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace plastic;
using testutil::grad_check;
using testutil::random_tensor;

namespace {

Tensor one_hot(std::size_t k, std::size_t n) {
    Tensor t({n}, 0.0);
    t[k] = 1.0;
    return t;
}

/// Random probability vector bounded away from the log floor.
Tensor random_probs(std::size_t n, Rng& rng) {
    Tensor t({n});
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = rng.uniform(0.05, 1.0);
        sum += t[i];
    }
    for (std::size_t i = 0; i < n; ++i) t[i] /= sum;
    return t;
}

/// Naive scalar double-loop oracle, written straight from the definition.
double cce_oracle(const std::vector<Tensor>& pred, const std::vector<Tensor>& target) {
    double total = 0.0;
    for (std::size_t n = 0; n < pred.size(); ++n)
        for (std::size_t k = 0; k < pred[n].size(); ++k)
            total += -target[n][k] * std::log(std::max(pred[n][k], 1e-12));
    return total / static_cast<double>(pred.size());
}

double mse_oracle(const std::vector<Tensor>& pred, const std::vector<Tensor>& target) {
    double total = 0.0;
    for (std::size_t n = 0; n < pred.size(); ++n)
        for (std::size_t k = 0; k < pred[n].size(); ++k) {
            double d = target[n][k] - pred[n][k];
            total += d * d;
        }
    return total / static_cast<double>(pred.size());
}

}  // namespace

TEST(Cce, PerfectPredictionIsZeroUpToFloor) {
    std::vector<Tensor> pred{Tensor::from({2}, {1.0, 0.0})};
    std::vector<Tensor> target{one_hot(0, 2)};
    EXPECT_LE(cce(pred, target), 1e-11);
}

TEST(Cce, UniformBinaryPredictionIsLogTwo) {
    std::vector<Tensor> pred{Tensor::from({2}, {0.5, 0.5})};
    std::vector<Tensor> target{one_hot(0, 2)};
    EXPECT_NEAR(cce(pred, target), std::log(2.0), 1e-12);
}

TEST(Cce, MatchesScalarLoopOracle) {
    Rng rng(41);
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t batch = 1 + rng.below(8), classes = 2 + rng.below(9);
        std::vector<Tensor> pred, target;
        for (std::size_t i = 0; i < batch; ++i) {
            pred.push_back(random_probs(classes, rng));
            target.push_back(one_hot(rng.below(classes), classes));
        }
        EXPECT_NEAR(cce(pred, target), cce_oracle(pred, target), 1e-12);
    }
}

TEST(Cce, NonNegativeAndZeroOnlyAtPerfectPrediction) {
    Rng rng(43);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Tensor> pred{random_probs(5, rng)};
        std::vector<Tensor> target{one_hot(rng.below(5), 5)};
        EXPECT_GE(cce(pred, target), 0.0);
    }
}

TEST(Cce, GradientMatchesFiniteDifferences) {
    Rng rng(47);
    std::vector<Tensor> pred{random_probs(4, rng), random_probs(4, rng)};
    std::vector<Tensor> target{one_hot(1, 4), one_hot(3, 4)};
    auto grads = cce_backward(pred, target);
    // Check item 0; perturbing one coordinate (the row-sum precondition is
    // relaxed through the oracle, which ignores it).
    auto f = [&](const std::vector<double>& v) {
        std::vector<Tensor> p2 = pred;
        p2[0] = Tensor::from({4}, v);
        return cce_oracle(p2, target);
    };
    std::vector<double> x(pred[0].data(), pred[0].data() + 4);
    std::vector<double> g(grads[0].data(), grads[0].data() + 4);
    EXPECT_LT(grad_check(f, x, g, 1e-7), 1e-6);
}

TEST(Cce, ShapeMismatchRejected) {
    std::vector<Tensor> pred{Tensor::from({2}, {0.5, 0.5})};
    std::vector<Tensor> target{one_hot(0, 3)};
    EXPECT_THROW(cce(pred, target), DimensionError);
}

TEST(Mse, PerfectPredictionIsZero) {
    Rng rng(53);
    std::vector<Tensor> x{random_tensor({2, 3}, rng)};
    EXPECT_DOUBLE_EQ(mse(x, x), 0.0);
}

TEST(Mse, SingleItemResidualOneOneIsTwo) {
    std::vector<Tensor> pred{Tensor::from({2}, {0.0, 0.0})};
    std::vector<Tensor> target{Tensor::from({2}, {1.0, 1.0})};
    EXPECT_DOUBLE_EQ(mse(pred, target), 2.0);
}

TEST(Mse, MatchesScalarLoopOracleAndIsSymmetric) {
    Rng rng(59);
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t batch = 1 + rng.below(6);
        std::vector<Tensor> pred, target;
        for (std::size_t i = 0; i < batch; ++i) {
            pred.push_back(random_tensor({2, 3, 3}, rng));
            target.push_back(random_tensor({2, 3, 3}, rng));
        }
        EXPECT_NEAR(mse(pred, target), mse_oracle(pred, target), 1e-12);
        EXPECT_NEAR(mse(pred, target), mse(target, pred), 1e-12);
        EXPECT_GE(mse(pred, target), 0.0);
    }
}

TEST(Mse, GradientMatchesFiniteDifferences) {
    Rng rng(61);
    std::vector<Tensor> pred{random_tensor({6}, rng), random_tensor({6}, rng)};
    std::vector<Tensor> target{random_tensor({6}, rng), random_tensor({6}, rng)};
    auto grads = mse_backward(pred, target);
    auto f = [&](const std::vector<double>& v) {
        std::vector<Tensor> p2 = pred;
        p2[1] = Tensor::from({6}, v);
        return mse(p2, target);
    };
    std::vector<double> x(pred[1].data(), pred[1].data() + 6);
    std::vector<double> g(grads[1].data(), grads[1].data() + 6);
    EXPECT_LT(grad_check(f, x, g), 1e-6);
}

TEST(Multitask, BoundariesAndArithmetic) {
    EXPECT_DOUBLE_EQ(multitask(3.25, 9.0, 0.0), 3.25);
    EXPECT_DOUBLE_EQ(multitask(3.25, 9.0, 1.0), 9.0);
    EXPECT_DOUBLE_EQ(multitask(1.0, 2.0, 0.01), 1.01);
    EXPECT_THROW(multitask(1.0, 2.0, -0.1), ConfigError);
    EXPECT_THROW(multitask(1.0, 2.0, 1.1), ConfigError);
}

TEST(Multitask, AffineAndMonotoneInBothArguments) {
    Rng rng(67);
    for (int trial = 0; trial < 20; ++trial) {
        double a = rng.uniform(0.05, 0.95);
        double l1 = rng.uniform(0.0, 5.0), l2 = rng.uniform(0.0, 5.0), d = rng.uniform(0.1, 2.0);
        EXPECT_GT(multitask(l1 + d, l2, a), multitask(l1, l2, a));
        EXPECT_GT(multitask(l1, l2 + d, a), multitask(l1, l2, a));
        // Affine: f(l1+d) - f(l1) == (1-a)*d
        EXPECT_NEAR(multitask(l1 + d, l2, a) - multitask(l1, l2, a), (1.0 - a) * d, 1e-12);
        EXPECT_NEAR(multitask(l1, l2 + d, a) - multitask(l1, l2, a), a * d, 1e-12);
    }
}

TEST(PriorReg, ZeroAtSnapshot) {
    Rng rng(71);
    std::vector<Tensor> theta{random_tensor({3, 3}, rng)};
    EXPECT_DOUBLE_EQ(prior_reg(theta, theta, 0.5), 0.0);
}

TEST(PriorReg, HandValue) {
    std::vector<Tensor> theta{Tensor::from({2}, {0.0, 0.0})};
    std::vector<Tensor> old{Tensor::from({2}, {2.0, 0.0})};  // squared distance 4
    EXPECT_NEAR(prior_reg(theta, old, 0.001), 0.002, 1e-15);
}

TEST(PriorReg, GradientMatchesFiniteDifferencesAndVanishesAtSnapshot) {
    Rng rng(73);
    Tensor theta = random_tensor({4}, rng);
    Tensor old = random_tensor({4}, rng);
    const double lambda = 0.37;
    Tensor grad({4}, 0.0);
    prior_reg_grad_acc(theta, old, lambda, grad);
    auto f = [&](const std::vector<double>& v) {
        std::vector<Tensor> t{Tensor::from({4}, v)};
        std::vector<Tensor> o{old};
        return prior_reg(t, o, lambda);
    };
    std::vector<double> x(theta.data(), theta.data() + 4);
    std::vector<double> g(grad.data(), grad.data() + 4);
    EXPECT_LT(grad_check(f, x, g, 1e-5), 1e-8);

    Tensor gz({4}, 0.0);
    prior_reg_grad_acc(old, old, lambda, gz);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(gz[i], 0.0);
}

TEST(PriorReg, SnapshotShapeMismatchIsConfigError) {
    std::vector<Tensor> theta{Tensor({2, 2}, 0.0)};
    std::vector<Tensor> old{Tensor({3, 2}, 0.0)};
    EXPECT_THROW(prior_reg(theta, old, 0.1), ConfigError);
}

TEST(Hoyer, OneHotScoresOne) {
    Tensor a = Tensor::from({4}, {0.0, 3.0, 0.0, 0.0});
    EXPECT_NEAR(hoyer_sparseness(a), 1.0, 1e-12);
    EXPECT_NEAR(hoyer_penalty(a, 2.0, 0.9), 2.0 * 0.01, 1e-12);
}

TEST(Hoyer, UniformScoresZero) {
    Tensor a({4}, 0.7);
    EXPECT_NEAR(hoyer_sparseness(a), 0.0, 1e-12);
}

TEST(Hoyer, ThreeOneExample) {
    // s([3,1]) = (sqrt(2) - 4/sqrt(10)) / (sqrt(2) - 1)
    Tensor a = Tensor::from({2}, {3.0, 1.0});
    const double expected = (std::sqrt(2.0) - 4.0 / std::sqrt(10.0)) / (std::sqrt(2.0) - 1.0);
    EXPECT_NEAR(hoyer_sparseness(a), expected, 1e-12);
    EXPECT_NEAR(hoyer_sparseness(a), 0.3604, 1e-4);
}

TEST(Hoyer, ScaleInvariant) {
    Rng rng(79);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor a = random_tensor({8}, rng, -2.0, 2.0);
        double c = rng.uniform(0.01, 100.0);
        Tensor b = a;
        b *= c;
        EXPECT_NEAR(hoyer_sparseness(a), hoyer_sparseness(b), 1e-12);
    }
}

TEST(Hoyer, AllZeroDegenerateCase) {
    Tensor a({4}, 0.0);
    EXPECT_DOUBLE_EQ(hoyer_sparseness(a), 0.0);
    EXPECT_DOUBLE_EQ(hoyer_penalty(a, 3.0, 0.9), 3.0 * 0.81);
    Tensor g = hoyer_penalty_grad(a, 3.0, 0.9);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(g[i], 0.0);
}

TEST(Hoyer, PenaltyGradientMatchesFiniteDifferences) {
    Rng rng(83);
    // Positive entries keep |a| smooth at the fd step.
    Tensor a = random_tensor({6}, rng, 0.2, 2.0);
    Tensor g = hoyer_penalty_grad(a, 1e-4, 0.9);
    auto f = [&](const std::vector<double>& v) {
        return hoyer_penalty(Tensor::from({6}, v), 1e-4, 0.9);
    };
    std::vector<double> x(a.data(), a.data() + 6);
    std::vector<double> gv(g.data(), g.data() + 6);
    EXPECT_LT(grad_check(f, x, gv, 1e-5, 1e-9), 1e-6);
}

TEST(L2, ValueAndGradient) {
    Tensor w = Tensor::from({2}, {3.0, 4.0});
    EXPECT_DOUBLE_EQ(l2_penalty(w, 0.001), 0.5 * 0.001 * 25.0);
    Tensor g({2}, 0.0);
    l2_grad_acc(w, 0.001, g);
    EXPECT_DOUBLE_EQ(g[0], 0.003);
    EXPECT_DOUBLE_EQ(g[1], 0.004);
}
