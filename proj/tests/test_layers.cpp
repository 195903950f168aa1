#include "plastic/layers.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "plastic/activations.hpp"
#include "test_util.hpp"

using namespace plastic;
using testutil::grad_check;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

/// Projects a tensor onto fixed random weights to get a scalar objective,
/// so finite differences probe the full Jacobian at once.
double project(const Tensor& t, const Tensor& weights) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) acc += t[i] * weights[i];
    return acc;
}

std::vector<double> to_vec(const Tensor& t) {
    return std::vector<double>(t.data(), t.data() + t.size());
}

Tensor from_vec(const std::vector<std::size_t>& shape, const std::vector<double>& v) {
    return Tensor::from(shape, v);
}

}  // namespace

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

TEST(Activations, SigmoidAtZeroIsHalf) {
    Tensor z = Tensor::from({1}, {0.0});
    EXPECT_DOUBLE_EQ(activate(Activation::Sigmoid, z)[0], 0.5);
}

TEST(Activations, TanhEqualsScaledSigmoidIdentity) {
    for (double y : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
        Tensor t = activate(Activation::Tanh, Tensor::from({1}, {y}));
        Tensor s = activate(Activation::Sigmoid, Tensor::from({1}, {2.0 * y}));
        EXPECT_NEAR(t[0], 2.0 * s[0] - 1.0, 1e-12);
    }
}

TEST(Activations, SoftmaxUniformOnEqualInputs) {
    Tensor y = activate(Activation::Softmax, Tensor::from({2}, {0.0, 0.0}));
    EXPECT_DOUBLE_EQ(y[0], 0.5);
    EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(Activations, SoftmaxSumsToOneAndStaysInUnitInterval) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor z = random_tensor({10}, rng, -500.0, 500.0);
        Tensor y = activate(Activation::Softmax, z);
        double sum = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            EXPECT_GE(y[i], 0.0);
            EXPECT_LE(y[i], 1.0);
            EXPECT_TRUE(std::isfinite(y[i]));
            sum += y[i];
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
    // Moderate inputs stay strictly inside (0,1).
    Tensor y = activate(Activation::Softmax, Tensor::from({3}, {-1.0, 0.0, 2.0}));
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_GT(y[i], 0.0);
        EXPECT_LT(y[i], 1.0);
    }
}

TEST(Activations, SigmoidTanhRangesWithoutOverflow) {
    Rng rng(6);
    for (int trial = 0; trial < 200; ++trial) {
        double v = rng.uniform(-500.0, 500.0);
        Tensor z = Tensor::from({1}, {v});
        double s = activate(Activation::Sigmoid, z)[0];
        double t = activate(Activation::Tanh, z)[0];
        EXPECT_TRUE(std::isfinite(s));
        EXPECT_TRUE(std::isfinite(t));
        EXPECT_GE(s, 0.0);
        EXPECT_LE(s, 1.0);
        EXPECT_GE(t, -1.0);
        EXPECT_LE(t, 1.0);
    }
    // Strict interior for all moderate inputs.
    for (double v : {-30.0, -1.0, 0.0, 1.0, 30.0}) {
        double s = activate(Activation::Sigmoid, Tensor::from({1}, {v}))[0];
        EXPECT_GT(s, 0.0);
        EXPECT_LT(s, 1.0);
    }
}

// ---------------------------------------------------------------------------
// Forward behaviour
// ---------------------------------------------------------------------------

TEST(LayerForward, DenseIdentityPassesInputThrough) {
    DenseSpec spec{3, Activation::Identity};
    Tensor w({3, 3}, 0.0);
    for (std::size_t i = 0; i < 3; ++i) w(i, i) = 1.0;
    Tensor b({3}, 0.0);
    LayerParams params{&w, &b};
    Rng rng(1);
    Tensor x = Tensor::from({3}, {0.1, -2.0, 3.5});
    Tensor y = layer_forward(LayerSpec{spec}, params, {}, x, Mode::Eval, rng, nullptr);
    EXPECT_LT(max_abs_diff(x, y), 1e-15);
}

TEST(LayerForward, DropoutEvalIsExactIdentity) {
    DropoutSpec spec{0.5};
    Rng rng(2);
    Tensor x = random_tensor({4, 3, 3}, rng);
    Tensor y = layer_forward(LayerSpec{spec}, {}, {}, x, Mode::Eval, rng, nullptr);
    EXPECT_EQ(to_vec(x), to_vec(y));
}

TEST(LayerForward, DenseDecodeRestoresTiedInputShape) {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        std::size_t c = 1 + rng.below(3), h = 1 + rng.below(4), w = 1 + rng.below(4);
        std::size_t units = 1 + rng.below(6);
        Tensor enc_w = random_tensor({units, c * h * w}, rng);
        TiedContext tied;
        tied.tied_weights = &enc_w;
        tied.tied_input_shape = {c, h, w};
        Tensor z = random_tensor({units}, rng);
        Tensor y = layer_forward(LayerSpec{DenseDecodeSpec{0, Activation::Sigmoid}}, {}, tied, z,
                                 Mode::Eval, rng, nullptr);
        EXPECT_EQ(y.shape(), (std::vector<std::size_t>{c, h, w}));
    }
}

TEST(LayerForward, DropoutTrainMeanMatchesEvalWithinTwoPercent) {
    DropoutSpec spec{0.5};
    Rng data_rng(4);
    Tensor x = random_tensor({40}, data_rng, 0.5, 1.5);
    Tensor sum({40}, 0.0);
    Rng rng(99);
    const int draws = 20000;
    for (int i = 0; i < draws; ++i) {
        Tensor y = layer_forward(LayerSpec{spec}, {}, {}, x, Mode::Train, rng, nullptr);
        sum += y;
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        double mean = sum[i] / draws;
        EXPECT_NEAR(mean, x[i], 0.02 * std::abs(x[i]));
    }
}

TEST(LayerBackward, MissingCacheIsUsageError) {
    ForwardCache cache;  // never filled
    Tensor g({3}, 1.0);
    Tensor w({3, 3}, 0.0), b({3}, 0.0);
    LayerParams params{&w, &b};
    EXPECT_THROW(
        layer_backward(LayerSpec{DenseSpec{3, Activation::Identity}}, params, {}, cache, g),
        UsageError);
}

TEST(LayerBackward, DenseIdentityPropagatesGradUnchanged) {
    DenseSpec spec{3, Activation::Identity};
    Tensor w({3, 3}, 0.0);
    for (std::size_t i = 0; i < 3; ++i) w(i, i) = 1.0;
    Tensor b({3}, 0.0);
    LayerParams params{&w, &b};
    Rng rng(7);
    Tensor x = Tensor::from({3}, {1.0, 2.0, 3.0});
    ForwardCache cache;
    layer_forward(LayerSpec{spec}, params, {}, x, Mode::Train, rng, &cache);
    Tensor g = Tensor::from({3}, {0.3, -0.7, 1.1});
    auto [gin, grads] = layer_backward(LayerSpec{spec}, params, {}, cache, g);
    EXPECT_LT(max_abs_diff(gin, g), 1e-15);
}

TEST(LayerBackward, ReluAllNegativePreactsGiveZeroGrad) {
    DenseSpec spec{3, Activation::Relu};
    Tensor w({3, 2}, 0.0);
    Tensor b = Tensor::from({3}, {-1.0, -2.0, -0.5});
    LayerParams params{&w, &b};
    Rng rng(8);
    Tensor x = Tensor::from({2}, {0.0, 0.0});
    ForwardCache cache;
    layer_forward(LayerSpec{spec}, params, {}, x, Mode::Train, rng, &cache);
    auto [gin, grads] = layer_backward(LayerSpec{spec}, params, {}, cache, Tensor({3}, 1.0));
    for (std::size_t i = 0; i < gin.size(); ++i) EXPECT_DOUBLE_EQ(gin[i], 0.0);
}

TEST(LayerBackward, MaxPoolRoutesEachGradientToExactlyOnePosition) {
    Rng rng(9);
    Tensor x = random_tensor({2, 4, 4}, rng);
    MaxPoolSpec spec{2, 2};
    ForwardCache cache;
    layer_forward(LayerSpec{spec}, {}, {}, x, Mode::Train, rng, &cache);
    Tensor g = random_tensor({2, 2, 2}, rng);
    auto [gin, grads] = layer_backward(LayerSpec{spec}, {}, {}, cache, g);
    double gsum = 0.0, ginsum = 0.0;
    std::size_t nonzero = 0;
    for (std::size_t i = 0; i < g.size(); ++i) gsum += g[i];
    for (std::size_t i = 0; i < gin.size(); ++i) {
        ginsum += gin[i];
        if (gin[i] != 0.0) ++nonzero;
    }
    EXPECT_NEAR(gsum, ginsum, 1e-12);
    EXPECT_LE(nonzero, g.size());
}

// ---------------------------------------------------------------------------
// Finite-difference checks, every layer kind
// ---------------------------------------------------------------------------

namespace {

struct FdCase {
    LayerSpec spec;
    Tensor weights;  // owning layers
    Tensor bias;
    Tensor enc_weights;  // tied layers
    std::vector<std::size_t> tied_input_shape;
    PoolIndexMap pool_index;
    bool has_params = false;
    bool tied = false;
    bool uses_pool = false;
};

/// Runs forward with a fixed rng seed so dropout masks are identical across
/// finite-difference evaluations.
Tensor run_forward(const FdCase& fd, const Tensor& x, ForwardCache* cache) {
    Rng rng(4242);
    LayerParams params;
    TiedContext tied;
    if (fd.has_params) params = {&fd.weights, &fd.bias};
    if (fd.tied) {
        tied.tied_weights = &fd.enc_weights;
        tied.tied_input_shape = fd.tied_input_shape;
    }
    if (fd.uses_pool) {
        tied.pool_index = &fd.pool_index;
        tied.tied_input_shape = fd.tied_input_shape;
    }
    return layer_forward(fd.spec, params, tied, x, Mode::Train, rng, cache);
}

void check_layer_gradients(FdCase& fd, const Tensor& x, double tol = 1e-6) {
    Rng wrng(777);
    ForwardCache cache;
    Tensor y = run_forward(fd, x, &cache);
    Tensor proj = random_tensor(y.shape(), wrng);

    LayerParams params;
    TiedContext tied;
    if (fd.has_params) params = {&fd.weights, &fd.bias};
    if (fd.tied) {
        tied.tied_weights = &fd.enc_weights;
        tied.tied_input_shape = fd.tied_input_shape;
    }
    if (fd.uses_pool) {
        tied.pool_index = &fd.pool_index;
        tied.tied_input_shape = fd.tied_input_shape;
    }
    auto [gin, grads] = layer_backward(fd.spec, params, tied, cache, proj);

    // Gradient w.r.t. the input.
    auto f_input = [&](const std::vector<double>& v) {
        Tensor xx = from_vec(x.shape(), v);
        return project(run_forward(fd, xx, nullptr), proj);
    };
    EXPECT_LT(grad_check(f_input, to_vec(x), to_vec(gin)), tol) << "input grad";

    // Gradient w.r.t. owned or tied weights.
    if (fd.has_params) {
        auto f_w = [&](const std::vector<double>& v) {
            FdCase c2 = fd;
            c2.weights = from_vec(fd.weights.shape(), v);
            return project(run_forward(c2, x, nullptr), proj);
        };
        EXPECT_LT(grad_check(f_w, to_vec(fd.weights), to_vec(*grads.weights)), tol) << "weight grad";
        auto f_b = [&](const std::vector<double>& v) {
            FdCase c2 = fd;
            c2.bias = from_vec(fd.bias.shape(), v);
            return project(run_forward(c2, x, nullptr), proj);
        };
        EXPECT_LT(grad_check(f_b, to_vec(fd.bias), to_vec(*grads.bias)), tol) << "bias grad";
    }
    if (fd.tied) {
        auto f_w = [&](const std::vector<double>& v) {
            FdCase c2 = fd;
            c2.enc_weights = from_vec(fd.enc_weights.shape(), v);
            return project(run_forward(c2, x, nullptr), proj);
        };
        EXPECT_LT(grad_check(f_w, to_vec(fd.enc_weights), to_vec(*grads.weights)), tol)
            << "tied weight grad";
    }
}

}  // namespace

TEST(LayerGradients, ConvMatchesFiniteDifferences) {
    Rng rng(11);
    for (Activation act : {Activation::Sigmoid, Activation::Tanh, Activation::Identity}) {
        FdCase fd;
        fd.spec = ConvSpec{2, 3, 3, act};
        fd.weights = random_tensor({2, 3, 3, 3}, rng);
        fd.bias = random_tensor({2}, rng);
        fd.has_params = true;
        Tensor x = random_tensor({3, 6, 6}, rng);
        check_layer_gradients(fd, x);
    }
}

TEST(LayerGradients, ConvReluMatchesFiniteDifferencesAwayFromKink) {
    Rng rng(12);
    FdCase fd;
    fd.spec = ConvSpec{2, 3, 3, Activation::Relu};
    fd.weights = random_tensor({2, 1, 3, 3}, rng);
    fd.bias = Tensor::from({2}, {0.37, -0.41});  // keeps pre-activations off zero
    fd.has_params = true;
    Tensor x = random_tensor({1, 6, 6}, rng, 0.2, 1.0);
    check_layer_gradients(fd, x);
}

TEST(LayerGradients, DenseMatchesFiniteDifferences) {
    Rng rng(13);
    for (Activation act : {Activation::Sigmoid, Activation::Softmax}) {
        FdCase fd;
        fd.spec = DenseSpec{4, act};
        fd.weights = random_tensor({4, 12}, rng);
        fd.bias = random_tensor({4}, rng);
        fd.has_params = true;
        Tensor x = random_tensor({3, 2, 2}, rng);
        check_layer_gradients(fd, x);
    }
}

TEST(LayerGradients, MaxPoolMatchesFiniteDifferences) {
    Rng rng(14);
    FdCase fd;
    fd.spec = MaxPoolSpec{2, 2};
    // Margins well above the fd step keep the argmax stable.
    Tensor x({2, 4, 4});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>((i * 37) % 32) + rng.uniform(0.0, 0.3);
    check_layer_gradients(fd, x);
}

TEST(LayerGradients, DropoutMatchesFiniteDifferences) {
    Rng rng(15);
    FdCase fd;
    fd.spec = DropoutSpec{0.4};
    Tensor x = random_tensor({10}, rng);
    check_layer_gradients(fd, x);
}

TEST(LayerGradients, DenseDecodeMatchesFiniteDifferences) {
    Rng rng(16);
    FdCase fd;
    fd.spec = DenseDecodeSpec{0, Activation::Sigmoid};
    fd.enc_weights = random_tensor({5, 12}, rng);
    fd.tied_input_shape = {3, 2, 2};
    fd.tied = true;
    Tensor z = random_tensor({5}, rng);
    check_layer_gradients(fd, z);
}

TEST(LayerGradients, ConvDecodeMatchesFiniteDifferences) {
    Rng rng(17);
    FdCase fd;
    fd.spec = ConvDecodeSpec{0, Activation::Sigmoid};
    fd.enc_weights = random_tensor({2, 3, 3, 3}, rng);  // [M=2, C=3, 3, 3]
    fd.tied_input_shape = {3, 6, 6};
    fd.tied = true;
    Tensor x = random_tensor({2, 4, 4}, rng);  // M maps of the encoder output size
    check_layer_gradients(fd, x);
}

TEST(LayerGradients, UnpoolMatchesFiniteDifferences) {
    Rng rng(18);
    Tensor pre = random_tensor({2, 4, 4}, rng, 0.0, 1.0);
    auto [pooled, map] = maxpool2d(pre, 2, 2);
    FdCase fd;
    fd.spec = UnpoolSpec{0};
    fd.pool_index = map;
    fd.tied_input_shape = {2, 4, 4};
    fd.uses_pool = true;
    Tensor x = random_tensor({2, 2, 2}, rng);
    check_layer_gradients(fd, x);
}
