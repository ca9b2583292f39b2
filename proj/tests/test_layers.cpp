#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ash/gradcheck.hpp"
#include "ash/layers.hpp"
#include "test_util.hpp"

using namespace ash;
using testutil::uniform_tensor;

using DTensor = TensorT<double>;
using DTape = TapeT<double>;

TEST_CASE("he_init is deterministic per seed") {
    ConvLayerT<float> a(3, 8), b(3, 8), c(3, 8);
    he_init_seeded(a, 7);
    he_init_seeded(b, 7);
    he_init_seeded(c, 8);
    CHECK(a.weight.values() == b.weight.values());
    CHECK(a.weight.values() != c.weight.values());
    CHECK(a.bias.values() == std::vector<float>(8, 0.f));
}

TEST_CASE("he_init weight variance tracks 2 / fan_in") {
    // 64 * 3 * 3 = 576 fan-in, > 1e4 weight draws.
    ConvLayerT<double> conv(64, 18);
    he_init_seeded(conv, 11);
    const auto& w = conv.weight.values();
    REQUIRE(w.size() >= 10000);
    double mean = 0.0;
    for (const double v : w) mean += v;
    mean /= static_cast<double>(w.size());
    double var = 0.0;
    for (const double v : w) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.size());
    const double target = 2.0 / 576.0;
    CHECK(var > 0.9 * target);
    CHECK(var < 1.1 * target);
}

TEST_CASE("freshly initialized batchnorm passes standardized input through") {
    BatchNormT<float> bn(2);
    CounterRng rng(3);
    he_init(bn, rng);
    // Input constructed with zero mean and unit variance per channel.
    const auto x = Tensor::from({1, 2, 1, 4}, {-1.f, 1.f, -1.f, 1.f, -1.f, -1.f, 1.f, 1.f});
    const auto y = bn.forward(x, nullptr, true);
    for (std::int64_t i = 0; i < x.size(); ++i) {
        CHECK(y.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-4));
    }
}

TEST_CASE("batchnorm hand case: values 1 and 3 in one channel") {
    BatchNormT<float> bn(1);
    const auto x = Tensor::from({2, 1, 1, 1}, {1.f, 3.f});
    const auto y = bn.forward(x, nullptr, true);
    CHECK(y.values()[0] == doctest::Approx(-0.999995).epsilon(1e-6));
    CHECK(y.values()[1] == doctest::Approx(0.999995).epsilon(1e-6));

    BatchNormT<float> bn2(1);
    bn2.gamma = Tensor::from({1}, {2.f});
    bn2.beta = Tensor::from({1}, {1.f});
    const auto y2 = bn2.forward(x, nullptr, true);
    CHECK(y2.values()[0] == doctest::Approx(-0.99999).epsilon(1e-5));
    CHECK(y2.values()[1] == doctest::Approx(2.99999).epsilon(1e-5));
}

TEST_CASE("batchnorm eval mode uses the running statistics") {
    BatchNormT<float> bn(1);
    bn.gamma = Tensor::from({1}, {1.5f});
    bn.beta = Tensor::from({1}, {0.25f});
    const auto x = Tensor::from({1, 1, 2, 2}, {0.f, 1.f, -2.f, 4.f});
    const auto y = bn.forward(x, nullptr, false);
    for (std::int64_t i = 0; i < 4; ++i) {
        const double expect =
            static_cast<double>(x.values()[i]) / std::sqrt(1.0 + 1e-5) * 1.5 + 0.25;
        CHECK(y.values()[i] == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("batchnorm training mode rejects single-value channels") {
    BatchNormT<float> bn(3);
    const auto x = uniform_tensor<float>({1, 3, 1, 1}, 5);
    CHECK_THROWS_AS(bn.forward(x, nullptr, true), ContractError);
    CHECK_NOTHROW(bn.forward(x, nullptr, false));
}

TEST_CASE("batchnorm training output is standardized per channel") {
    for (int trial = 0; trial < 10; ++trial) {
        BatchNormT<float> bn(3);
        const float gamma_value = 0.5f + 0.25f * static_cast<float>(trial);
        bn.gamma = Tensor::full({3}, gamma_value);
        const auto x = uniform_tensor<float>({4, 3, 5, 5}, 900 + trial, -3.0, 3.0);
        const auto y = bn.forward(x, nullptr, true);
        const std::int64_t hw = 25, n = 4, c = 3;
        for (std::int64_t ci = 0; ci < c; ++ci) {
            double mean = 0.0, var = 0.0;
            for (std::int64_t ni = 0; ni < n; ++ni) {
                for (std::int64_t p = 0; p < hw; ++p) {
                    mean += y.values()[(ni * c + ci) * hw + p];
                }
            }
            mean /= static_cast<double>(n * hw);
            for (std::int64_t ni = 0; ni < n; ++ni) {
                for (std::int64_t p = 0; p < hw; ++p) {
                    const double d = y.values()[(ni * c + ci) * hw + p] - mean;
                    var += d * d;
                }
            }
            var /= static_cast<double>(n * hw);
            const double g2 = static_cast<double>(gamma_value) * gamma_value;
            CHECK(std::abs(mean) < 1e-5);
            CHECK(var > (1.0 - 1e-3) * g2);
            CHECK(var < (1.0 + 1e-3) * g2);
        }
    }
}

TEST_CASE("batchnorm updates running statistics with momentum 0.9") {
    BatchNormT<float> bn(1);
    const auto x = Tensor::from({2, 1, 1, 1}, {1.f, 3.f});  // mean 2, var 1
    bn.forward(x, nullptr, true);
    CHECK(bn.running_mean.values()[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.0).epsilon(1e-6));
    CHECK(bn.running_var.values()[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0).epsilon(1e-6));
}

TEST_CASE("dense layer analytic cases") {
    DenseLayerT<float> eye(3, 3);
    eye.weight = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    const auto x = uniform_tensor<float>({2, 3}, 21);
    CHECK(testutil::approx_equal(eye.forward(x).values(), x.values(), 1e-6));

    DenseLayerT<float> biased(3, 2);
    biased.bias = Tensor::from({2}, {0.5f, -2.f});
    const auto zero = Tensor::zeros({4, 3});
    const auto y = biased.forward(zero);
    for (std::int64_t i = 0; i < 4; ++i) {
        CHECK(y.values()[i * 2 + 0] == 0.5f);
        CHECK(y.values()[i * 2 + 1] == -2.f);
    }
}

TEST_CASE("conv layer with zero weights emits its bias") {
    ConvLayerT<float> conv(2, 1);
    conv.bias = Tensor::from({1}, {0.75f});
    const auto x = uniform_tensor<float>({1, 2, 4, 4}, 23);
    const auto y = conv.forward(x);
    for (const float v : y.values()) CHECK(v == 0.75f);
}

TEST_CASE("residual block with zeroed branch is relu of the shortcut") {
    ResidualBlockT<float> block(3, 3, 1);  // identity shortcut
    REQUIRE_FALSE(block.proj.has_value());
    const auto x = uniform_tensor<float>({2, 3, 4, 4}, 31, -1.0, 1.0);
    const auto y = block.forward(x, nullptr, true);
    const auto expect = relu(x);
    CHECK(y.values() == expect.values());
}

TEST_CASE("residual block shape contract under stride 2 and width change") {
    ResidualBlockT<float> block(16, 32, 2);
    REQUIRE(block.proj.has_value());
    CounterRng rng(33);
    he_init(block, rng);
    const auto x = uniform_tensor<float>({2, 16, 32, 32}, 34);
    CHECK(block.forward(x, nullptr, true).shape == Shape{2, 32, 16, 16});
}

TEST_CASE("residual block gradients match finite differences on a toy block") {
    ResidualBlockT<double> block(4, 4, 1);
    CounterRng rng(41);
    he_init(block, rng);
    const auto x = uniform_tensor<double>({1, 4, 6, 6}, 42);
    const auto w = uniform_tensor<double>({1, 4, 6, 6}, 43, 0.2, 1.0);
    const double err = finite_diff_check<double>(
        [&](const DTensor& p, DTape* t) {
            auto y = mul(block.forward(p, t, true), w, t);
            return mean_all(mul(y, y, t), t);
        },
        x);
    CHECK(err < 1e-4);
}
