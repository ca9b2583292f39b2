#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ash/attention.hpp"
#include "ash/gradcheck.hpp"
#include "test_util.hpp"

using namespace ash;
using testutil::uniform_tensor;

using DTensor = TensorT<double>;
using DTape = TapeT<double>;

namespace {

// Direct scalar-loop transcription of the gate definition, kept independent
// of the tensor ops on purpose.
std::vector<double> attention_oracle(const std::vector<double>& x, std::int64_t n,
                                     std::int64_t c, std::int64_t h, std::int64_t w) {
    std::vector<double> out(x.size());
    for (std::int64_t ni = 0; ni < n; ++ni) {
        for (std::int64_t hi = 0; hi < h; ++hi) {
            for (std::int64_t wi = 0; wi < w; ++wi) {
                double mx = -1e300, sum = 0.0;
                for (std::int64_t ci = 0; ci < c; ++ci) {
                    const double v = x[((ni * c + ci) * h + hi) * w + wi];
                    mx = std::max(mx, v);
                    sum += v;
                }
                const double avg = sum / static_cast<double>(c);
                const double gate = 1.0 / (1.0 + std::exp(-(mx * avg)));
                for (std::int64_t ci = 0; ci < c; ++ci) {
                    const std::int64_t idx = ((ni * c + ci) * h + hi) * w + wi;
                    out[idx] = x[idx] * gate;
                }
            }
        }
    }
    return out;
}

}  // namespace

TEST_CASE("attention of zero input is zero") {
    const auto x = Tensor::zeros({2, 3, 4, 4});
    const auto y = spatial_attention(x);
    CHECK(y.shape == x.shape);
    for (const float v : y.values()) CHECK(v == 0.f);
}

TEST_CASE("attention of all-ones input is sigmoid(1)") {
    const auto x = Tensor::ones({1, 4, 3, 3});
    const auto y = spatial_attention(x);
    for (const float v : y.values()) {
        CHECK(static_cast<double>(v) == doctest::Approx(0.731059).epsilon(1e-6));
    }
}

TEST_CASE("attention pixel with channel values (2, -2) halves both") {
    const auto x = Tensor::from({1, 2, 1, 1}, {2.f, -2.f});
    const auto y = spatial_attention(x);
    // max 2, mean 0, gate sigmoid(0) = 0.5
    CHECK(y.values()[0] == doctest::Approx(1.f).epsilon(1e-6));
    CHECK(y.values()[1] == doctest::Approx(-1.f).epsilon(1e-6));
}

TEST_CASE("attention matches the scalar-loop oracle on random tensors") {
    for (int trial = 0; trial < 100; ++trial) {
        const auto x = uniform_tensor<double>({2, 3, 4, 4}, 4000 + trial, -2.0, 2.0);
        const auto y = spatial_attention(x);
        const auto expect = attention_oracle(x.values(), 2, 3, 4, 4);
        CHECK(testutil::max_abs_diff(y.values(), expect) < 1e-6);
    }
}

TEST_CASE("attention preserves shape and only attenuates") {
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = uniform_tensor<float>({2, 5, 3, 3}, 4200 + trial, -4.0, 4.0);
        const auto y = spatial_attention(x);
        REQUIRE(y.shape == x.shape);
        for (std::int64_t i = 0; i < x.size(); ++i) {
            CHECK(std::abs(y.values()[i]) <= std::abs(x.values()[i]));
        }
    }
}

TEST_CASE("attention gate is shared across channels") {
    const auto x = uniform_tensor<float>({2, 4, 3, 3}, 4400, 0.5, 2.0);
    const auto y = spatial_attention(x);
    const std::int64_t hw = 9;
    for (std::int64_t n = 0; n < 2; ++n) {
        for (std::int64_t p = 0; p < hw; ++p) {
            const double ratio0 = y.values()[(n * 4 + 0) * hw + p] / x.values()[(n * 4 + 0) * hw + p];
            for (std::int64_t c = 1; c < 4; ++c) {
                const double ratio = y.values()[(n * 4 + c) * hw + p] / x.values()[(n * 4 + c) * hw + p];
                CHECK(ratio == doctest::Approx(ratio0).epsilon(1e-5));
                CHECK(ratio > 0.0);
                CHECK(ratio < 1.0);
            }
        }
    }
}

TEST_CASE("channel max scales covariantly for positive scalars") {
    const auto x = uniform_tensor<float>({1, 3, 4, 4}, 4500, -2.0, 2.0);
    const float alpha = 2.5f;
    const auto lhs = channel_reduce(ReduceKind::Max, scale(x, alpha));
    const auto rhs = scale(channel_reduce(ReduceKind::Max, x), alpha);
    CHECK(testutil::max_abs_diff(lhs.values(), rhs.values()) < 1e-6);
}

TEST_CASE("attention gradients match finite differences") {
    for (int trial = 0; trial < 5; ++trial) {
        const auto x = uniform_tensor<double>({1, 3, 3, 3}, 4600 + trial, -1.5, 1.5);
        const double err = finite_diff_check<double>(
            [](const DTensor& p, DTape* t) {
                auto y = spatial_attention(p, t);
                return mean_all(mul(y, y, t), t);
            },
            x);
        CHECK(err < 1e-4);
    }
}
