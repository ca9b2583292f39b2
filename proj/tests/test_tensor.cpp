#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ash/gradcheck.hpp"
#include "ash/tensor.hpp"
#include "test_util.hpp"

using namespace ash;
using testutil::uniform_tensor;

using DTensor = TensorT<double>;
using DTape = TapeT<double>;

TEST_CASE("randn_seeded is bit-identical for equal seed and shape") {
    const auto a = randn_seeded<float>({2, 2}, 7);
    const auto b = randn_seeded<float>({2, 2}, 7);
    CHECK(a.values() == b.values());
    const auto c = randn_seeded<float>({2, 2}, 8);
    CHECK(a.values() != c.values());
}

TEST_CASE("randn_seeded sample statistics match a standard normal") {
    const auto t = randn_seeded<double>({100000}, 1);
    double mean = 0.0;
    for (const double v : t.values()) mean += v;
    mean /= static_cast<double>(t.size());
    double var = 0.0;
    for (const double v : t.values()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(t.size());
    CHECK(mean > -0.02);
    CHECK(mean < 0.02);
    CHECK(var > 0.97);
    CHECK(var < 1.03);
}

TEST_CASE("randn_seeded rejects non-positive dims") {
    CHECK_THROWS_AS(randn_seeded<float>({0}, 1), ShapeError);
    CHECK_THROWS_AS(randn_seeded<float>({2, -1}, 1), ShapeError);
    CHECK_THROWS_AS(randn_seeded<float>({}, 1), ShapeError);
}

TEST_CASE("elementwise mul and add analytic cases") {
    const auto a = Tensor::from({3}, {1.f, -2.f, 3.f});
    const auto b = Tensor::from({3}, {2.f, 2.f, 2.f});
    CHECK(mul(a, b).values() == std::vector<float>{2.f, -4.f, 6.f});

    const auto x = uniform_tensor<float>({2, 3, 4}, 11);
    const auto z = Tensor::zeros({2, 3, 4});
    CHECK(add(x, z).values() == x.values());

    CHECK(elementwise(Binary::Add, a, b).values() == std::vector<float>{3.f, 0.f, 5.f});
    CHECK(elementwise(Binary::Mul, a, b).values() == mul(a, b).values());

    CHECK_THROWS_AS(add(a, Tensor::zeros({4})), ShapeError);
}

TEST_CASE("gate broadcast replicates across channels") {
    const auto gate = uniform_tensor<float>({2, 1, 4, 4}, 3);
    const auto x = uniform_tensor<float>({2, 3, 4, 4}, 4);
    const auto out = mul(gate, x);
    REQUIRE(out.shape == Shape{2, 3, 4, 4});
    // Every channel slice must equal x .* gate for that (n, h, w).
    const auto& ov = out.values();
    const auto& xv = x.values();
    const auto& gv = gate.values();
    for (std::int64_t n = 0; n < 2; ++n) {
        for (std::int64_t c = 0; c < 3; ++c) {
            for (std::int64_t p = 0; p < 16; ++p) {
                const float expect = xv[(n * 3 + c) * 16 + p] * gv[n * 16 + p];
                CHECK(ov[(n * 3 + c) * 16 + p] == doctest::Approx(expect).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("matmul analytic cases") {
    const auto eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    const auto a = uniform_tensor<float>({3, 3}, 5);
    CHECK(testutil::approx_equal(matmul(eye, a).values(), a.values(), 1e-6));

    const auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
    const auto v = Tensor::from({2, 1}, {1, 1});
    CHECK(matmul(m, v).values() == std::vector<float>{3.f, 7.f});

    CHECK_THROWS_AS(matmul(uniform_tensor<float>({2, 3}, 1), uniform_tensor<float>({2, 3}, 2)),
                    ShapeError);
}

TEST_CASE("activation analytic cases") {
    const auto x = Tensor::from({3}, {-1.f, 0.f, 2.f});
    CHECK(relu(x).values() == std::vector<float>{0.f, 0.f, 2.f});
    CHECK(activation(Activation::Relu, x).values() == relu(x).values());

    CHECK(sigmoid(Tensor::from({1}, {0.f})).item() == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(static_cast<double>(sigmoid(Tensor::from({1}, {1.f})).item()) ==
          doctest::Approx(0.731059).epsilon(1e-6));
}

TEST_CASE("backward of sum gives all-ones gradient") {
    Tensor x = uniform_tensor<float>({2, 3}, 9);
    Tape tape;
    tape.watch(x);
    auto out = sum_all(x, &tape);
    tape.backward(out);
    CHECK(x.grad == std::vector<float>(6, 1.f));
}

TEST_CASE("backward of sum of squares") {
    Tensor x = Tensor::from({2}, {1.f, -2.f});
    Tape tape;
    tape.watch(x);
    auto out = sum_all(mul(x, x, &tape), &tape);
    tape.backward(out);
    CHECK(x.grad == std::vector<float>{2.f, -4.f});
}

TEST_CASE("backward rejects non-scalar targets and untracked tensors") {
    Tensor x = uniform_tensor<float>({2, 2}, 13);
    Tape tape;
    tape.watch(x);
    auto y = mul(x, x, &tape);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
    Tape other;
    CHECK_THROWS_AS(other.backward(sum_all(x)), ContractError);
}

TEST_CASE("finite_diff_check on a linear function is near exact") {
    const auto point = uniform_tensor<double>({5}, 21);
    const double err = finite_diff_check<double>(
        [](const DTensor& x, DTape* t) { return sum_all(scale(x, 3.0, t), t); }, point);
    CHECK(err < 1e-10);
}

TEST_CASE("finite_diff_check on sigmoid sum, with hand-checked derivative at 0") {
    const auto point = uniform_tensor<double>({6}, 22, -2.0, 2.0);
    const double err = finite_diff_check<double>(
        [](const DTensor& x, DTape* t) { return sum_all(sigmoid(x, t), t); }, point);
    CHECK(err < 1e-6);

    // sigma'(0) = 0.25 exactly.
    DTensor zero = DTensor::zeros({1});
    DTape tape;
    tape.watch(zero);
    auto out = sum_all(sigmoid(zero, &tape), &tape);
    tape.backward(out);
    CHECK(zero.grad[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("finite_diff_check excludes flagged nondifferentiable coordinates") {
    DTensor point = DTensor::from({3}, {-1.0, 0.0, 2.0});
    FdOptions opt;
    opt.exclude = {1};  // relu kink at exactly 0
    const double err = finite_diff_check<double>(
        [](const DTensor& x, DTape* t) { return sum_all(relu(x, t), t); }, point, opt);
    CHECK(err < 1e-10);
}

TEST_CASE("gradient checks across random points for core ops") {
    for (int trial = 0; trial < 20; ++trial) {
        const std::uint64_t seed = 100 + trial;
        const auto x = uniform_tensor<double>({2, 5}, seed, -2.0, 2.0);

        const double e_mul = finite_diff_check<double>(
            [&](const DTensor& p, DTape* t) {
                auto other = uniform_tensor<double>({2, 5}, seed + 1000);
                return sum_all(mul(p, other, t), t);
            },
            x);
        CHECK(e_mul < 1e-4);

        const double e_matmul = finite_diff_check<double>(
            [&](const DTensor& p, DTape* t) {
                auto other = uniform_tensor<double>({5, 3}, seed + 2000);
                return sum_all(mul(matmul(p, other, t), matmul(p, other, t), t), t);
            },
            x);
        CHECK(e_matmul < 1e-4);

        const double e_sig = finite_diff_check<double>(
            [](const DTensor& p, DTape* t) { return sum_all(sigmoid(p, t), t); }, x);
        CHECK(e_sig < 1e-4);

        const double e_relu = finite_diff_check<double>(
            [](const DTensor& p, DTape* t) { return sum_all(mul(relu(p, t), relu(p, t), t), t); },
            x);
        CHECK(e_relu < 1e-4);

        const double e_bcast = finite_diff_check<double>(
            [&](const DTensor& p, DTape* t) {
                auto maps = reshape(p, {2, 1, 1, 5}, t);
                auto g2 = uniform_tensor<double>({2, 3, 1, 5}, seed + 4000);
                return sum_all(mul(maps, g2, t), t);
            },
            x);
        CHECK(e_bcast < 1e-4);

        const auto row = uniform_tensor<double>({3, 4}, seed + 5000, -2.0, 2.0);
        const double e_row = finite_diff_check<double>(
            [](const DTensor& p, DTape* t) {
                return mean_all(mul(row_sum(p, t), row_sum(p, t), t), t);
            },
            row);
        CHECK(e_row < 1e-4);

        const auto pos = uniform_tensor<double>({6}, seed + 6000, 0.5, 3.0);
        const double e_sqrt = finite_diff_check<double>(
            [](const DTensor& p, DTape* t) { return sum_all(sqrt_elem(p, t), t); }, pos);
        CHECK(e_sqrt < 1e-4);

        const double e_dense = finite_diff_check<double>(
            [&](const DTensor& p, DTape* t) {
                auto w = uniform_tensor<double>({4, 5}, seed + 7000);
                auto b = uniform_tensor<double>({4}, seed + 8000);
                auto y = dense(p, w, b, t);
                return sum_all(mul(y, y, t), t);
            },
            x);
        CHECK(e_dense < 1e-4);
    }
}

TEST_CASE("dense weight and bias gradients check out") {
    const auto x = uniform_tensor<double>({3, 4}, 31);
    const auto w0 = uniform_tensor<double>({2, 4}, 32);
    const auto b0 = uniform_tensor<double>({2}, 33);
    const double ew = finite_diff_check<double>(
        [&](const DTensor& w, DTape* t) {
            auto y = dense(x, w, b0, t);
            return sum_all(mul(y, y, t), t);
        },
        w0);
    CHECK(ew < 1e-6);
    const double eb = finite_diff_check<double>(
        [&](const DTensor& b, DTape* t) {
            auto y = dense(x, w0, b, t);
            return sum_all(mul(y, y, t), t);
        },
        b0);
    CHECK(eb < 1e-6);
}

TEST_CASE("ops are pure: identical inputs give bit-identical outputs") {
    const auto a = uniform_tensor<float>({4, 4}, 41);
    const auto b = uniform_tensor<float>({4, 4}, 42);
    CHECK(matmul(a, b).values() == matmul(a, b).values());
    CHECK(sigmoid(a).values() == sigmoid(a).values());
    CHECK(add(a, b).values() == add(a, b).values());
}

TEST_CASE("output shapes are pure functions of input shapes") {
    CounterRng rng(77);
    for (int trial = 0; trial < 30; ++trial) {
        const std::int64_t m = 1 + static_cast<std::int64_t>(rng.next_below(5));
        const std::int64_t k = 1 + static_cast<std::int64_t>(rng.next_below(5));
        const std::int64_t n = 1 + static_cast<std::int64_t>(rng.next_below(5));
        const auto a = uniform_tensor<float>({m, k}, trial);
        const auto b = uniform_tensor<float>({k, n}, trial + 500);
        CHECK(matmul(a, b).shape == Shape{m, n});

        const std::int64_t c = 1 + static_cast<std::int64_t>(rng.next_below(4));
        const auto x = uniform_tensor<float>({m, c, k, n}, trial + 600);
        const auto gate = uniform_tensor<float>({m, 1, k, n}, trial + 700);
        CHECK(mul(x, gate).shape == Shape{m, c, k, n});
        CHECK(row_sum(a).shape == Shape{m});
    }
}

TEST_CASE("reshape preserves data and flows gradients") {
    Tensor x = uniform_tensor<float>({2, 6}, 55);
    const auto r = reshape(x, {3, 4});
    CHECK(r.values() == x.values());
    CHECK_THROWS_AS(reshape(x, {5, 2}), ShapeError);

    Tape tape;
    tape.watch(x);
    auto out = sum_all(mul(reshape(x, {3, 4}, &tape), reshape(x, {3, 4}, &tape), &tape), &tape);
    tape.backward(out);
    for (std::int64_t i = 0; i < x.size(); ++i) {
        CHECK(x.grad[i] == doctest::Approx(2.f * x.values()[i]).epsilon(1e-5));
    }
}

TEST_CASE("copy-on-write keeps tensor values immutable through copies") {
    Tensor x = Tensor::from({2}, {1.f, 2.f});
    Tensor y = x;
    y.values_mut()[0] = 9.f;
    CHECK(x.values()[0] == 1.f);
    CHECK(y.values()[0] == 9.f);
}
