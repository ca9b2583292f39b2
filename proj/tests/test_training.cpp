#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ash/training.hpp"
#include "test_util.hpp"

using namespace ash;

namespace {

// Tiny two-class image set: class means differ, plus deterministic jitter.
std::vector<ImageSample> toy_dataset(int per_class, int classes = 2, int side = 8) {
    std::vector<ImageSample> data;
    CounterRng rng(99);
    std::int64_t id = 0;
    for (int c = 0; c < classes; ++c) {
        for (int i = 0; i < per_class; ++i, ++id) {
            ImageSample s;
            s.id = id;
            s.label = c;
            s.channels = 1;
            s.height = side;
            s.width = side;
            s.pixels.resize(static_cast<std::size_t>(side) * side);
            const float base = 0.25f + 0.5f * static_cast<float>(c) / std::max(1, classes - 1);
            for (auto& v : s.pixels) {
                v = base + 0.05f * static_cast<float>(rng.next_double() - 0.5);
            }
            data.push_back(std::move(s));
        }
    }
    return data;
}

AshConfig toy_config(std::uint64_t seed = 1) {
    AshConfig cfg;
    cfg.arch = Arch::U;
    cfg.k = 4;
    cfg.in_channels = 1;
    cfg.in_h = 8;
    cfg.in_w = 8;
    cfg.widths = {4, 6};
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("stratified sampling hits the exact similar count") {
    const auto data = toy_dataset(20);
    PairSampler sampler(data, 0.5, 3);
    std::vector<int> y;
    const auto pairs = sampler.next_pair_ids(100, &y);
    REQUIRE(pairs.size() == 100);
    int similar = 0;
    for (const int v : y) similar += v == 0 ? 1 : 0;
    CHECK(similar == 50);
}

TEST_CASE("sampled labels match class equality of the drawn items") {
    const auto data = toy_dataset(15, 3);
    PairSampler sampler(data, 0.4, 5);
    std::vector<int> y;
    const auto pairs = sampler.next_pair_ids(200, &y);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto [a, b] = pairs[i];
        CHECK(a != b);
        const bool same = data[static_cast<std::size_t>(a)].label ==
                          data[static_cast<std::size_t>(b)].label;
        CHECK(y[i] == (same ? 0 : 1));
    }
}

TEST_CASE("identical seeds replay the identical pair stream") {
    const auto data = toy_dataset(12, 3);
    PairSampler a(data, 0.5, 17), b(data, 0.5, 17), c(data, 0.5, 18);
    std::vector<int> ya, yb, yc;
    const auto pa = a.next_pair_ids(60, &ya);
    const auto pb = b.next_pair_ids(60, &yb);
    const auto pc = c.next_pair_ids(60, &yc);
    CHECK(pa == pb);
    CHECK(ya == yb);
    CHECK(pa != pc);
}

TEST_CASE("impossible sampling constraints raise data errors") {
    // All classes singletons: similar pairs cannot exist.
    std::vector<ImageSample> singletons;
    for (int c = 0; c < 3; ++c) {
        ImageSample s;
        s.id = c;
        s.label = c;
        s.channels = 1;
        s.height = 2;
        s.width = 2;
        s.pixels.assign(4, 0.5f);
        singletons.push_back(std::move(s));
    }
    PairSampler sim(singletons, 1.0, 1);
    CHECK_THROWS_AS(sim.next_pair_ids(4, nullptr), DataError);

    // Single class: dissimilar pairs cannot exist.
    auto one_class = toy_dataset(6, 1);
    PairSampler dis(one_class, 0.0, 1);
    CHECK_THROWS_AS(dis.next_pair_ids(4, nullptr), DataError);
    PairSampler ok(one_class, 1.0, 1);
    CHECK_NOTHROW(ok.next_pair_ids(4, nullptr));
}

TEST_CASE("sgd momentum step: direct substitution") {
    TensorT<float> w = Tensor::from({1}, {1.f});
    w.grad = {0.1f};
    std::vector<ParamRef<float>> params{{"w", &w, true, true}};
    SgdMomentum<float> opt(0.1, 0.9, 0.001);
    opt.step(params);
    // v = 0.9 * 0 + (0.1 + 0.001 * 1) = 0.101; w = 1 - 0.1 * 0.101 = 0.9899
    CHECK(w.values()[0] == doctest::Approx(0.9899).epsilon(1e-6));
}

TEST_CASE("sgd with zero gradient and no decay leaves parameters alone") {
    TensorT<float> w = Tensor::from({3}, {1.f, -2.f, 0.5f});
    w.grad = {0.f, 0.f, 0.f};
    std::vector<ParamRef<float>> params{{"w", &w, true, true}};
    SgdMomentum<float> opt(0.1, 0.9, 0.0);
    opt.step(params);
    CHECK(w.values() == std::vector<float>{1.f, -2.f, 0.5f});
}

TEST_CASE("two sgd steps with constant gradient match the unrolled recurrence") {
    const double g = 0.3, mu = 0.9, lambda = 0.001, eta = 0.05;
    double w_ref = 2.0, v_ref = 0.0;
    for (int step = 0; step < 2; ++step) {
        v_ref = mu * v_ref + (g + lambda * w_ref);
        w_ref = w_ref - eta * v_ref;
    }

    TensorT<float> w = Tensor::from({1}, {2.f});
    std::vector<ParamRef<float>> params{{"w", &w, true, true}};
    SgdMomentum<float> opt(eta, mu, lambda);
    for (int step = 0; step < 2; ++step) {
        w.grad = {static_cast<float>(g)};
        opt.step(params);
    }
    CHECK(w.values()[0] == doctest::Approx(w_ref).epsilon(1e-5));
}

TEST_CASE("weight decay skips biases and batchnorm affine parameters") {
    HashModel model(toy_config());
    for (const auto& p : model.parameters()) {
        const bool is_weight = p.name.size() > 7 &&
                               p.name.rfind(".weight") == p.name.size() - 7;
        CHECK(p.weight_decay == is_weight);
    }
}

TEST_CASE("epoch iteration count is ceil(n / batch)") {
    const auto data = toy_dataset(20);  // 40 images
    HashModel model(toy_config());
    SgdMomentum<float> opt(0.001);
    TrainPlan plan;
    plan.epochs = 1;
    plan.batch_size = 16;
    LossConfig loss_cfg;
    loss_cfg.k = 4;
    const auto result = train(model, data, plan, loss_cfg, opt);
    CHECK(result.iterations_per_epoch == 3);  // ceil(40 / 16)
    CHECK(result.epoch_loss.size() == 1);
}

TEST_CASE("training is deterministic end to end") {
    const auto data = toy_dataset(10);
    const auto run = [&](std::uint64_t seed) {
        HashModel model(toy_config(seed));
        SgdMomentum<float> opt(0.01);
        TrainPlan plan;
        plan.epochs = 2;
        plan.batch_size = 5;
        plan.seed = 11;
        LossConfig loss_cfg;
        loss_cfg.k = 4;
        const auto result = train(model, data, plan, loss_cfg, opt);
        std::vector<float> flat;
        for (const auto& p : model.state()) {
            flat.insert(flat.end(), p.tensor->values().begin(), p.tensor->values().end());
        }
        return std::make_pair(result.epoch_loss, flat);
    };
    const auto [loss_a, params_a] = run(1);
    const auto [loss_b, params_b] = run(1);
    const auto [loss_c, params_c] = run(2);
    CHECK(loss_a == loss_b);
    CHECK(params_a == params_b);
    CHECK(params_a != params_c);
}

TEST_CASE("gradients flow through both siamese branches of the shared model") {
    HashModel model(toy_config(5));
    const auto x1 = testutil::uniform_tensor<float>({2, 1, 8, 8}, 50, 0.0, 1.0);
    const auto x2 = testutil::uniform_tensor<float>({2, 1, 8, 8}, 51, 0.0, 1.0);
    const std::vector<int> y{0, 1};
    LossConfig cfg;
    cfg.k = 4;

    auto grads_of = [&](bool track_left, bool track_right) {
        Tape tape;
        for (auto& p : model.parameters()) tape.watch(*p.tensor);
        auto h1 = model.forward(x1, track_left ? &tape : nullptr, false);
        auto h2 = model.forward(x2, track_right ? &tape : nullptr, false);
        auto loss = pairwise_loss(h1, h2, y, cfg, &tape);
        tape.backward(loss);
        std::vector<float> flat;
        for (const auto& p : model.parameters()) {
            flat.insert(flat.end(), p.tensor->grad.begin(), p.tensor->grad.end());
        }
        return flat;
    };

    const auto both = grads_of(true, true);
    const auto left_only = grads_of(true, false);
    const auto right_only = grads_of(false, true);
    REQUIRE(both.size() == left_only.size());
    double max_diff = 0.0;
    int nonzero = 0;
    for (std::size_t i = 0; i < both.size(); ++i) {
        max_diff = std::max(max_diff,
                            std::abs(static_cast<double>(both[i]) - left_only[i] - right_only[i]));
        if (both[i] != 0.f) ++nonzero;
    }
    CHECK(max_diff < 1e-5);
    CHECK(nonzero > 0);
}

TEST_CASE("every trainable parameter receives gradient on a generic batch") {
    HashModel model(toy_config(6));
    const auto data = toy_dataset(10);
    PairSampler sampler(data, 0.5, 2);
    auto batch = sampler.next(8);
    Tape tape;
    for (auto& p : model.parameters()) tape.watch(*p.tensor);
    auto loss = pairwise_loss(model.forward(batch.left, &tape, true),
                              model.forward(batch.right, &tape, true), batch.y,
                              LossConfig{0.5, 4, DistanceMode::SquaredL2}, &tape);
    tape.backward(loss);
    for (const auto& p : model.parameters()) {
        // Conv biases feeding BN are absorbed by design; everything else must
        // see a nonzero gradient.
        const bool absorbed_bias =
            p.name.find("conv") != std::string::npos &&
            p.name.rfind(".bias") == p.name.size() - 5;
        if (absorbed_bias) continue;
        double norm = 0.0;
        for (const float v : p.tensor->grad) norm += std::abs(static_cast<double>(v));
        CHECK_MESSAGE(norm > 0.0, p.name);
    }
}

TEST_CASE("training rejects an empty dataset") {
    HashModel model(toy_config());
    SgdMomentum<float> opt(0.01);
    TrainPlan plan;
    LossConfig loss_cfg;
    loss_cfg.k = 4;
    const std::vector<ImageSample> empty;
    CHECK_THROWS_AS(train(model, empty, plan, loss_cfg, opt), DataError);
}

TEST_CASE("divergence aborts with a diagnostic") {
    auto cfg = toy_config(8);
    cfg.head = Head::Linear;  // sigmoid bounds the loss; linear can blow up
    HashModel model(cfg);
    const auto data = toy_dataset(10);
    SgdMomentum<float> opt(1e14);
    TrainPlan plan;
    plan.epochs = 50;
    plan.batch_size = 10;
    LossConfig loss_cfg;
    loss_cfg.k = 4;
    CHECK_THROWS_AS(train(model, data, plan, loss_cfg, opt), DivergenceError);
}

TEST_CASE("the residual architecture trains end to end") {
    AshConfig cfg;
    cfg.arch = Arch::L;
    cfg.k = 4;
    cfg.in_channels = 1;
    cfg.in_h = 8;
    cfg.in_w = 8;
    cfg.widths = {4, 6, 8};
    cfg.seed = 3;
    HashModel model(cfg);
    const auto data = toy_dataset(8);
    SgdMomentum<float> opt(0.02);
    TrainPlan plan;
    plan.epochs = 2;
    plan.batch_size = 8;
    plan.seed = 5;
    LossConfig loss_cfg;
    loss_cfg.k = 4;
    const auto result = train(model, data, plan, loss_cfg, opt);
    REQUIRE(result.epoch_loss.size() == 2);
    for (const double v : result.epoch_loss) CHECK(std::isfinite(v));

    const auto codes = encode_batch(model, to_batch({data[0], data[8]}));
    CHECK(codes.shape == Shape{2, 4});
    CHECK(all_finite(codes));
}

TEST_CASE("a short training run reduces the pairwise loss") {
    const auto data = toy_dataset(20);
    HashModel model(toy_config(7));
    SgdMomentum<float> opt(0.05);
    TrainPlan plan;
    plan.epochs = 5;
    plan.batch_size = 8;
    plan.seed = 3;
    LossConfig loss_cfg;
    loss_cfg.k = 4;
    const auto result = train(model, data, plan, loss_cfg, opt);
    REQUIRE(result.epoch_loss.size() == 5);
    CHECK(result.epoch_loss.back() < result.epoch_loss.front());
}
