#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ash/dataset.hpp"
#include "ash/loss.hpp"
#include "ash/model.hpp"
#include "ash/rng.hpp"
#include "ash/tensor.hpp"

namespace ash {

struct PairBatch {
    TensorT<float> left, right;  // n x C x H x W each
    std::vector<int> y;          // 0 = same class, 1 = different class
    std::vector<std::int64_t> left_ids, right_ids;
};

// Stratified pair stream: each batch holds round(n * similar_fraction)
// similar pairs, order shuffled, items drawn uniformly under the constraint.
// Deterministic given the seed.
class PairSampler {
public:
    PairSampler(const std::vector<ImageSample>& data, double similar_fraction,
                std::uint64_t seed);

    PairBatch next(int n_pairs);
    // Sampling core without image assembly; y_out receives the labels.
    std::vector<std::pair<std::int64_t, std::int64_t>> next_pair_ids(int n_pairs,
                                                                     std::vector<int>* y_out);

private:
    std::pair<std::int64_t, std::int64_t> draw_pair(int y);

    const std::vector<ImageSample>* data_;
    double similar_fraction_;
    CounterRng rng_;
    std::vector<std::vector<std::int64_t>> by_class_;
    std::int64_t multi_member_classes_ = 0;
};

// SGD with momentum: v <- mu * v + (g + lambda * w); w <- w - lr * v.
// Weight decay applies only to entries flagged weight_decay.
template <typename S = float>
class SgdMomentum {
public:
    explicit SgdMomentum(double lr, double momentum = 0.9, double weight_decay = 0.001);

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }
    double momentum() const { return momentum_; }
    double weight_decay() const { return weight_decay_; }

    void step(std::vector<ParamRef<S>>& params);

private:
    double lr_, momentum_, weight_decay_;
    std::vector<std::vector<S>> velocity_;
};

struct TrainPlan {
    int epochs = 50;
    int batch_size = 10;
    std::uint64_t seed = 7;
    double similar_fraction = 0.5;
    int lr_decay_epoch = 40;      // epochs beyond this one run at lr * lr_decay_factor; 0 = off
    double lr_decay_factor = 0.1;
    bool verbose = false;         // one stderr line per epoch
};

struct TrainResult {
    std::vector<double> epoch_loss;  // mean batch loss per epoch
    std::int64_t iterations_per_epoch = 0;
};

// Siamese training: both pair halves run through the one shared model, the
// pairwise loss backpropagates through both branches, and SGD updates the
// registry in place. One epoch is ceil(|data| / batch_size) pair batches.
// A non-finite loss aborts with DivergenceError.
TrainResult train(HashModel& model, const std::vector<ImageSample>& data, const TrainPlan& plan,
                  const LossConfig& loss_cfg, SgdMomentum<float>& opt);

}  // namespace ash
