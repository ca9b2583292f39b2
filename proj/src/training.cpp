#include "ash/training.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

namespace ash {

PairSampler::PairSampler(const std::vector<ImageSample>& data, double similar_fraction,
                         std::uint64_t seed)
    : data_(&data), similar_fraction_(similar_fraction), rng_(seed, 0x9a17) {
    if (similar_fraction < 0.0 || similar_fraction > 1.0) {
        throw ContractError("similar_fraction must lie in [0, 1]");
    }
    if (data.empty()) throw DataError("cannot sample pairs from an empty dataset");
    int max_label = 0;
    for (const auto& s : data) max_label = std::max(max_label, s.label);
    by_class_.resize(static_cast<std::size_t>(max_label) + 1);
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data[i].label < 0) throw DataError("labels must be non-negative");
        by_class_[static_cast<std::size_t>(data[i].label)].push_back(
            static_cast<std::int64_t>(i));
    }
    for (const auto& members : by_class_) {
        if (members.size() >= 2) ++multi_member_classes_;
    }
}

std::pair<std::int64_t, std::int64_t> PairSampler::draw_pair(int y) {
    const auto& data = *data_;
    const std::uint64_t n = data.size();
    if (y == 0) {
        if (multi_member_classes_ == 0) {
            throw DataError("similar pair requested but every class is a singleton");
        }
        std::int64_t first;
        do {
            first = static_cast<std::int64_t>(rng_.next_below(n));
        } while (by_class_[static_cast<std::size_t>(data[first].label)].size() < 2);
        const auto& members = by_class_[static_cast<std::size_t>(data[first].label)];
        std::int64_t second;
        do {
            second = members[rng_.next_below(members.size())];
        } while (second == first);
        return {first, second};
    }
    std::size_t nonempty = 0;
    for (const auto& members : by_class_) nonempty += members.empty() ? 0 : 1;
    if (nonempty < 2) {
        throw DataError("dissimilar pair requested but only one class is present");
    }
    const auto first = static_cast<std::int64_t>(rng_.next_below(n));
    std::int64_t second;
    do {
        second = static_cast<std::int64_t>(rng_.next_below(n));
    } while (data[second].label == data[first].label);
    return {first, second};
}

std::vector<std::pair<std::int64_t, std::int64_t>> PairSampler::next_pair_ids(
    int n_pairs, std::vector<int>* y_out) {
    if (n_pairs < 1) throw ContractError("batch needs at least one pair");
    const int n_similar =
        static_cast<int>(std::floor(n_pairs * similar_fraction_ + 0.5));
    std::vector<int> ys(static_cast<std::size_t>(n_pairs), 1);
    for (int i = 0; i < n_similar; ++i) ys[static_cast<std::size_t>(i)] = 0;
    rng_.shuffle(ys);

    std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
    pairs.reserve(ys.size());
    for (const int y : ys) pairs.push_back(draw_pair(y));
    if (y_out) *y_out = std::move(ys);
    return pairs;
}

PairBatch PairSampler::next(int n_pairs) {
    PairBatch batch;
    const auto pairs = next_pair_ids(n_pairs, &batch.y);
    std::vector<ImageSample> left, right;
    left.reserve(pairs.size());
    right.reserve(pairs.size());
    for (const auto& [a, b] : pairs) {
        left.push_back((*data_)[static_cast<std::size_t>(a)]);
        right.push_back((*data_)[static_cast<std::size_t>(b)]);
        batch.left_ids.push_back(a);
        batch.right_ids.push_back(b);
    }
    batch.left = to_batch(left);
    batch.right = to_batch(right);
    return batch;
}

template <typename S>
SgdMomentum<S>::SgdMomentum(double lr, double momentum, double weight_decay)
    : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

template <typename S>
void SgdMomentum<S>::step(std::vector<ParamRef<S>>& params) {
    if (velocity_.empty()) {
        velocity_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            velocity_[i].assign(static_cast<std::size_t>(params[i].tensor->size()), S(0));
        }
    }
    if (velocity_.size() != params.size()) {
        throw ContractError("optimizer bound to a different parameter registry");
    }
    const S mu = static_cast<S>(momentum_);
    const S eta = static_cast<S>(lr_);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (!p.trainable) continue;
        auto& w = p.tensor->values_mut();
        const auto& g = p.tensor->grad;
        if (g.size() != w.size()) {
            throw ContractError("parameter " + p.name + " has no gradient of matching shape");
        }
        const S lambda = p.weight_decay ? static_cast<S>(weight_decay_) : S(0);
        auto& v = velocity_[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            v[j] = mu * v[j] + (g[j] + lambda * w[j]);
            w[j] -= eta * v[j];
        }
    }
}

TrainResult train(HashModel& model, const std::vector<ImageSample>& data, const TrainPlan& plan,
                  const LossConfig& loss_cfg, SgdMomentum<float>& opt) {
    if (data.empty()) throw DataError("training set is empty");
    if (plan.epochs < 1 || plan.batch_size < 1) {
        throw ContractError("epochs and batch_size must be >= 1");
    }
    const std::int64_t iters =
        (static_cast<std::int64_t>(data.size()) + plan.batch_size - 1) / plan.batch_size;
    PairSampler sampler(data, plan.similar_fraction, plan.seed);
    const double base_lr = opt.lr();

    TrainResult result;
    result.iterations_per_epoch = iters;
    result.epoch_loss.reserve(static_cast<std::size_t>(plan.epochs));
    for (int epoch = 1; epoch <= plan.epochs; ++epoch) {
        opt.set_lr(plan.lr_decay_epoch > 0 && epoch > plan.lr_decay_epoch
                       ? base_lr * plan.lr_decay_factor
                       : base_lr);
        double epoch_acc = 0.0;
        for (std::int64_t it = 0; it < iters; ++it) {
            PairBatch batch = sampler.next(plan.batch_size);
            Tape tape;
            for (auto& p : model.parameters()) tape.watch(*p.tensor);
            auto h1 = model.forward(batch.left, &tape, true);
            auto h2 = model.forward(batch.right, &tape, true);
            auto loss = pairwise_loss(h1, h2, batch.y, loss_cfg, &tape);
            const double value = static_cast<double>(loss.item());
            if (!std::isfinite(value)) {
                std::ostringstream os;
                os << "training diverged: loss=" << value << " at epoch " << epoch << " iter "
                   << (it + 1);
                throw DivergenceError(os.str());
            }
            tape.backward(loss);
            opt.step(model.parameters());
            epoch_acc += value;
        }
        result.epoch_loss.push_back(epoch_acc / static_cast<double>(iters));
        if (plan.verbose) {
            std::cerr << "epoch " << epoch << "/" << plan.epochs
                      << " loss=" << result.epoch_loss.back() << " lr=" << opt.lr() << "\n";
        }
    }
    return result;
}

template class SgdMomentum<float>;
template class SgdMomentum<double>;

}  // namespace ash
