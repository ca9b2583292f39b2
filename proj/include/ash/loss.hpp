#pragma once

#include <vector>

#include "ash/tensor.hpp"

namespace ash {

enum class DistanceMode { SquaredL2, L2 };

struct LossConfig {
    double r = 0.5;  // margin weight in [0, 1]; the margin is r * k
    int k = 12;
    DistanceMode distance = DistanceMode::SquaredL2;
};

// Contrastive pairwise loss, mean over the batch of
//   0.5 * (1 - y) * D + 0.5 * y * max(r * k - D, 0)
// with y = 0 for same-class pairs and D the (squared) Euclidean distance
// between code rows. The hinge gradient at the boundary is 0.
template <typename S>
TensorT<S> pairwise_loss(const TensorT<S>& h1, const TensorT<S>& h2, const std::vector<int>& y,
                         const LossConfig& cfg, TapeT<S>* tape = nullptr);

}  // namespace ash
