#pragma once

#include <optional>

#include "ash/rng.hpp"
#include "ash/tensor.hpp"

namespace ash {

// 3x3 convolution with bias; shortcut projections use the 1x1 variant.
template <typename S>
struct ConvLayerT {
    TensorT<S> weight;  // O x C x KH x KW
    TensorT<S> bias;    // O
    int stride = 1;
    int pad = 1;

    ConvLayerT() = default;
    ConvLayerT(int in_ch, int out_ch, int stride = 1);
    static ConvLayerT pointwise(int in_ch, int out_ch, int stride);

    TensorT<S> forward(const TensorT<S>& x, TapeT<S>* tape = nullptr) const;
};

template <typename S>
struct BatchNormT {
    TensorT<S> gamma, beta;
    TensorT<S> running_mean, running_var;
    double eps = 1e-5;
    double momentum = 0.9;

    BatchNormT() = default;
    explicit BatchNormT(int channels);

    TensorT<S> forward(const TensorT<S>& x, TapeT<S>* tape, bool training);
};

template <typename S>
struct DenseLayerT {
    TensorT<S> weight;  // out x in
    TensorT<S> bias;    // out

    DenseLayerT() = default;
    DenseLayerT(int in_dim, int out_dim);

    TensorT<S> forward(const TensorT<S>& x, TapeT<S>* tape = nullptr) const;
};

// ReLU( BN2(Conv2( ReLU(BN1(Conv1(x))) )) + shortcut(x) ). The shortcut is
// the identity, or a 1x1 stride-matched projection conv + BN when the channel
// count or stride changes.
template <typename S>
struct ResidualBlockT {
    ConvLayerT<S> conv1, conv2;
    BatchNormT<S> bn1, bn2;
    std::optional<ConvLayerT<S>> proj;
    std::optional<BatchNormT<S>> proj_bn;

    ResidualBlockT() = default;
    ResidualBlockT(int in_ch, int out_ch, int stride = 1);

    TensorT<S> forward(const TensorT<S>& x, TapeT<S>* tape, bool training);
};

// Weights ~ N(0, 2 / fan_in), biases 0, gamma 1, beta 0, running stats (0, 1).
// Draws come off the rng in declaration order, so one rng threaded through a
// stack initializes it deterministically.
template <typename S>
void he_init(ConvLayerT<S>& layer, CounterRng& rng);
template <typename S>
void he_init(BatchNormT<S>& layer, CounterRng& rng);
template <typename S>
void he_init(DenseLayerT<S>& layer, CounterRng& rng);
template <typename S>
void he_init(ResidualBlockT<S>& block, CounterRng& rng);

template <typename L>
void he_init_seeded(L& layer, std::uint64_t seed) {
    CounterRng rng(seed);
    he_init(layer, rng);
}

}  // namespace ash
