#pragma once

#include "ash/tensor.hpp"

namespace ash {

// Parameter-free spatial gate: out = x * sigmoid(channel_max(x) * channel_mean(x)),
// with the N x 1 x H x W gate broadcast over channels. Shape preserving, fully
// differentiable, and attenuation-only since the gate lies in (0, 1).
template <typename S>
TensorT<S> spatial_attention(const TensorT<S>& x, TapeT<S>* tape = nullptr);

}  // namespace ash
