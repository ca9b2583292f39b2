#include "ash/attention.hpp"

namespace ash {

template <typename S>
TensorT<S> spatial_attention(const TensorT<S>& x, TapeT<S>* tape) {
    if (x.shape.size() != 4) throw ShapeError("spatial_attention expects N x C x H x W");
    auto mx = channel_reduce(ReduceKind::Max, x, tape);
    auto av = channel_reduce(ReduceKind::Mean, x, tape);
    auto gate = sigmoid(mul(mx, av, tape), tape);
    return mul(x, gate, tape);
}

template TensorT<float> spatial_attention<float>(const TensorT<float>&, TapeT<float>*);
template TensorT<double> spatial_attention<double>(const TensorT<double>&, TapeT<double>*);

}  // namespace ash
