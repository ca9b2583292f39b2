#include "ash/layers.hpp"

#include <cmath>

namespace ash {

template <typename S>
ConvLayerT<S>::ConvLayerT(int in_ch, int out_ch, int stride_)
    : weight(TensorT<S>::zeros({out_ch, in_ch, 3, 3})),
      bias(TensorT<S>::zeros({out_ch})),
      stride(stride_),
      pad(1) {}

template <typename S>
ConvLayerT<S> ConvLayerT<S>::pointwise(int in_ch, int out_ch, int stride) {
    ConvLayerT layer;
    layer.weight = TensorT<S>::zeros({out_ch, in_ch, 1, 1});
    layer.bias = TensorT<S>::zeros({out_ch});
    layer.stride = stride;
    layer.pad = 0;
    return layer;
}

template <typename S>
TensorT<S> ConvLayerT<S>::forward(const TensorT<S>& x, TapeT<S>* tape) const {
    return conv2d(x, weight, bias, stride, pad, tape);
}

template <typename S>
BatchNormT<S>::BatchNormT(int channels)
    : gamma(TensorT<S>::ones({channels})),
      beta(TensorT<S>::zeros({channels})),
      running_mean(TensorT<S>::zeros({channels})),
      running_var(TensorT<S>::ones({channels})) {}

template <typename S>
TensorT<S> BatchNormT<S>::forward(const TensorT<S>& x, TapeT<S>* tape, bool training) {
    return batchnorm2d(x, gamma, beta, running_mean, running_var, eps, momentum, training, tape);
}

template <typename S>
DenseLayerT<S>::DenseLayerT(int in_dim, int out_dim)
    : weight(TensorT<S>::zeros({out_dim, in_dim})), bias(TensorT<S>::zeros({out_dim})) {}

template <typename S>
TensorT<S> DenseLayerT<S>::forward(const TensorT<S>& x, TapeT<S>* tape) const {
    return dense(x, weight, bias, tape);
}

template <typename S>
ResidualBlockT<S>::ResidualBlockT(int in_ch, int out_ch, int stride)
    : conv1(in_ch, out_ch, stride),
      conv2(out_ch, out_ch, 1),
      bn1(out_ch),
      bn2(out_ch) {
    if (in_ch != out_ch || stride != 1) {
        proj = ConvLayerT<S>::pointwise(in_ch, out_ch, stride);
        proj_bn.emplace(out_ch);
    }
}

template <typename S>
TensorT<S> ResidualBlockT<S>::forward(const TensorT<S>& x, TapeT<S>* tape, bool training) {
    auto h = relu(bn1.forward(conv1.forward(x, tape), tape, training), tape);
    h = bn2.forward(conv2.forward(h, tape), tape, training);
    TensorT<S> shortcut = x;
    if (proj) {
        shortcut = proj_bn->forward(proj->forward(x, tape), tape, training);
    }
    return relu(add(h, shortcut, tape), tape);
}

namespace {

template <typename S>
void fill_normal(TensorT<S>& t, CounterRng& rng, double stddev) {
    auto& v = t.values_mut();
    for (auto& x : v) x = static_cast<S>(rng.next_normal() * stddev);
}

}  // namespace

template <typename S>
void he_init(ConvLayerT<S>& layer, CounterRng& rng) {
    const auto& ws = layer.weight.shape;
    const double fan_in = static_cast<double>(ws[1] * ws[2] * ws[3]);
    fill_normal(layer.weight, rng, std::sqrt(2.0 / fan_in));
    layer.bias = TensorT<S>::zeros(layer.bias.shape);
}

template <typename S>
void he_init(BatchNormT<S>& layer, CounterRng&) {
    layer.gamma = TensorT<S>::ones(layer.gamma.shape);
    layer.beta = TensorT<S>::zeros(layer.beta.shape);
    layer.running_mean = TensorT<S>::zeros(layer.running_mean.shape);
    layer.running_var = TensorT<S>::ones(layer.running_var.shape);
}

template <typename S>
void he_init(DenseLayerT<S>& layer, CounterRng& rng) {
    const double fan_in = static_cast<double>(layer.weight.shape[1]);
    fill_normal(layer.weight, rng, std::sqrt(2.0 / fan_in));
    layer.bias = TensorT<S>::zeros(layer.bias.shape);
}

template <typename S>
void he_init(ResidualBlockT<S>& block, CounterRng& rng) {
    he_init(block.conv1, rng);
    he_init(block.bn1, rng);
    he_init(block.conv2, rng);
    he_init(block.bn2, rng);
    if (block.proj) he_init(*block.proj, rng);
    if (block.proj_bn) he_init(*block.proj_bn, rng);
}

#define ASH_INSTANTIATE_LAYERS(S)                         \
    template struct ConvLayerT<S>;                        \
    template struct BatchNormT<S>;                        \
    template struct DenseLayerT<S>;                       \
    template struct ResidualBlockT<S>;                    \
    template void he_init<S>(ConvLayerT<S>&, CounterRng&); \
    template void he_init<S>(BatchNormT<S>&, CounterRng&); \
    template void he_init<S>(DenseLayerT<S>&, CounterRng&); \
    template void he_init<S>(ResidualBlockT<S>&, CounterRng&);

ASH_INSTANTIATE_LAYERS(float)
ASH_INSTANTIATE_LAYERS(double)

#undef ASH_INSTANTIATE_LAYERS

}  // namespace ash
