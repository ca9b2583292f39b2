#include "ash/loss.hpp"

namespace ash {

template <typename S>
TensorT<S> pairwise_loss(const TensorT<S>& h1, const TensorT<S>& h2, const std::vector<int>& y,
                         const LossConfig& cfg, TapeT<S>* tape) {
    if (h1.shape.size() != 2 || h1.shape != h2.shape) {
        throw ShapeError("pairwise_loss expects matching n x k code matrices");
    }
    const std::int64_t n = h1.shape[0];
    if (h1.shape[1] != cfg.k) {
        throw ShapeError("code width " + std::to_string(h1.shape[1]) +
                         " does not match configured k=" + std::to_string(cfg.k));
    }
    if (static_cast<std::int64_t>(y.size()) != n) {
        throw ShapeError("label count does not match pair count");
    }
    if (cfg.r < 0.0 || cfg.r > 1.0) throw ContractError("r must lie in [0, 1]");
    std::vector<S> sim_w(n), dis_w(n);
    for (std::int64_t i = 0; i < n; ++i) {
        if (y[i] != 0 && y[i] != 1) throw ContractError("labels must be 0 or 1");
        sim_w[i] = S(0.5) * (S(1) - static_cast<S>(y[i]));
        dis_w[i] = S(0.5) * static_cast<S>(y[i]);
    }

    auto diff = sub(h1, h2, tape);
    auto dist = row_sum(mul(diff, diff, tape), tape);  // squared L2 per pair
    if (cfg.distance == DistanceMode::L2) dist = sqrt_elem(dist, tape);

    const auto sim_weights = TensorT<S>::from({n}, std::move(sim_w));
    const auto dis_weights = TensorT<S>::from({n}, std::move(dis_w));
    auto hinge = relu(add_scalar(scale(dist, -1.0, tape), cfg.r * cfg.k, tape), tape);
    auto per_pair = add(mul(dist, sim_weights, tape), mul(hinge, dis_weights, tape), tape);
    return mean_all(per_pair, tape);
}

template TensorT<float> pairwise_loss<float>(const TensorT<float>&, const TensorT<float>&,
                                             const std::vector<int>&, const LossConfig&,
                                             TapeT<float>*);
template TensorT<double> pairwise_loss<double>(const TensorT<double>&, const TensorT<double>&,
                                               const std::vector<int>&, const LossConfig&,
                                               TapeT<double>*);

}  // namespace ash
