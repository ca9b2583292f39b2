#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "ash/errors.hpp"

namespace ash {

using Shape = std::vector<std::int64_t>;

// Product of dims; throws ShapeError on empty shape or non-positive dims.
std::int64_t shape_numel(const Shape& shape);
std::vector<std::int64_t> row_major_strides(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename S>
class TapeT;

// Dense row-major tensor. The value buffer is shared on copy and
// copied-on-write by values_mut(), so tensors behave as immutable values.
template <typename S>
struct TensorT {
    Shape shape;
    std::shared_ptr<std::vector<S>> buf;
    std::vector<S> grad;  // filled for watched leaves by TapeT::backward
    int node = -1;        // node id on the active tape; -1 = untracked

    TensorT() = default;
    TensorT(Shape s, std::vector<S> values);

    static TensorT zeros(const Shape& s);
    static TensorT full(const Shape& s, S value);
    static TensorT ones(const Shape& s) { return full(s, S(1)); }
    static TensorT from(Shape s, std::vector<S> values) {
        return TensorT(std::move(s), std::move(values));
    }

    std::int64_t size() const;
    const std::vector<S>& values() const;
    std::vector<S>& values_mut();  // copy-on-write; never mutate a tensor a live tape has seen
    S item() const;                // requires size() == 1
    TensorT detached() const;      // shares the buffer, drops node/grad
};

// Reverse-mode tape. Ops append nodes in execution order, which is already
// topological; backward replays them in reverse, skipping nodes no gradient
// reached. One tape per training step; a tape is single-threaded.
template <typename S>
class TapeT {
public:
    // Registers a trainable leaf. After backward(), leaf.grad holds its
    // gradient (zeros if the loss never reached it) and the leaf's node id
    // resets so a fresh tape can watch it again.
    int watch(TensorT<S>& leaf);

    // Reverse accumulation from a one-element output recorded on this tape.
    void backward(const TensorT<S>& scalar_out);

    // Recording interface used by ops. The closure receives the accumulated
    // output gradient and pushes contributions into input nodes.
    using BackFn = std::function<void(TapeT&, const std::vector<S>&)>;
    int record(std::int64_t out_size, BackFn back);
    bool has_grad(int node) const;
    const std::vector<S>& grad_at(int node) const;
    // No-op when node < 0, so ops can push to untracked inputs freely.
    void accumulate(int node, const S* g, std::int64_t n);
    // Moves g in when the node has no gradient yet; adds otherwise.
    void accumulate(int node, std::vector<S>&& g);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct NodeRec {
        BackFn back;
        std::int64_t size;
    };
    std::vector<NodeRec> nodes_;
    std::vector<std::vector<S>> grads_;
    std::vector<std::pair<int, TensorT<S>*>> leaves_;
    bool ran_backward_ = false;
};

using Tensor = TensorT<float>;
using Tape = TapeT<float>;

enum class Binary { Add, Mul };
enum class Activation { Relu, Sigmoid };
enum class PoolKind { Max, Avg };
enum class ReduceKind { Max, Mean };

// ---- construction ----

// Standard-normal samples from CounterRng + Box-Muller; identical
// seed + shape give bit-identical output.
template <typename S>
TensorT<S> randn_seeded(const Shape& shape, std::uint64_t seed);

// ---- elementwise; right-aligned broadcasting with size-1 expansion ----

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b, TapeT<S>* tape = nullptr);
template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b, TapeT<S>* tape = nullptr);
template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b, TapeT<S>* tape = nullptr);
template <typename S>
TensorT<S> elementwise(Binary op, const TensorT<S>& a, const TensorT<S>& b,
                       TapeT<S>* tape = nullptr);

template <typename S>
TensorT<S> scale(const TensorT<S>& x, double c, TapeT<S>* tape = nullptr);
template <typename S>
TensorT<S> add_scalar(const TensorT<S>& x, double c, TapeT<S>* tape = nullptr);

template <typename S>
TensorT<S> relu(const TensorT<S>& x, TapeT<S>* tape = nullptr);
template <typename S>
TensorT<S> sigmoid(const TensorT<S>& x, TapeT<S>* tape = nullptr);
template <typename S>
TensorT<S> activation(Activation kind, const TensorT<S>& x, TapeT<S>* tape = nullptr);
// Backward at exactly 0 uses subgradient 0.
template <typename S>
TensorT<S> sqrt_elem(const TensorT<S>& x, TapeT<S>* tape = nullptr);

// ---- shape & reductions ----

template <typename S>
TensorT<S> reshape(const TensorT<S>& x, const Shape& new_shape, TapeT<S>* tape = nullptr);
template <typename S>
TensorT<S> sum_all(const TensorT<S>& x, TapeT<S>* tape = nullptr);  // -> shape {1}
template <typename S>
TensorT<S> mean_all(const TensorT<S>& x, TapeT<S>* tape = nullptr);
template <typename S>
TensorT<S> row_sum(const TensorT<S>& x, TapeT<S>* tape = nullptr);  // {n,k} -> {n}

// ---- linear algebra ----

template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b, TapeT<S>* tape = nullptr);
// x (N x in) with w (out x in), bias (out): x * w^T + bias.
template <typename S>
TensorT<S> dense(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& bias,
                 TapeT<S>* tape = nullptr);

// ---- spatial ops on N x C x H x W ----

// Cross-correlation plus per-filter bias. Output spatial size is
// floor((H + 2p - KH) / s) + 1 and must be >= 1.
template <typename S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& bias,
                  int stride, int pad, TapeT<S>* tape = nullptr);

// Max pads with -inf; avg excludes padding from the denominator.
// Max backward routes the gradient to the first argmax in scan order.
template <typename S>
TensorT<S> pool2d(PoolKind kind, const TensorT<S>& x, int window = 3, int stride = 2,
                  int pad = 1, TapeT<S>* tape = nullptr);

// Per-pixel reduction over channels -> N x 1 x H x W. Max ties route the
// gradient to the first channel.
template <typename S>
TensorT<S> channel_reduce(ReduceKind kind, const TensorT<S>& x, TapeT<S>* tape = nullptr);

template <typename S>
TensorT<S> global_avg_pool(const TensorT<S>& x, TapeT<S>* tape = nullptr);  // -> {N, C}

// Per-channel batch normalization over N,H,W. Training mode normalizes with
// batch statistics and updates the running buffers in place as
// r <- momentum * r + (1 - momentum) * batch; eval mode reads the buffers.
template <typename S>
TensorT<S> batchnorm2d(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                       TensorT<S>& running_mean, TensorT<S>& running_var, double eps,
                       double momentum, bool training, TapeT<S>* tape = nullptr);

template <typename S>
bool all_finite(const TensorT<S>& x);

}  // namespace ash
