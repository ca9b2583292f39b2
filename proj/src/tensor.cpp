#include "ash/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ash/rng.hpp"
#include "gemm.hpp"

namespace ash {

std::int64_t shape_numel(const Shape& shape) {
    if (shape.empty()) throw ShapeError("shape must have at least one dim");
    std::int64_t n = 1;
    for (const auto d : shape) {
        if (d <= 0) throw ShapeError("shape dims must be positive, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::vector<std::int64_t> row_major_strides(const Shape& shape) {
    std::vector<std::int64_t> strides(shape.size(), 1);
    for (std::int64_t d = static_cast<std::int64_t>(shape.size()) - 2; d >= 0; --d) {
        strides[d] = strides[d + 1] * shape[d + 1];
    }
    return strides;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

// ---- TensorT ----

template <typename S>
TensorT<S>::TensorT(Shape s, std::vector<S> values) : shape(std::move(s)) {
    const auto n = shape_numel(shape);
    if (static_cast<std::int64_t>(values.size()) != n) {
        throw ShapeError("value count does not match shape " + shape_str(shape));
    }
    buf = std::make_shared<std::vector<S>>(std::move(values));
}

template <typename S>
TensorT<S> TensorT<S>::zeros(const Shape& s) {
    return full(s, S(0));
}

template <typename S>
TensorT<S> TensorT<S>::full(const Shape& s, S value) {
    TensorT t;
    t.shape = s;
    t.buf = std::make_shared<std::vector<S>>(shape_numel(s), value);
    return t;
}

template <typename S>
std::int64_t TensorT<S>::size() const {
    return buf ? static_cast<std::int64_t>(buf->size()) : 0;
}

template <typename S>
const std::vector<S>& TensorT<S>::values() const {
    if (!buf) throw ContractError("tensor has no storage");
    return *buf;
}

template <typename S>
std::vector<S>& TensorT<S>::values_mut() {
    if (!buf) throw ContractError("tensor has no storage");
    if (buf.use_count() > 1) buf = std::make_shared<std::vector<S>>(*buf);
    return *buf;
}

template <typename S>
S TensorT<S>::item() const {
    if (size() != 1) throw ContractError("item() requires a one-element tensor");
    return (*buf)[0];
}

template <typename S>
TensorT<S> TensorT<S>::detached() const {
    TensorT t;
    t.shape = shape;
    t.buf = buf;
    return t;
}

// ---- TapeT ----

template <typename S>
int TapeT<S>::watch(TensorT<S>& leaf) {
    if (leaf.node >= 0) throw ContractError("tensor is already tracked on a tape");
    const int id = record(leaf.size(), nullptr);
    leaf.node = id;
    leaves_.emplace_back(id, &leaf);
    return id;
}

template <typename S>
int TapeT<S>::record(std::int64_t out_size, BackFn back) {
    nodes_.push_back(NodeRec{std::move(back), out_size});
    grads_.emplace_back();
    return static_cast<int>(nodes_.size()) - 1;
}

template <typename S>
bool TapeT<S>::has_grad(int node) const {
    return node >= 0 && node < static_cast<int>(grads_.size()) && !grads_[node].empty();
}

template <typename S>
const std::vector<S>& TapeT<S>::grad_at(int node) const {
    if (!has_grad(node)) throw ContractError("no gradient accumulated for node");
    return grads_[node];
}

template <typename S>
void TapeT<S>::accumulate(int node, const S* g, std::int64_t n) {
    if (node < 0) return;
    if (node >= static_cast<int>(nodes_.size()) || nodes_[node].size != n) {
        throw ContractError("gradient size does not match node");
    }
    auto& dst = grads_[node];
    if (dst.empty()) dst.assign(n, S(0));
    for (std::int64_t i = 0; i < n; ++i) dst[i] += g[i];
}

template <typename S>
void TapeT<S>::accumulate(int node, std::vector<S>&& g) {
    if (node < 0) return;
    const auto n = static_cast<std::int64_t>(g.size());
    if (node >= static_cast<int>(nodes_.size()) || nodes_[node].size != n) {
        throw ContractError("gradient size does not match node");
    }
    auto& dst = grads_[node];
    if (dst.empty()) {
        dst = std::move(g);
        return;
    }
    for (std::int64_t i = 0; i < n; ++i) dst[i] += g[i];
}

template <typename S>
void TapeT<S>::backward(const TensorT<S>& scalar_out) {
    if (scalar_out.size() != 1) throw ContractError("backward requires a one-element output");
    if (scalar_out.node < 0 || scalar_out.node >= static_cast<int>(nodes_.size())) {
        throw ContractError("backward target is not recorded on this tape");
    }
    if (ran_backward_) throw ContractError("backward may run once per tape");
    ran_backward_ = true;

    grads_[scalar_out.node].assign(1, S(1));
    for (int id = scalar_out.node; id >= 0; --id) {
        if (grads_[id].empty() || !nodes_[id].back) continue;
        nodes_[id].back(*this, grads_[id]);
    }
    for (auto& [node, leaf] : leaves_) {
        if (!grads_[node].empty()) {
            leaf->grad = std::move(grads_[node]);
        } else {
            leaf->grad.assign(leaf->size(), S(0));
        }
        leaf->node = -1;  // leaves become watchable by the next tape
    }
}

// ---- broadcasting ----

namespace {

Shape broadcast_out_shape(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (std::size_t d = 0; d < rank; ++d) {
        const std::int64_t da = d < rank - a.size() ? 1 : a[d - (rank - a.size())];
        const std::int64_t db = d < rank - b.size() ? 1 : b[d - (rank - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) +
                             " are not broadcastable");
        }
        out[d] = std::max(da, db);
    }
    return out;
}

// Strides of `in` right-aligned against `out`, 0 on expanded dims.
std::vector<std::int64_t> broadcast_strides(const Shape& in, const Shape& out) {
    const auto instr = row_major_strides(in);
    std::vector<std::int64_t> r(out.size(), 0);
    const std::size_t off = out.size() - in.size();
    for (std::size_t d = 0; d < in.size(); ++d) {
        r[off + d] = (in[d] == 1 && out[off + d] != 1) ? 0 : instr[d];
    }
    return r;
}

// Visits every output element in row-major order with the flat offsets of
// both operands.
template <class V>
void for_each_broadcast(const Shape& out, const std::vector<std::int64_t>& sa,
                        const std::vector<std::int64_t>& sb, V&& visit) {
    const std::int64_t n = shape_numel(out);
    const std::int64_t rank = static_cast<std::int64_t>(out.size());
    std::vector<std::int64_t> idx(rank, 0);
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t o = 0; o < n; ++o) {
        visit(o, ia, ib);
        for (std::int64_t d = rank - 1; d >= 0; --d) {
            ++idx[d];
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < out[d]) break;
            idx[d] = 0;
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
        }
    }
}

enum class BinKind { Add, Sub, Mul };

template <typename S>
TensorT<S> binary_op(BinKind kind, const TensorT<S>& a, const TensorT<S>& b, TapeT<S>* tape) {
    const Shape out_shape = broadcast_out_shape(a.shape, b.shape);
    TensorT<S> out = TensorT<S>::zeros(out_shape);
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values_mut();

    const bool same = a.shape == b.shape;
    if (same) {
        const std::int64_t n = out.size();
        switch (kind) {
            case BinKind::Add:
                for (std::int64_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i];
                break;
            case BinKind::Sub:
                for (std::int64_t i = 0; i < n; ++i) ov[i] = av[i] - bv[i];
                break;
            case BinKind::Mul:
                for (std::int64_t i = 0; i < n; ++i) ov[i] = av[i] * bv[i];
                break;
        }
    } else {
        const auto sa = broadcast_strides(a.shape, out_shape);
        const auto sb = broadcast_strides(b.shape, out_shape);
        switch (kind) {
            case BinKind::Add:
                for_each_broadcast(out_shape, sa, sb, [&](auto o, auto ia, auto ib) {
                    ov[o] = av[ia] + bv[ib];
                });
                break;
            case BinKind::Sub:
                for_each_broadcast(out_shape, sa, sb, [&](auto o, auto ia, auto ib) {
                    ov[o] = av[ia] - bv[ib];
                });
                break;
            case BinKind::Mul:
                for_each_broadcast(out_shape, sa, sb, [&](auto o, auto ia, auto ib) {
                    ov[o] = av[ia] * bv[ib];
                });
                break;
        }
    }

    if (tape && (a.node >= 0 || b.node >= 0)) {
        const int an = a.node, bn = b.node;
        const TensorT<S> ad = a.detached(), bd = b.detached();
        out.node = tape->record(
            out.size(), [kind, an, bn, ad, bd, out_shape](TapeT<S>& t, const std::vector<S>& g) {
                const std::int64_t na = ad.size(), nb = bd.size();
                const bool same_shape = ad.shape == bd.shape;
                std::vector<S> ga, gb;
                if (an >= 0) ga.assign(na, S(0));
                if (bn >= 0) gb.assign(nb, S(0));
                auto acc = [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
                    switch (kind) {
                        case BinKind::Add:
                            if (an >= 0) ga[ia] += g[o];
                            if (bn >= 0) gb[ib] += g[o];
                            break;
                        case BinKind::Sub:
                            if (an >= 0) ga[ia] += g[o];
                            if (bn >= 0) gb[ib] -= g[o];
                            break;
                        case BinKind::Mul:
                            if (an >= 0) ga[ia] += g[o] * bd.values()[ib];
                            if (bn >= 0) gb[ib] += g[o] * ad.values()[ia];
                            break;
                    }
                };
                if (same_shape) {
                    for (std::int64_t i = 0; i < na; ++i) acc(i, i, i);
                } else {
                    const auto sa = broadcast_strides(ad.shape, out_shape);
                    const auto sb = broadcast_strides(bd.shape, out_shape);
                    for_each_broadcast(out_shape, sa, sb, acc);
                }
                if (an >= 0) t.accumulate(an, std::move(ga));
                if (bn >= 0) t.accumulate(bn, std::move(gb));
            });
    }
    return out;
}

// Records a pointwise op whose input gradient is g * local_deriv.
template <typename S>
TensorT<S> pointwise_op(const TensorT<S>& x, TapeT<S>* tape,
                        const std::function<S(S)>& fwd, std::vector<S> local_deriv_after_fwd) {
    TensorT<S> out = TensorT<S>::zeros(x.shape);
    const auto& xv = x.values();
    auto& ov = out.values_mut();
    for (std::int64_t i = 0; i < x.size(); ++i) ov[i] = fwd(xv[i]);
    if (tape && x.node >= 0) {
        const int xn = x.node;
        out.node = tape->record(
            out.size(),
            [xn, d = std::move(local_deriv_after_fwd)](TapeT<S>& t, const std::vector<S>& g) {
                std::vector<S> gx(g.size());
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * d[i];
                t.accumulate(xn, std::move(gx));
            });
    }
    return out;
}

}  // namespace

// ---- op implementations ----

template <typename S>
TensorT<S> randn_seeded(const Shape& shape, std::uint64_t seed) {
    const std::int64_t n = shape_numel(shape);
    CounterRng rng(seed);
    std::vector<S> v(n);
    for (std::int64_t i = 0; i < n; ++i) v[i] = static_cast<S>(rng.next_normal());
    return TensorT<S>::from(shape, std::move(v));
}

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b, TapeT<S>* tape) {
    return binary_op(BinKind::Add, a, b, tape);
}

template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b, TapeT<S>* tape) {
    return binary_op(BinKind::Sub, a, b, tape);
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b, TapeT<S>* tape) {
    return binary_op(BinKind::Mul, a, b, tape);
}

template <typename S>
TensorT<S> elementwise(Binary op, const TensorT<S>& a, const TensorT<S>& b, TapeT<S>* tape) {
    return op == Binary::Add ? add(a, b, tape) : mul(a, b, tape);
}

template <typename S>
TensorT<S> scale(const TensorT<S>& x, double c, TapeT<S>* tape) {
    TensorT<S> out = TensorT<S>::zeros(x.shape);
    const auto& xv = x.values();
    auto& ov = out.values_mut();
    const S cs = static_cast<S>(c);
    for (std::int64_t i = 0; i < x.size(); ++i) ov[i] = cs * xv[i];
    if (tape && x.node >= 0) {
        const int xn = x.node;
        out.node = tape->record(out.size(), [xn, cs](TapeT<S>& t, const std::vector<S>& g) {
            std::vector<S> gx(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] = cs * g[i];
            t.accumulate(xn, std::move(gx));
        });
    }
    return out;
}

template <typename S>
TensorT<S> add_scalar(const TensorT<S>& x, double c, TapeT<S>* tape) {
    TensorT<S> out = TensorT<S>::zeros(x.shape);
    const auto& xv = x.values();
    auto& ov = out.values_mut();
    const S cs = static_cast<S>(c);
    for (std::int64_t i = 0; i < x.size(); ++i) ov[i] = xv[i] + cs;
    if (tape && x.node >= 0) {
        const int xn = x.node;
        out.node = tape->record(out.size(), [xn](TapeT<S>& t, const std::vector<S>& g) {
            t.accumulate(xn, g.data(), static_cast<std::int64_t>(g.size()));
        });
    }
    return out;
}

template <typename S>
TensorT<S> relu(const TensorT<S>& x, TapeT<S>* tape) {
    std::vector<S> deriv;
    if (tape && x.node >= 0) {
        deriv.resize(x.size());
        const auto& xv = x.values();
        for (std::int64_t i = 0; i < x.size(); ++i) deriv[i] = xv[i] > S(0) ? S(1) : S(0);
    }
    return pointwise_op<S>(
        x, tape, [](S v) { return v > S(0) ? v : S(0); }, std::move(deriv));
}

template <typename S>
TensorT<S> sigmoid(const TensorT<S>& x, TapeT<S>* tape) {
    TensorT<S> out = TensorT<S>::zeros(x.shape);
    const auto& xv = x.values();
    auto& ov = out.values_mut();
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const S v = xv[i];
        if (v >= S(0)) {
            ov[i] = S(1) / (S(1) + std::exp(-v));
        } else {
            const S e = std::exp(v);
            ov[i] = e / (S(1) + e);
        }
    }
    if (tape && x.node >= 0) {
        const int xn = x.node;
        std::vector<S> y = ov;
        out.node = tape->record(
            out.size(), [xn, y = std::move(y)](TapeT<S>& t, const std::vector<S>& g) {
                std::vector<S> gx(g.size());
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * y[i] * (S(1) - y[i]);
                t.accumulate(xn, std::move(gx));
            });
    }
    return out;
}

template <typename S>
TensorT<S> activation(Activation kind, const TensorT<S>& x, TapeT<S>* tape) {
    return kind == Activation::Relu ? relu(x, tape) : sigmoid(x, tape);
}

template <typename S>
TensorT<S> sqrt_elem(const TensorT<S>& x, TapeT<S>* tape) {
    TensorT<S> out = TensorT<S>::zeros(x.shape);
    const auto& xv = x.values();
    auto& ov = out.values_mut();
    for (std::int64_t i = 0; i < x.size(); ++i) ov[i] = std::sqrt(xv[i]);
    if (tape && x.node >= 0) {
        const int xn = x.node;
        std::vector<S> y = ov;
        out.node = tape->record(
            out.size(), [xn, y = std::move(y)](TapeT<S>& t, const std::vector<S>& g) {
                std::vector<S> gx(g.size());
                for (std::size_t i = 0; i < g.size(); ++i) {
                    gx[i] = y[i] > S(0) ? g[i] / (S(2) * y[i]) : S(0);
                }
                t.accumulate(xn, std::move(gx));
            });
    }
    return out;
}

template <typename S>
TensorT<S> reshape(const TensorT<S>& x, const Shape& new_shape, TapeT<S>* tape) {
    if (shape_numel(new_shape) != x.size()) {
        throw ShapeError("reshape to " + shape_str(new_shape) + " changes element count");
    }
    TensorT<S> out = x.detached();
    out.shape = new_shape;
    if (tape && x.node >= 0) {
        const int xn = x.node;
        out.node = tape->record(out.size(), [xn](TapeT<S>& t, const std::vector<S>& g) {
            t.accumulate(xn, g.data(), static_cast<std::int64_t>(g.size()));
        });
    }
    return out;
}

template <typename S>
TensorT<S> sum_all(const TensorT<S>& x, TapeT<S>* tape) {
    S acc = S(0);
    for (const S v : x.values()) acc += v;
    TensorT<S> out = TensorT<S>::from({1}, {acc});
    if (tape && x.node >= 0) {
        const int xn = x.node;
        const std::int64_t n = x.size();
        out.node = tape->record(1, [xn, n](TapeT<S>& t, const std::vector<S>& g) {
std::vector<S> gx(n, g[0]);
            t.accumulate(xn, std::move(gx));
        });
    }
    return out;
}

template <typename S>
TensorT<S> mean_all(const TensorT<S>& x, TapeT<S>* tape) {
    return scale(sum_all(x, tape), 1.0 / static_cast<double>(x.size()), tape);
}

template <typename S>
TensorT<S> row_sum(const TensorT<S>& x, TapeT<S>* tape) {
    if (x.shape.size() != 2) throw ShapeError("row_sum expects a rank-2 tensor");
    const std::int64_t n = x.shape[0], k = x.shape[1];
    TensorT<S> out = TensorT<S>::zeros({n});
    const auto& xv = x.values();
    auto& ov = out.values_mut();
    for (std::int64_t i = 0; i < n; ++i) {
        S acc = S(0);
        for (std::int64_t j = 0; j < k; ++j) acc += xv[i * k + j];
        ov[i] = acc;
    }
    if (tape && x.node >= 0) {
        const int xn = x.node;
        out.node = tape->record(n, [xn, n, k](TapeT<S>& t, const std::vector<S>& g) {
            std::vector<S> gx(n * k);
            for (std::int64_t i = 0; i < n; ++i) {
                for (std::int64_t j = 0; j < k; ++j) gx[i * k + j] = g[i];
            }
            t.accumulate(xn, std::move(gx));
        });
    }
    return out;
}

template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b, TapeT<S>* tape) {
    if (a.shape.size() != 2 || b.shape.size() != 2) {
        throw ShapeError("matmul expects rank-2 tensors");
    }
    const std::int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    if (b.shape[0] != k) {
        throw ShapeError("matmul inner dims differ: " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    }
    TensorT<S> out = TensorT<S>::zeros({m, n});
    detail::gemm_nn(a.values().data(), b.values().data(), out.values_mut().data(), m, k, n,
                    false);
    if (tape && (a.node >= 0 || b.node >= 0)) {
        const int an = a.node, bn = b.node;
        const TensorT<S> ad = a.detached(), bd = b.detached();
        out.node = tape->record(
            out.size(), [an, bn, ad, bd, m, k, n](TapeT<S>& t, const std::vector<S>& g) {
                if (an >= 0) {
                    std::vector<S> ga(m * k);
                    detail::gemm_nt(g.data(), bd.values().data(), ga.data(), m, n, k, false);
                    t.accumulate(an, std::move(ga));
                }
                if (bn >= 0) {
                    std::vector<S> gb(k * n);
                    detail::gemm_tn(ad.values().data(), g.data(), gb.data(), k, m, n, false);
                    t.accumulate(bn, std::move(gb));
                }
            });
    }
    return out;
}

template <typename S>
TensorT<S> dense(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& bias,
                 TapeT<S>* tape) {
    if (x.shape.size() != 2 || w.shape.size() != 2 || bias.shape.size() != 1) {
        throw ShapeError("dense expects x: N x in, w: out x in, bias: out");
    }
    const std::int64_t n = x.shape[0], in = x.shape[1], out_dim = w.shape[0];
    if (w.shape[1] != in || bias.shape[0] != out_dim) {
        throw ShapeError("dense shapes disagree: x " + shape_str(x.shape) + ", w " +
                         shape_str(w.shape) + ", bias " + shape_str(bias.shape));
    }
    TensorT<S> out = TensorT<S>::zeros({n, out_dim});
    auto& ov = out.values_mut();
    detail::gemm_nt(x.values().data(), w.values().data(), ov.data(), n, in, out_dim, false);
    const auto& bv = bias.values();
    for (std::int64_t i = 0; i < n; ++i) {
        S* row = ov.data() + i * out_dim;
        for (std::int64_t j = 0; j < out_dim; ++j) row[j] += bv[j];
    }
    if (tape && (x.node >= 0 || w.node >= 0 || bias.node >= 0)) {
        const int xn = x.node, wn = w.node, bn = bias.node;
        const TensorT<S> xd = x.detached(), wd = w.detached();
        out.node = tape->record(
            out.size(), [xn, wn, bn, xd, wd, n, in, out_dim](TapeT<S>& t,
                                                             const std::vector<S>& g) {
                if (xn >= 0) {
                    std::vector<S> gx(n * in);
                    detail::gemm_nn(g.data(), wd.values().data(), gx.data(), n, out_dim, in,
                                    false);
                    t.accumulate(xn, std::move(gx));
                }
                if (wn >= 0) {
                    std::vector<S> gw(out_dim * in);
                    detail::gemm_tn(g.data(), xd.values().data(), gw.data(), out_dim, n, in,
                                    false);
                    t.accumulate(wn, std::move(gw));
                }
                if (bn >= 0) {
                    std::vector<S> gb(out_dim, S(0));
                    for (std::int64_t i = 0; i < n; ++i) {
                        for (std::int64_t j = 0; j < out_dim; ++j) gb[j] += g[i * out_dim + j];
                    }
                    t.accumulate(bn, std::move(gb));
                }
            });
    }
    return out;
}

template <typename S>
bool all_finite(const TensorT<S>& x) {
    for (const S v : x.values()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

// ---- explicit instantiations ----

template struct TensorT<float>;
template struct TensorT<double>;
template class TapeT<float>;
template class TapeT<double>;

#define ASH_INSTANTIATE_OPS(S)                                                              \
    template TensorT<S> randn_seeded<S>(const Shape&, std::uint64_t);                       \
    template TensorT<S> add<S>(const TensorT<S>&, const TensorT<S>&, TapeT<S>*);            \
    template TensorT<S> sub<S>(const TensorT<S>&, const TensorT<S>&, TapeT<S>*);            \
    template TensorT<S> mul<S>(const TensorT<S>&, const TensorT<S>&, TapeT<S>*);            \
    template TensorT<S> elementwise<S>(Binary, const TensorT<S>&, const TensorT<S>&,        \
                                       TapeT<S>*);                                          \
    template TensorT<S> scale<S>(const TensorT<S>&, double, TapeT<S>*);                     \
    template TensorT<S> add_scalar<S>(const TensorT<S>&, double, TapeT<S>*);                \
    template TensorT<S> relu<S>(const TensorT<S>&, TapeT<S>*);                              \
    template TensorT<S> sigmoid<S>(const TensorT<S>&, TapeT<S>*);                           \
    template TensorT<S> activation<S>(Activation, const TensorT<S>&, TapeT<S>*);            \
    template TensorT<S> sqrt_elem<S>(const TensorT<S>&, TapeT<S>*);                         \
    template TensorT<S> reshape<S>(const TensorT<S>&, const Shape&, TapeT<S>*);             \
    template TensorT<S> sum_all<S>(const TensorT<S>&, TapeT<S>*);                           \
    template TensorT<S> mean_all<S>(const TensorT<S>&, TapeT<S>*);                          \
    template TensorT<S> row_sum<S>(const TensorT<S>&, TapeT<S>*);                           \
    template TensorT<S> matmul<S>(const TensorT<S>&, const TensorT<S>&, TapeT<S>*);         \
    template TensorT<S> dense<S>(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&,   \
                                 TapeT<S>*);                                                \
    template bool all_finite<S>(const TensorT<S>&);

ASH_INSTANTIATE_OPS(float)
ASH_INSTANTIATE_OPS(double)

#undef ASH_INSTANTIATE_OPS

}  // namespace ash
