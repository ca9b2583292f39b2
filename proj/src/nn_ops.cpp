#include <algorithm>
#include <cmath>
#include <limits>

#include "ash/tensor.hpp"
#include "gemm.hpp"

namespace ash {

namespace {

struct ConvDims {
    std::int64_t n, c, h, w;       // input
    std::int64_t o, kh, kw;        // filters
    std::int64_t ho, wo;           // output
    int stride, pad;
};

std::int64_t conv_out_dim(std::int64_t in, std::int64_t kernel, int stride, int pad,
                          const char* what) {
    if (stride < 1) throw ShapeError("stride must be >= 1");
    if (pad < 0) throw ShapeError("pad must be >= 0");
    if (in + 2 * pad < kernel) {
        throw ShapeError(std::string(what) + ": window does not fit input");
    }
    const std::int64_t out = (in + 2 * pad - kernel) / stride + 1;
    if (out < 1) throw ShapeError(std::string(what) + ": empty output");
    return out;
}

ConvDims conv_dims(const Shape& xs, const Shape& ws, int stride, int pad) {
    if (xs.size() != 4 || ws.size() != 4) {
        throw ShapeError("conv2d expects x: N x C x H x W and w: O x C x KH x KW");
    }
    if (xs[1] != ws[1]) {
        throw ShapeError("conv2d channel mismatch: x " + shape_str(xs) + ", w " + shape_str(ws));
    }
    ConvDims d{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3], 0, 0, stride, pad};
    d.ho = conv_out_dim(d.h, d.kh, stride, pad, "conv2d");
    d.wo = conv_out_dim(d.w, d.kw, stride, pad, "conv2d");
    return d;
}

// Unfolds one image (C x H x W) into (C*KH*KW) x (HO*WO), zero padding.
template <typename S>
void im2col(const S* x, const ConvDims& d, S* col) {
    const std::int64_t cols = d.ho * d.wo;
    for (std::int64_t c = 0; c < d.c; ++c) {
        for (std::int64_t kh = 0; kh < d.kh; ++kh) {
            for (std::int64_t kw = 0; kw < d.kw; ++kw) {
                S* dst = col + ((c * d.kh + kh) * d.kw + kw) * cols;
                for (std::int64_t ho = 0; ho < d.ho; ++ho) {
                    const std::int64_t hi = ho * d.stride - d.pad + kh;
                    S* drow = dst + ho * d.wo;
                    if (hi < 0 || hi >= d.h) {
                        for (std::int64_t wo = 0; wo < d.wo; ++wo) drow[wo] = S(0);
                        continue;
                    }
                    const S* srow = x + (c * d.h + hi) * d.w;
                    for (std::int64_t wo = 0; wo < d.wo; ++wo) {
                        const std::int64_t wi = wo * d.stride - d.pad + kw;
                        drow[wo] = (wi >= 0 && wi < d.w) ? srow[wi] : S(0);
                    }
                }
            }
        }
    }
}

// Scatter-adds a (C*KH*KW) x (HO*WO) gradient back onto one image.
template <typename S>
void col2im_add(const S* col, const ConvDims& d, S* gx) {
    const std::int64_t cols = d.ho * d.wo;
    for (std::int64_t c = 0; c < d.c; ++c) {
        for (std::int64_t kh = 0; kh < d.kh; ++kh) {
            for (std::int64_t kw = 0; kw < d.kw; ++kw) {
                const S* src = col + ((c * d.kh + kh) * d.kw + kw) * cols;
                for (std::int64_t ho = 0; ho < d.ho; ++ho) {
                    const std::int64_t hi = ho * d.stride - d.pad + kh;
                    if (hi < 0 || hi >= d.h) continue;
                    S* drow = gx + (c * d.h + hi) * d.w;
                    const S* srow = src + ho * d.wo;
                    for (std::int64_t wo = 0; wo < d.wo; ++wo) {
                        const std::int64_t wi = wo * d.stride - d.pad + kw;
                        if (wi >= 0 && wi < d.w) drow[wi] += srow[wo];
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& bias, int stride,
                  int pad, TapeT<S>* tape) {
    const ConvDims d = conv_dims(x.shape, w.shape, stride, pad);
    if (bias.shape != Shape{d.o}) {
        throw ShapeError("conv2d bias must have one value per filter");
    }
    TensorT<S> out = TensorT<S>::zeros({d.n, d.o, d.ho, d.wo});
    auto& ov = out.values_mut();
    const auto& xv = x.values();
    const auto& wv = w.values();
    const auto& bv = bias.values();

    const std::int64_t ckk = d.c * d.kh * d.kw;
    const std::int64_t cols = d.ho * d.wo;
    std::vector<S> col(ckk * cols);
    for (std::int64_t n = 0; n < d.n; ++n) {
        im2col(xv.data() + n * d.c * d.h * d.w, d, col.data());
        S* y = ov.data() + n * d.o * cols;
        detail::gemm_nn(wv.data(), col.data(), y, d.o, ckk, cols, false);
        for (std::int64_t o = 0; o < d.o; ++o) {
            S* row = y + o * cols;
            const S b = bv[o];
            for (std::int64_t q = 0; q < cols; ++q) row[q] += b;
        }
    }

    if (tape && (x.node >= 0 || w.node >= 0 || bias.node >= 0)) {
        const int xn = x.node, wn = w.node, bn = bias.node;
        const TensorT<S> xd = x.detached(), wd = w.detached();
        out.node = tape->record(
            out.size(), [xn, wn, bn, xd, wd, d, ckk, cols](TapeT<S>& t, const std::vector<S>& g) {
                std::vector<S> col(ckk * cols);
                std::vector<S> gx, gw, gb, gcol;
                if (xn >= 0) {
                    gx.assign(xd.size(), S(0));
                    gcol.resize(ckk * cols);
                }
                if (wn >= 0) gw.assign(wd.size(), S(0));
                if (bn >= 0) gb.assign(d.o, S(0));
                for (std::int64_t n = 0; n < d.n; ++n) {
                    const S* gimg = g.data() + n * d.o * cols;
                    if (wn >= 0 || xn >= 0) {
                        im2col(xd.values().data() + n * d.c * d.h * d.w, d, col.data());
                    }
                    if (wn >= 0) {
                        detail::gemm_nt(gimg, col.data(), gw.data(), d.o, cols, ckk, true);
                    }
                    if (xn >= 0) {
                        detail::gemm_tn(wd.values().data(), gimg, gcol.data(), ckk, d.o, cols,
                                        false);
                        col2im_add(gcol.data(), d, gx.data() + n * d.c * d.h * d.w);
                    }
                    if (bn >= 0) {
                        for (std::int64_t o = 0; o < d.o; ++o) {
                            S acc = S(0);
                            const S* row = gimg + o * cols;
                            for (std::int64_t q = 0; q < cols; ++q) acc += row[q];
                            gb[o] += acc;
                        }
                    }
                }
                if (xn >= 0) t.accumulate(xn, std::move(gx));
                if (wn >= 0) t.accumulate(wn, std::move(gw));
                if (bn >= 0) t.accumulate(bn, std::move(gb));
            });
    }
    return out;
}

template <typename S>
TensorT<S> pool2d(PoolKind kind, const TensorT<S>& x, int window, int stride, int pad,
                  TapeT<S>* tape) {
    if (x.shape.size() != 4) throw ShapeError("pool2d expects N x C x H x W");
    if (window < 1) throw ShapeError("pool window must be >= 1");
    if (pad > window / 2) throw ShapeError("pool pad must be <= window / 2");
    const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    const std::int64_t ho = conv_out_dim(h, window, stride, pad, "pool2d");
    const std::int64_t wo = conv_out_dim(w, window, stride, pad, "pool2d");

    TensorT<S> out = TensorT<S>::zeros({n, c, ho, wo});
    auto& ov = out.values_mut();
    const auto& xv = x.values();
    const bool want_back = tape && x.node >= 0;
    // For max: flat input index of the winner; for avg: real-cell count.
    std::vector<std::int64_t> aux(want_back || kind == PoolKind::Avg ? n * c * ho * wo : 0);

    std::int64_t oidx = 0;
    for (std::int64_t ni = 0; ni < n; ++ni) {
        for (std::int64_t ci = 0; ci < c; ++ci) {
            const S* plane = xv.data() + (ni * c + ci) * h * w;
            for (std::int64_t oh = 0; oh < ho; ++oh) {
                const std::int64_t h0 = oh * stride - pad;
                for (std::int64_t ow = 0; ow < wo; ++ow, ++oidx) {
                    const std::int64_t w0 = ow * stride - pad;
                    if (kind == PoolKind::Max) {
                        S best = -std::numeric_limits<S>::infinity();
                        std::int64_t best_idx = -1;
                        for (std::int64_t kh = 0; kh < window; ++kh) {
                            const std::int64_t hi = h0 + kh;
                            if (hi < 0 || hi >= h) continue;
                            for (std::int64_t kw = 0; kw < window; ++kw) {
                                const std::int64_t wi = w0 + kw;
                                if (wi < 0 || wi >= w) continue;
                                const S v = plane[hi * w + wi];
                                if (v > best) {
                                    best = v;
                                    best_idx = (ni * c + ci) * h * w + hi * w + wi;
                                }
                            }
                        }
                        ov[oidx] = best;
                        if (!aux.empty()) aux[oidx] = best_idx;
                    } else {
                        S acc = S(0);
                        std::int64_t count = 0;
                        for (std::int64_t kh = 0; kh < window; ++kh) {
                            const std::int64_t hi = h0 + kh;
                            if (hi < 0 || hi >= h) continue;
                            for (std::int64_t kw = 0; kw < window; ++kw) {
                                const std::int64_t wi = w0 + kw;
                                if (wi < 0 || wi >= w) continue;
                                acc += plane[hi * w + wi];
                                ++count;
                            }
                        }
                        ov[oidx] = acc / static_cast<S>(count);
                        if (!aux.empty()) aux[oidx] = count;
                    }
                }
            }
        }
    }

    if (want_back) {
        const int xn = x.node;
        const std::int64_t in_size = x.size();
        out.node = tape->record(
            out.size(), [xn, in_size, kind, aux = std::move(aux), n, c, h, w, ho, wo, window,
                         stride, pad](TapeT<S>& t, const std::vector<S>& g) {
                std::vector<S> gx(in_size, S(0));
                if (kind == PoolKind::Max) {
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        if (aux[i] >= 0) gx[aux[i]] += g[i];
                    }
                } else {
                    std::int64_t oidx = 0;
                    for (std::int64_t ni = 0; ni < n; ++ni) {
                        for (std::int64_t ci = 0; ci < c; ++ci) {
                            S* plane = gx.data() + (ni * c + ci) * h * w;
                            for (std::int64_t oh = 0; oh < ho; ++oh) {
                                const std::int64_t h0 = oh * stride - pad;
                                for (std::int64_t ow = 0; ow < wo; ++ow, ++oidx) {
                                    const std::int64_t w0 = ow * stride - pad;
                                    const S share = g[oidx] / static_cast<S>(aux[oidx]);
                                    for (std::int64_t kh = 0; kh < window; ++kh) {
                                        const std::int64_t hi = h0 + kh;
                                        if (hi < 0 || hi >= h) continue;
                                        for (std::int64_t kw = 0; kw < window; ++kw) {
                                            const std::int64_t wi = w0 + kw;
                                            if (wi < 0 || wi >= w) continue;
                                            plane[hi * w + wi] += share;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                t.accumulate(xn, std::move(gx));
            });
    }
    return out;
}

template <typename S>
TensorT<S> channel_reduce(ReduceKind kind, const TensorT<S>& x, TapeT<S>* tape) {
    if (x.shape.size() != 4) throw ShapeError("channel_reduce expects N x C x H x W");
    const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    const std::int64_t hw = h * w;
    TensorT<S> out = TensorT<S>::zeros({n, 1, h, w});
    auto& ov = out.values_mut();
    const auto& xv = x.values();
    const bool want_back = tape && x.node >= 0;
    std::vector<std::int64_t> argmax(want_back && kind == ReduceKind::Max ? n * hw : 0);

    for (std::int64_t ni = 0; ni < n; ++ni) {
        const S* img = xv.data() + ni * c * hw;
        S* dst = ov.data() + ni * hw;
        for (std::int64_t p = 0; p < hw; ++p) {
            if (kind == ReduceKind::Max) {
                S best = img[p];
                std::int64_t best_c = 0;
                for (std::int64_t ci = 1; ci < c; ++ci) {
                    const S v = img[ci * hw + p];
                    if (v > best) {
                        best = v;
                        best_c = ci;
                    }
                }
                dst[p] = best;
                if (!argmax.empty()) argmax[ni * hw + p] = best_c;
            } else {
                S acc = S(0);
                for (std::int64_t ci = 0; ci < c; ++ci) acc += img[ci * hw + p];
                dst[p] = acc / static_cast<S>(c);
            }
        }
    }

    if (want_back) {
        const int xn = x.node;
        out.node = tape->record(
            out.size(), [xn, kind, argmax = std::move(argmax), n, c, hw](TapeT<S>& t,
                                                                         const std::vector<S>& g) {
                std::vector<S> gx(n * c * hw, S(0));
                for (std::int64_t ni = 0; ni < n; ++ni) {
                    for (std::int64_t p = 0; p < hw; ++p) {
                        const S gv = g[ni * hw + p];
                        if (kind == ReduceKind::Max) {
                            gx[(ni * c + argmax[ni * hw + p]) * hw + p] += gv;
                        } else {
                            const S share = gv / static_cast<S>(c);
                            for (std::int64_t ci = 0; ci < c; ++ci) {
                                gx[(ni * c + ci) * hw + p] += share;
                            }
                        }
                    }
                }
                t.accumulate(xn, std::move(gx));
            });
    }
    return out;
}

template <typename S>
TensorT<S> global_avg_pool(const TensorT<S>& x, TapeT<S>* tape) {
    if (x.shape.size() != 4) throw ShapeError("global_avg_pool expects N x C x H x W");
    const std::int64_t n = x.shape[0], c = x.shape[1], hw = x.shape[2] * x.shape[3];
    TensorT<S> out = TensorT<S>::zeros({n, c});
    auto& ov = out.values_mut();
    const auto& xv = x.values();
    for (std::int64_t i = 0; i < n * c; ++i) {
        S acc = S(0);
        const S* plane = xv.data() + i * hw;
        for (std::int64_t p = 0; p < hw; ++p) acc += plane[p];
        ov[i] = acc / static_cast<S>(hw);
    }
    if (tape && x.node >= 0) {
        const int xn = x.node;
        out.node = tape->record(out.size(), [xn, n, c, hw](TapeT<S>& t, const std::vector<S>& g) {
            std::vector<S> gx(n * c * hw);
            for (std::int64_t i = 0; i < n * c; ++i) {
                const S share = g[i] / static_cast<S>(hw);
                for (std::int64_t p = 0; p < hw; ++p) gx[i * hw + p] = share;
            }
            t.accumulate(xn, std::move(gx));
        });
    }
    return out;
}

template <typename S>
TensorT<S> batchnorm2d(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                       TensorT<S>& running_mean, TensorT<S>& running_var, double eps,
                       double momentum, bool training, TapeT<S>* tape) {
    if (x.shape.size() != 4) throw ShapeError("batchnorm2d expects N x C x H x W");
    const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    const Shape cshape{c};
    if (gamma.shape != cshape || beta.shape != cshape || running_mean.shape != cshape ||
        running_var.shape != cshape) {
        throw ShapeError("batchnorm2d affine/running tensors must have shape {C}");
    }
    const std::int64_t m = n * h * w;
    if (training && m < 2) {
        throw ContractError("batchnorm training mode needs at least 2 values per channel");
    }

    const auto& xv = x.values();
    const std::int64_t hw = h * w;
    std::vector<S> mean(c), var(c);
    if (training) {
        for (std::int64_t ci = 0; ci < c; ++ci) {
            S acc = S(0);
            for (std::int64_t ni = 0; ni < n; ++ni) {
                const S* plane = xv.data() + (ni * c + ci) * hw;
                for (std::int64_t p = 0; p < hw; ++p) acc += plane[p];
            }
            mean[ci] = acc / static_cast<S>(m);
        }
        for (std::int64_t ci = 0; ci < c; ++ci) {
            S acc = S(0);
            const S mu = mean[ci];
            for (std::int64_t ni = 0; ni < n; ++ni) {
                const S* plane = xv.data() + (ni * c + ci) * hw;
                for (std::int64_t p = 0; p < hw; ++p) {
                    const S d = plane[p] - mu;
                    acc += d * d;
                }
            }
            var[ci] = acc / static_cast<S>(m);  // population variance
        }
        auto& rm = running_mean.values_mut();
        auto& rv = running_var.values_mut();
        const S mom = static_cast<S>(momentum);
        for (std::int64_t ci = 0; ci < c; ++ci) {
            rm[ci] = mom * rm[ci] + (S(1) - mom) * mean[ci];
            rv[ci] = mom * rv[ci] + (S(1) - mom) * var[ci];
        }
    } else {
        mean = running_mean.values();
        var = running_var.values();
    }

    std::vector<S> invstd(c);
    for (std::int64_t ci = 0; ci < c; ++ci) {
        invstd[ci] = S(1) / std::sqrt(var[ci] + static_cast<S>(eps));
    }

    TensorT<S> out = TensorT<S>::zeros(x.shape);
    auto& ov = out.values_mut();
    std::vector<S> xhat(x.size());
    const auto& gv = gamma.values();
    const auto& bv = beta.values();
    for (std::int64_t ni = 0; ni < n; ++ni) {
        for (std::int64_t ci = 0; ci < c; ++ci) {
            const std::int64_t base = (ni * c + ci) * hw;
            const S mu = mean[ci], is = invstd[ci], ga = gv[ci], be = bv[ci];
            for (std::int64_t p = 0; p < hw; ++p) {
                const S xn = (xv[base + p] - mu) * is;
                xhat[base + p] = xn;
                ov[base + p] = xn * ga + be;
            }
        }
    }

    if (tape && (x.node >= 0 || gamma.node >= 0 || beta.node >= 0)) {
        const int xn = x.node, gn = gamma.node, bn = beta.node;
        const TensorT<S> gd = gamma.detached();
        out.node = tape->record(
            out.size(),
            [xn, gn, bn, gd, xhat = std::move(xhat), invstd = std::move(invstd), training, n, c,
             hw](TapeT<S>& t, const std::vector<S>& g) {
                const std::int64_t m = n * hw;
                std::vector<S> sum_g(c, S(0)), sum_g_xhat(c, S(0));
                for (std::int64_t ni = 0; ni < n; ++ni) {
                    for (std::int64_t ci = 0; ci < c; ++ci) {
                        const std::int64_t base = (ni * c + ci) * hw;
                        S s1 = S(0), s2 = S(0);
                        for (std::int64_t p = 0; p < hw; ++p) {
                            s1 += g[base + p];
                            s2 += g[base + p] * xhat[base + p];
                        }
                        sum_g[ci] += s1;
                        sum_g_xhat[ci] += s2;
                    }
                }
                if (bn >= 0) t.accumulate(bn, sum_g.data(), c);
                if (gn >= 0) t.accumulate(gn, sum_g_xhat.data(), c);
                if (xn >= 0) {
                    std::vector<S> gx(n * c * hw);
                    const auto& ga = gd.values();
                    for (std::int64_t ni = 0; ni < n; ++ni) {
                        for (std::int64_t ci = 0; ci < c; ++ci) {
                            const std::int64_t base = (ni * c + ci) * hw;
                            const S scale_c = ga[ci] * invstd[ci];
                            if (training) {
                                const S mf = static_cast<S>(m);
                                for (std::int64_t p = 0; p < hw; ++p) {
                                    gx[base + p] =
                                        (scale_c / mf) * (mf * g[base + p] - sum_g[ci] -
                                                          xhat[base + p] * sum_g_xhat[ci]);
                                }
                            } else {
                                for (std::int64_t p = 0; p < hw; ++p) {
                                    gx[base + p] = scale_c * g[base + p];
                                }
                            }
                        }
                    }
                    t.accumulate(xn, std::move(gx));
                }
            });
    }
    return out;
}

#define ASH_INSTANTIATE_NN_OPS(S)                                                             \
    template TensorT<S> conv2d<S>(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&,    \
                                  int, int, TapeT<S>*);                                       \
    template TensorT<S> pool2d<S>(PoolKind, const TensorT<S>&, int, int, int, TapeT<S>*);     \
    template TensorT<S> channel_reduce<S>(ReduceKind, const TensorT<S>&, TapeT<S>*);          \
    template TensorT<S> global_avg_pool<S>(const TensorT<S>&, TapeT<S>*);                     \
    template TensorT<S> batchnorm2d<S>(const TensorT<S>&, const TensorT<S>&,                  \
                                       const TensorT<S>&, TensorT<S>&, TensorT<S>&, double,   \
                                       double, bool, TapeT<S>*);

ASH_INSTANTIATE_NN_OPS(float)
ASH_INSTANTIATE_NN_OPS(double)

#undef ASH_INSTANTIATE_NN_OPS

}  // namespace ash
