#pragma once

#include <functional>
#include <map>
#include <vector>

#include "antnet/ops.hpp"

namespace antnet {

// Vector-Jacobian products for every tensor-core primitive. Each function
// takes the forward inputs plus the upstream gradient and returns exact
// analytic gradients with shapes mirroring the inputs.

template <typename T>
struct ConvGrads {
    Tensor4<T> dx;
    Tensor4<T> dweight;
    std::vector<T> dbias;  // empty when the conv has no bias
};

// dx is literally transposed_conv(up, weight, spec): the adjoint identity
// holds bitwise by construction.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& x, const Tensor4<T>& weight, const ConvSpec& spec,
                             const Tensor4<T>& up) {
    ConvGrads<T> g;
    g.dx = transposed_conv(up, weight, spec, x.h, x.w);
    g.dweight = Tensor4<T>(weight.n, weight.c, weight.h, weight.w);
    const i64 k = spec.kernel;
    const i64 cin_g = spec.c_in / spec.groups;
    const i64 cout_g = spec.c_out / spec.groups;
    for (i64 in = 0; in < x.n; ++in) {
        for (i64 gi = 0; gi < spec.groups; ++gi) {
            for (i64 oc = 0; oc < cout_g; ++oc) {
                const i64 co = gi * cout_g + oc;
                for (i64 oy = 0; oy < up.h; ++oy) {
                    for (i64 ox = 0; ox < up.w; ++ox) {
                        const T u = up.at(in, co, oy, ox);
                        for (i64 ic = 0; ic < cin_g; ++ic) {
                            const i64 ci = gi * cin_g + ic;
                            for (i64 kh = 0; kh < k; ++kh) {
                                const i64 iy = oy * spec.stride + kh - spec.padding;
                                if (iy < 0 || iy >= x.h) continue;
                                for (i64 kw = 0; kw < k; ++kw) {
                                    const i64 ix = ox * spec.stride + kw - spec.padding;
                                    if (ix < 0 || ix >= x.w) continue;
                                    g.dweight.at(co, ic, kh, kw) += u * x.at(in, ci, iy, ix);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if (spec.has_bias) {
        g.dbias.assign(static_cast<std::size_t>(spec.c_out), T(0));
        for (i64 in = 0; in < up.n; ++in)
            for (i64 co = 0; co < up.c; ++co)
                for (i64 oy = 0; oy < up.h; ++oy)
                    for (i64 ox = 0; ox < up.w; ++ox)
                        g.dbias[static_cast<std::size_t>(co)] += up.at(in, co, oy, ox);
    }
    return g;
}

template <typename T>
struct TransposedConvGrads {
    Tensor4<T> dx;
    Tensor4<T> dweight;
};

// The adjoint of the adjoint: dx is a plain conv2d of the upstream.
template <typename T>
TransposedConvGrads<T> transposed_conv_backward(const Tensor4<T>& x, const Tensor4<T>& weight,
                                                const ConvSpec& spec, const Tensor4<T>& up) {
    TransposedConvGrads<T> g;
    ConvSpec no_bias = spec;
    no_bias.has_bias = false;
    g.dx = conv2d(up, weight, nullptr, no_bias);
    g.dweight = Tensor4<T>(weight.n, weight.c, weight.h, weight.w);
    const i64 k = spec.kernel;
    const i64 cin_g = spec.c_in / spec.groups;
    const i64 cout_g = spec.c_out / spec.groups;
    for (i64 in = 0; in < x.n; ++in) {
        for (i64 gi = 0; gi < spec.groups; ++gi) {
            for (i64 oc = 0; oc < cout_g; ++oc) {
                const i64 co = gi * cout_g + oc;
                for (i64 oy = 0; oy < x.h; ++oy) {
                    for (i64 ox = 0; ox < x.w; ++ox) {
                        const T v = x.at(in, co, oy, ox);
                        for (i64 ic = 0; ic < cin_g; ++ic) {
                            const i64 ci = gi * cin_g + ic;
                            for (i64 kh = 0; kh < k; ++kh) {
                                const i64 iy = oy * spec.stride + kh - spec.padding;
                                if (iy < 0 || iy >= up.h) continue;
                                for (i64 kw = 0; kw < k; ++kw) {
                                    const i64 ix = ox * spec.stride + kw - spec.padding;
                                    if (ix < 0 || ix >= up.w) continue;
                                    g.dweight.at(co, ic, kh, kw) += v * up.at(in, ci, iy, ix);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return g;
}

template <typename T>
struct NormGrads {
    Tensor4<T> dx;
    std::vector<T> dgamma, dbeta;
};

// Inference form: mean/var are constants, so the map is affine per channel.
template <typename T>
NormGrads<T> batchnorm_infer_backward(const Tensor4<T>& x, const NormParams<T>& p, const Tensor4<T>& up) {
    p.validate(x.c);
    NormGrads<T> g;
    g.dx = Tensor4<T>(x.n, x.c, x.h, x.w);
    g.dgamma.assign(static_cast<std::size_t>(x.c), T(0));
    g.dbeta.assign(static_cast<std::size_t>(x.c), T(0));
    const i64 plane = x.h * x.w;
    for (i64 in = 0; in < x.n; ++in) {
        for (i64 ic = 0; ic < x.c; ++ic) {
            const auto uc = static_cast<std::size_t>(ic);
            const T inv_std = T(1) / std::sqrt(p.var[uc] + p.eps);
            const i64 base = (in * x.c + ic) * plane;
            for (i64 i = 0; i < plane; ++i) {
                const auto idx = static_cast<std::size_t>(base + i);
                const T u = up.data[idx];
                g.dx.data[idx] = u * p.gamma[uc] * inv_std;
                g.dgamma[uc] += u * (x.data[idx] - p.mean[uc]) * inv_std;
                g.dbeta[uc] += u;
            }
        }
    }
    return g;
}

template <typename T>
T silu_grad_scalar(T v) {
    const T s = sigmoid_scalar(v);
    return s * (T(1) + v * (T(1) - s));
}

template <typename T>
T gelu_grad_scalar(T v) {
    const T cdf = T(0.5) * (T(1) + std::erf(v * T(0.7071067811865475244)));
    const T pdf = std::exp(T(-0.5) * v * v) * T(0.3989422804014326779);
    return cdf + v * pdf;
}

template <typename T>
Tensor4<T> activation_backward(const Tensor4<T>& x, Act kind, const Tensor4<T>& up) {
    Tensor4<T> dx(x.n, x.c, x.h, x.w);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const T d = kind == Act::silu ? silu_grad_scalar(x.data[i]) : gelu_grad_scalar(x.data[i]);
        dx.data[i] = up.data[i] * d;
    }
    return dx;
}

// Max-pool gradient routes to the first maximal element in scan order on
// exact ties.
template <typename T>
Tensor4<T> pool_backward(const Tensor4<T>& x, PoolKind kind, i64 k, i64 stride, const Tensor4<T>& up,
                         i64 padding = 0) {
    Tensor4<T> dx(x.n, x.c, x.h, x.w);
    for (i64 in = 0; in < x.n; ++in) {
        for (i64 ic = 0; ic < x.c; ++ic) {
            for (i64 oy = 0; oy < up.h; ++oy) {
                for (i64 ox = 0; ox < up.w; ++ox) {
                    const T u = up.at(in, ic, oy, ox);
                    if (kind == PoolKind::avg) {
                        const T share = u / static_cast<T>(k * k);
                        for (i64 kh = 0; kh < k; ++kh)
                            for (i64 kw = 0; kw < k; ++kw)
                                dx.at(in, ic, oy * stride + kh, ox * stride + kw) += share;
                    } else {
                        i64 by = -1, bx = -1;
                        T best = -std::numeric_limits<T>::infinity();
                        for (i64 kh = 0; kh < k; ++kh) {
                            const i64 iy = oy * stride + kh - padding;
                            if (iy < 0 || iy >= x.h) continue;
                            for (i64 kw = 0; kw < k; ++kw) {
                                const i64 ix = ox * stride + kw - padding;
                                if (ix < 0 || ix >= x.w) continue;
                                if (x.at(in, ic, iy, ix) > best) {
                                    best = x.at(in, ic, iy, ix);
                                    by = iy;
                                    bx = ix;
                                }
                            }
                        }
                        dx.at(in, ic, by, bx) += u;
                    }
                }
            }
        }
    }
    return dx;
}

template <typename T>
Tensor4<T> upsample_nearest_backward(const Tensor4<T>& x, i64 factor, const Tensor4<T>& up) {
    Tensor4<T> dx(x.n, x.c, x.h, x.w);
    for (i64 in = 0; in < x.n; ++in)
        for (i64 ic = 0; ic < x.c; ++ic)
            for (i64 iy = 0; iy < up.h; ++iy)
                for (i64 ix = 0; ix < up.w; ++ix)
                    dx.at(in, ic, iy / factor, ix / factor) += up.at(in, ic, iy, ix);
    return dx;
}

template <typename T>
std::vector<Tensor4<T>> concat_channels_backward(const std::vector<i64>& channel_counts,
                                                 const Tensor4<T>& up) {
    std::vector<Tensor4<T>> grads;
    const i64 plane = up.h * up.w;
    i64 co = 0;
    for (const i64 nc : channel_counts) {
        Tensor4<T> g(up.n, nc, up.h, up.w);
        for (i64 in = 0; in < up.n; ++in)
            for (i64 ic = 0; ic < nc; ++ic) {
                const i64 src = (in * up.c + co + ic) * plane;
                const i64 dst = (in * nc + ic) * plane;
                std::copy_n(up.data.begin() + src, plane, g.data.begin() + dst);
            }
        co += nc;
        grads.push_back(std::move(g));
    }
    return grads;
}

template <typename T>
struct LinearGrads {
    Mat<T> dx;
    Mat<T> dweight;
    std::vector<T> dbias;
};

template <typename T>
LinearGrads<T> linear_backward(const Mat<T>& x, const Mat<T>& weight, const Mat<T>& up, bool has_bias) {
    LinearGrads<T> g;
    g.dx = matmul_nt(up, weight);      // up * W^T
    g.dweight = matmul_tn(x, up);      // x^T * up
    if (has_bias) {
        g.dbias.assign(static_cast<std::size_t>(weight.cols), T(0));
        for (i64 r = 0; r < up.rows; ++r)
            for (i64 c = 0; c < up.cols; ++c) g.dbias[static_cast<std::size_t>(c)] += up.at(r, c);
    }
    return g;
}

/// Backward through row-wise softmax given its output y: per row,
/// dx = y .* (up - sum(up .* y)).
template <typename T>
Mat<T> softmax_rows_backward(const Mat<T>& y, const Mat<T>& up) {
    Mat<T> dx(y.rows, y.cols);
    for (i64 r = 0; r < y.rows; ++r) {
        T dot = T(0);
        for (i64 c = 0; c < y.cols; ++c) dot += up.at(r, c) * y.at(r, c);
        for (i64 c = 0; c < y.cols; ++c) dx.at(r, c) = y.at(r, c) * (up.at(r, c) - dot);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Finite differences.
// ---------------------------------------------------------------------------
template <typename T>
using ScalarFn = std::function<T(const Tensor4<T>&)>;

/// Central differences over every coordinate: (f(x+h e_i) - f(x-h e_i)) / 2h.
template <typename T>
Tensor4<T> finite_diff(const ScalarFn<T>& f, const Tensor4<T>& x, T h) {
    if (h <= T(0)) throw DomainError("finite_diff: step must be positive");
    Tensor4<T> g(x.n, x.c, x.h, x.w);
    Tensor4<T> probe = x;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const T orig = probe.data[i];
        probe.data[i] = orig + h;
        const T fp = f(probe);
        probe.data[i] = orig - h;
        const T fm = f(probe);
        probe.data[i] = orig;
        g.data[i] = (fp - fm) / (T(2) * h);
    }
    return g;
}

/// Single-coordinate central difference over any flat storage.
template <typename T>
T finite_diff_at(const std::function<T()>& f, T* slot, T h) {
    const T orig = *slot;
    *slot = orig + h;
    const T fp = f();
    *slot = orig - h;
    const T fm = f();
    *slot = orig;
    return (fp - fm) / (T(2) * h);
}

/// |a-b| / max(|a|,|b|,1e-8); stable near zero.
inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

/// Flat per-parameter gradient accumulator keyed by hierarchical name.
template <typename T>
struct GradMap {
    std::map<std::string, std::vector<T>> grads;

    std::vector<T>& slot(const std::string& name, i64 size) {
        auto& v = grads[name];
        if (v.empty()) v.assign(static_cast<std::size_t>(size), T(0));
        return v;
    }

    void accumulate(const std::string& name, const std::vector<T>& g) {
        auto& v = slot(name, static_cast<i64>(g.size()));
        for (std::size_t i = 0; i < g.size(); ++i) v[i] += g[i];
    }

    void accumulate(const std::string& name, const Tensor4<T>& g) { accumulate(name, g.data); }
    void accumulate(const std::string& name, const Mat<T>& g) { accumulate(name, g.data); }
};

}  // namespace antnet
