#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "antnet/tensor.hpp"

namespace antnet {

/// Geometry and grouping of one convolution. For transposed_conv the same
/// fields describe the paired forward convolution; the op is its exact
/// adjoint.
struct ConvSpec {
    i64 kernel = 1;
    i64 c_in = 1;
    i64 c_out = 1;
    i64 stride = 1;
    i64 padding = 0;
    i64 groups = 1;
    bool has_bias = false;

    void validate() const {
        if (kernel < 1 || kernel % 2 == 0) throw DimensionError("conv kernel must be odd and positive unless transposed");
        validate_channels();
    }

    void validate_channels() const {
        if (c_in < 1 || c_out < 1 || stride < 1 || padding < 0 || groups < 1)
            throw DimensionError("conv spec fields out of range");
        if (c_in % groups != 0 || c_out % groups != 0)
            throw DimensionError("conv groups must divide c_in and c_out");
    }

    bool depthwise() const { return groups == c_in && c_in == c_out; }
};

template <typename T>
struct NormParams {
    std::vector<T> gamma, beta, mean, var;
    T eps = T(1e-5);

    static NormParams identity(i64 channels) {
        NormParams p;
        p.gamma.assign(channels, T(1));
        p.beta.assign(channels, T(0));
        p.mean.assign(channels, T(0));
        p.var.assign(channels, T(1));
        p.eps = T(0);
        return p;
    }

    void validate(i64 channels) const {
        const auto want = static_cast<std::size_t>(channels);
        if (gamma.size() != want || beta.size() != want || mean.size() != want || var.size() != want)
            throw DimensionError("norm parameter vectors must have length == channel count");
        if (eps < T(0)) throw DomainError("norm eps must be >= 0");
        for (const T v : var)
            if (v < T(0)) throw DomainError("norm variance must be >= 0");
    }
};

enum class Act { silu, gelu };
enum class PoolKind { avg, max };

// ---------------------------------------------------------------------------
// conv2d: grouped cross-correlation, weight shape (c_out, c_in/g, k, k).
// Accumulation order is fixed (ci within group, then kh, then kw) so results
// are bitwise reproducible.
// ---------------------------------------------------------------------------
template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const Tensor4<T>& weight,
                  const std::vector<std::type_identity_t<T>>* bias, const ConvSpec& spec) {
    spec.validate_channels();
    if (x.c != spec.c_in)
        throw DimensionError("conv2d: input has " + std::to_string(x.c) + " channels, spec expects " +
                             std::to_string(spec.c_in));
    const i64 k = spec.kernel;
    const i64 cin_g = spec.c_in / spec.groups;
    const i64 cout_g = spec.c_out / spec.groups;
    if (weight.n != spec.c_out || weight.c != cin_g || weight.h != k || weight.w != k)
        throw DimensionError("conv2d: weight shape " + weight.shape_str() + " does not match spec");
    if (spec.has_bias) {
        if (bias == nullptr || static_cast<i64>(bias->size()) != spec.c_out)
            throw DimensionError("conv2d: bias vector must have length c_out");
    }
    const i64 ho = conv_out_dim(x.h, k, spec.stride, spec.padding);
    const i64 wo = conv_out_dim(x.w, k, spec.stride, spec.padding);
    if (ho < 1 || wo < 1)
        throw GeometryError("conv2d: non-positive output dims for input " + x.shape_str());

    Tensor4<T> y(x.n, spec.c_out, ho, wo);
    const T* xd = x.data.data();
    const T* wd = weight.data.data();
    T* yd = y.data.data();
    for (i64 in = 0; in < x.n; ++in) {
        for (i64 g = 0; g < spec.groups; ++g) {
            for (i64 oc = 0; oc < cout_g; ++oc) {
                const i64 co = g * cout_g + oc;
                const T b = spec.has_bias ? (*bias)[static_cast<std::size_t>(co)] : T(0);
                for (i64 oy = 0; oy < ho; ++oy) {
                    // hoist window clipping out of the accumulation loops;
                    // skipped taps contribute nothing, order of the rest is
                    // unchanged (ci, then kh, then kw)
                    const i64 base_y = oy * spec.stride - spec.padding;
                    const i64 kh_lo = std::max<i64>(0, -base_y);
                    const i64 kh_hi = std::min<i64>(k, x.h - base_y);
                    for (i64 ox = 0; ox < wo; ++ox) {
                        const i64 base_x = ox * spec.stride - spec.padding;
                        const i64 kw_lo = std::max<i64>(0, -base_x);
                        const i64 kw_hi = std::min<i64>(k, x.w - base_x);
                        T acc = b;
                        for (i64 ic = 0; ic < cin_g; ++ic) {
                            const i64 ci = g * cin_g + ic;
                            const T* xplane = xd + (in * x.c + ci) * x.h * x.w;
                            const T* wplane = wd + (co * cin_g + ic) * k * k;
                            for (i64 kh = kh_lo; kh < kh_hi; ++kh) {
                                const T* xrow = xplane + (base_y + kh) * x.w + base_x;
                                const T* wrow = wplane + kh * k;
                                for (i64 kw = kw_lo; kw < kw_hi; ++kw) {
                                    acc += xrow[kw] * wrow[kw];
                                }
                            }
                        }
                        yd[((in * spec.c_out + co) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
    }
    return y;
}

// ---------------------------------------------------------------------------
// transposed_conv: exact adjoint of conv2d with the same weight and spec.
// The input plays the role of the paired convolution's output (spec.c_out
// channels); the result has spec.c_in channels and spatial dims
// (H-1)*stride + k - 2*padding by default. When the paired convolution's
// floor arithmetic dropped a remainder, pass the original input dims via
// out_h/out_w to recover the exact adjoint geometry.
// ---------------------------------------------------------------------------
template <typename T>
Tensor4<T> transposed_conv(const Tensor4<T>& x, const Tensor4<T>& weight, const ConvSpec& spec,
                           i64 out_h = -1, i64 out_w = -1) {
    spec.validate_channels();
    if (x.c != spec.c_out)
        throw DimensionError("transposed_conv: input has " + std::to_string(x.c) +
                             " channels, spec pairs with c_out " + std::to_string(spec.c_out));
    const i64 k = spec.kernel;
    const i64 cin_g = spec.c_in / spec.groups;
    const i64 cout_g = spec.c_out / spec.groups;
    if (weight.n != spec.c_out || weight.c != cin_g || weight.h != k || weight.w != k)
        throw DimensionError("transposed_conv: weight shape " + weight.shape_str() + " does not match spec");
    const i64 ho = out_h > 0 ? out_h : (x.h - 1) * spec.stride + k - 2 * spec.padding;
    const i64 wo = out_w > 0 ? out_w : (x.w - 1) * spec.stride + k - 2 * spec.padding;
    if (ho < 1 || wo < 1) throw GeometryError("transposed_conv: non-positive output dims");
    if (conv_out_dim(ho, k, spec.stride, spec.padding) != x.h ||
        conv_out_dim(wo, k, spec.stride, spec.padding) != x.w)
        throw GeometryError("transposed_conv: output dims do not pair with the input grid");

    Tensor4<T> y(x.n, spec.c_in, ho, wo);
    for (i64 in = 0; in < x.n; ++in) {
        for (i64 g = 0; g < spec.groups; ++g) {
            for (i64 oc = 0; oc < cout_g; ++oc) {
                const i64 co = g * cout_g + oc;
                for (i64 oy = 0; oy < x.h; ++oy) {
                    for (i64 ox = 0; ox < x.w; ++ox) {
                        const T v = x.at(in, co, oy, ox);
                        for (i64 ic = 0; ic < cin_g; ++ic) {
                            const i64 ci = g * cin_g + ic;
                            for (i64 kh = 0; kh < k; ++kh) {
                                const i64 iy = oy * spec.stride + kh - spec.padding;
                                if (iy < 0 || iy >= ho) continue;
                                for (i64 kw = 0; kw < k; ++kw) {
                                    const i64 ix = ox * spec.stride + kw - spec.padding;
                                    if (ix < 0 || ix >= wo) continue;
                                    y.at(in, ci, iy, ix) += v * weight.at(co, ic, kh, kw);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor4<T> batchnorm_infer(const Tensor4<T>& x, const NormParams<T>& p) {
    p.validate(x.c);
    Tensor4<T> y(x.n, x.c, x.h, x.w);
    const i64 plane = x.h * x.w;
    for (i64 in = 0; in < x.n; ++in) {
        for (i64 ic = 0; ic < x.c; ++ic) {
            const auto uc = static_cast<std::size_t>(ic);
            const T scale = p.gamma[uc] / std::sqrt(p.var[uc] + p.eps);
            const T shift = p.beta[uc] - p.mean[uc] * scale;
            const i64 base = (in * x.c + ic) * plane;
            for (i64 i = 0; i < plane; ++i) {
                y.data[static_cast<std::size_t>(base + i)] =
                    x.data[static_cast<std::size_t>(base + i)] * scale + shift;
            }
        }
    }
    return y;
}

template <typename T>
T sigmoid_scalar(T v) {
    return T(1) / (T(1) + std::exp(-v));
}

template <typename T>
T silu_scalar(T v) {
    return v * sigmoid_scalar(v);
}

// Exact Gaussian-CDF formulation, not the tanh approximation.
template <typename T>
T gelu_scalar(T v) {
    return T(0.5) * v * (T(1) + std::erf(v * T(0.7071067811865475244)));
}

template <typename T>
Tensor4<T> activation(const Tensor4<T>& x, Act kind) {
    Tensor4<T> y(x.n, x.c, x.h, x.w);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        y.data[i] = kind == Act::silu ? silu_scalar(x.data[i]) : gelu_scalar(x.data[i]);
    }
    return y;
}

// Padding (max pooling only) treats out-of-window cells as absent; used by
// SPPF's k=5 s=1 p=2 pools. The plain spec form is padding == 0.
template <typename T>
Tensor4<T> pool(const Tensor4<T>& x, PoolKind kind, i64 k, i64 stride, i64 padding = 0) {
    if (k < 1 || stride < 1 || padding < 0) throw DimensionError("pool: bad kernel/stride/padding");
    if (padding > 0 && kind == PoolKind::avg) throw CapabilityError("pool: padded avg pooling unsupported");
    const i64 ho = conv_out_dim(x.h, k, stride, padding);
    const i64 wo = conv_out_dim(x.w, k, stride, padding);
    if (ho < 1 || wo < 1) throw GeometryError("pool: empty output for input " + x.shape_str());
    Tensor4<T> y(x.n, x.c, ho, wo);
    for (i64 in = 0; in < x.n; ++in) {
        for (i64 ic = 0; ic < x.c; ++ic) {
            for (i64 oy = 0; oy < ho; ++oy) {
                for (i64 ox = 0; ox < wo; ++ox) {
                    if (kind == PoolKind::avg) {
                        T acc = T(0);
                        for (i64 kh = 0; kh < k; ++kh) {
                            for (i64 kw = 0; kw < k; ++kw) {
                                acc += x.at(in, ic, oy * stride + kh, ox * stride + kw);
                            }
                        }
                        y.at(in, ic, oy, ox) = acc / static_cast<T>(k * k);
                    } else {
                        T best = -std::numeric_limits<T>::infinity();
                        for (i64 kh = 0; kh < k; ++kh) {
                            const i64 iy = oy * stride + kh - padding;
                            if (iy < 0 || iy >= x.h) continue;
                            for (i64 kw = 0; kw < k; ++kw) {
                                const i64 ix = ox * stride + kw - padding;
                                if (ix < 0 || ix >= x.w) continue;
                                best = std::max(best, x.at(in, ic, iy, ix));
                            }
                        }
                        y.at(in, ic, oy, ox) = best;
                    }
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor4<T> upsample_nearest(const Tensor4<T>& x, i64 factor) {
    if (factor < 1) throw DimensionError("upsample_nearest: factor must be >= 1");
    Tensor4<T> y(x.n, x.c, x.h * factor, x.w * factor);
    for (i64 in = 0; in < x.n; ++in)
        for (i64 ic = 0; ic < x.c; ++ic)
            for (i64 iy = 0; iy < y.h; ++iy)
                for (i64 ix = 0; ix < y.w; ++ix)
                    y.at(in, ic, iy, ix) = x.at(in, ic, iy / factor, ix / factor);
    return y;
}

template <typename T>
Tensor4<T> concat_channels(const std::vector<const Tensor4<T>*>& xs) {
    if (xs.empty()) throw DimensionError("concat_channels: no inputs");
    i64 total_c = 0;
    for (const auto* t : xs) {
        if (t->n != xs[0]->n || t->h != xs[0]->h || t->w != xs[0]->w)
            throw DimensionError("concat_channels: inputs must agree on n,h,w");
        total_c += t->c;
    }
    Tensor4<T> y(xs[0]->n, total_c, xs[0]->h, xs[0]->w);
    const i64 plane = y.h * y.w;
    for (i64 in = 0; in < y.n; ++in) {
        i64 co = 0;
        for (const auto* t : xs) {
            for (i64 ic = 0; ic < t->c; ++ic, ++co) {
                const i64 src = (in * t->c + ic) * plane;
                const i64 dst = (in * total_c + co) * plane;
                std::copy_n(t->data.begin() + src, plane, y.data.begin() + dst);
            }
        }
    }
    return y;
}

template <typename T>
Tensor4<T> add(const Tensor4<T>& x, const Tensor4<T>& y) {
    if (!x.same_shape(y))
        throw DimensionError("add: shape mismatch " + x.shape_str() + " vs " + y.shape_str());
    Tensor4<T> z(x.n, x.c, x.h, x.w);
    for (std::size_t i = 0; i < x.data.size(); ++i) z.data[i] = x.data[i] + y.data[i];
    return z;
}

// ---------------------------------------------------------------------------
// Matrix ops backing the attention path.
// ---------------------------------------------------------------------------
template <typename T>
Mat<T> linear(const Mat<T>& x, const Mat<T>& weight, const std::vector<T>* bias = nullptr) {
    if (x.cols != weight.rows) throw DimensionError("linear: inner dims disagree");
    if (bias != nullptr && static_cast<i64>(bias->size()) != weight.cols)
        throw DimensionError("linear: bias length must equal d_out");
    Mat<T> y(x.rows, weight.cols);
    for (i64 r = 0; r < x.rows; ++r) {
        for (i64 c = 0; c < weight.cols; ++c) {
            T acc = bias ? (*bias)[static_cast<std::size_t>(c)] : T(0);
            for (i64 i = 0; i < x.cols; ++i) acc += x.at(r, i) * weight.at(i, c);
            y.at(r, c) = acc;
        }
    }
    return y;
}

template <typename T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
    return linear(a, b);
}

/// a * b^T
template <typename T>
Mat<T> matmul_nt(const Mat<T>& a, const Mat<T>& b) {
    if (a.cols != b.cols) throw DimensionError("matmul_nt: inner dims disagree");
    Mat<T> y(a.rows, b.rows);
    for (i64 r = 0; r < a.rows; ++r)
        for (i64 c = 0; c < b.rows; ++c) {
            T acc = T(0);
            for (i64 i = 0; i < a.cols; ++i) acc += a.at(r, i) * b.at(c, i);
            y.at(r, c) = acc;
        }
    return y;
}

/// a^T * b
template <typename T>
Mat<T> matmul_tn(const Mat<T>& a, const Mat<T>& b) {
    if (a.rows != b.rows) throw DimensionError("matmul_tn: inner dims disagree");
    Mat<T> y(a.cols, b.cols);
    for (i64 r = 0; r < a.cols; ++r)
        for (i64 c = 0; c < b.cols; ++c) {
            T acc = T(0);
            for (i64 i = 0; i < a.rows; ++i) acc += a.at(i, r) * b.at(i, c);
            y.at(r, c) = acc;
        }
    return y;
}

/// Row-wise softmax, stabilized by subtracting the row maximum.
template <typename T>
Mat<T> softmax_rows(const Mat<T>& x) {
    Mat<T> y(x.rows, x.cols);
    for (i64 r = 0; r < x.rows; ++r) {
        T mx = x.at(r, 0);
        for (i64 c = 1; c < x.cols; ++c) mx = std::max(mx, x.at(r, c));
        T sum = T(0);
        for (i64 c = 0; c < x.cols; ++c) {
            const T e = std::exp(x.at(r, c) - mx);
            y.at(r, c) = e;
            sum += e;
        }
        for (i64 c = 0; c < x.cols; ++c) y.at(r, c) /= sum;
    }
    return y;
}

/// Flattens (n,C,H,W) batch item `in` to an (H*W, C) token matrix.
template <typename T>
Mat<T> tokens_from(const Tensor4<T>& x, i64 in) {
    Mat<T> m(x.h * x.w, x.c);
    for (i64 ic = 0; ic < x.c; ++ic)
        for (i64 iy = 0; iy < x.h; ++iy)
            for (i64 ix = 0; ix < x.w; ++ix) m.at(iy * x.w + ix, ic) = x.at(in, ic, iy, ix);
    return m;
}

template <typename T>
void tokens_into(const Mat<T>& m, Tensor4<T>& x, i64 in) {
    if (m.rows != x.h * x.w || m.cols != x.c) throw DimensionError("tokens_into: shape mismatch");
    for (i64 ic = 0; ic < x.c; ++ic)
        for (i64 iy = 0; iy < x.h; ++iy)
            for (i64 ix = 0; ix < x.w; ++ix) x.at(in, ic, iy, ix) = m.at(iy * x.w + ix, ic);
}

}  // namespace antnet
