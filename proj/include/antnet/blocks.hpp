#pragma once

#include <optional>
#include <string>
#include <vector>

#include "antnet/grad.hpp"
#include "antnet/ops.hpp"

namespace antnet {

// Parameterized building blocks. Weights are plain value members, read-only
// after construction/init; forward calls over distinct inputs are reentrant.
// Blocks that take part in gradient checking carry a Cache struct plus a
// backward() returning the input gradient and accumulating parameter
// gradients into a GradMap under hierarchical names.

template <typename T>
using ParamFn = std::function<void(const std::string&, TensorView<T>)>;

// ---------------------------------------------------------------------------
// ConvLayer: bare convolution, optional bias.
// ---------------------------------------------------------------------------
template <typename T>
struct ConvLayer {
    ConvSpec spec;
    Tensor4<T> weight;
    std::vector<T> bias;

    ConvLayer() = default;
    explicit ConvLayer(const ConvSpec& s)
        : spec(s), weight(s.c_out, s.c_in / s.groups, s.kernel, s.kernel) {
        if (s.has_bias) bias.assign(static_cast<std::size_t>(s.c_out), T(0));
    }

    void init(Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(weight.c * weight.h * weight.w));
        for (auto& v : weight.data) v = static_cast<T>(rng.uniform(-bound, bound));
        // bias stays zero
    }

    Tensor4<T> forward(const Tensor4<T>& x) const {
        return conv2d(x, weight, spec.has_bias ? &bias : nullptr, spec);
    }

    Tensor4<T> backward(const Tensor4<T>& x, const Tensor4<T>& up, GradMap<T>& grads,
                        const std::string& prefix) const {
        ConvGrads<T> g = conv2d_backward(x, weight, spec, up);
        grads.accumulate(prefix + "weight", g.dweight);
        if (spec.has_bias) grads.accumulate(prefix + "bias", g.dbias);
        return g.dx;
    }

    void visit_params(const std::string& prefix, const ParamFn<T>& fn) {
        fn(prefix + "weight", view_of(weight));
        if (spec.has_bias) fn(prefix + "bias", view_of(bias));
    }
};

// ---------------------------------------------------------------------------
// Norm: per-channel batch normalization in inference form (default), or
// channel-wise layer normalization behind the same interface. Running
// statistics are fixed structural constants (mean 0, var 1); only gamma and
// beta are learnable.
// ---------------------------------------------------------------------------
enum class NormKind { batch, layer };

template <typename T>
struct Norm {
    NormKind kind = NormKind::batch;
    NormParams<T> p;

    Norm() = default;
    explicit Norm(i64 channels, NormKind k = NormKind::batch) : kind(k) {
        p.gamma.assign(static_cast<std::size_t>(channels), T(1));
        p.beta.assign(static_cast<std::size_t>(channels), T(0));
        p.mean.assign(static_cast<std::size_t>(channels), T(0));
        p.var.assign(static_cast<std::size_t>(channels), T(1));
        p.eps = T(1e-5);
    }

    void init(Rng&) { /* gamma=1, beta=0 already */ }

    Tensor4<T> forward(const Tensor4<T>& x) const {
        if (kind == NormKind::batch) return batchnorm_infer(x, p);
        return layernorm_forward(x);
    }

    Tensor4<T> backward(const Tensor4<T>& x, const Tensor4<T>& up, GradMap<T>& grads,
                        const std::string& prefix) const {
        if (kind == NormKind::batch) {
            NormGrads<T> g = batchnorm_infer_backward(x, p, up);
            grads.accumulate(prefix + "gamma", g.dgamma);
            grads.accumulate(prefix + "beta", g.dbeta);
            return g.dx;
        }
        return layernorm_backward(x, up, grads, prefix);
    }

    void visit_params(const std::string& prefix, const ParamFn<T>& fn) {
        fn(prefix + "gamma", view_of(p.gamma));
        fn(prefix + "beta", view_of(p.beta));
    }

private:
    Tensor4<T> layernorm_forward(const Tensor4<T>& x) const {
        p.validate(x.c);
        Tensor4<T> y(x.n, x.c, x.h, x.w);
        for (i64 in = 0; in < x.n; ++in)
            for (i64 iy = 0; iy < x.h; ++iy)
                for (i64 ix = 0; ix < x.w; ++ix) {
                    T mu = T(0);
                    for (i64 ic = 0; ic < x.c; ++ic) mu += x.at(in, ic, iy, ix);
                    mu /= static_cast<T>(x.c);
                    T var = T(0);
                    for (i64 ic = 0; ic < x.c; ++ic) {
                        const T d = x.at(in, ic, iy, ix) - mu;
                        var += d * d;
                    }
                    var /= static_cast<T>(x.c);
                    const T inv = T(1) / std::sqrt(var + p.eps);
                    for (i64 ic = 0; ic < x.c; ++ic) {
                        const auto uc = static_cast<std::size_t>(ic);
                        y.at(in, ic, iy, ix) =
                            p.gamma[uc] * (x.at(in, ic, iy, ix) - mu) * inv + p.beta[uc];
                    }
                }
        return y;
    }

    Tensor4<T> layernorm_backward(const Tensor4<T>& x, const Tensor4<T>& up, GradMap<T>& grads,
                                  const std::string& prefix) const {
        Tensor4<T> dx(x.n, x.c, x.h, x.w);
        std::vector<T> dgamma(static_cast<std::size_t>(x.c), T(0));
        std::vector<T> dbeta(static_cast<std::size_t>(x.c), T(0));
        const T cn = static_cast<T>(x.c);
        for (i64 in = 0; in < x.n; ++in)
            for (i64 iy = 0; iy < x.h; ++iy)
                for (i64 ix = 0; ix < x.w; ++ix) {
                    T mu = T(0);
                    for (i64 ic = 0; ic < x.c; ++ic) mu += x.at(in, ic, iy, ix);
                    mu /= cn;
                    T var = T(0);
                    for (i64 ic = 0; ic < x.c; ++ic) {
                        const T d = x.at(in, ic, iy, ix) - mu;
                        var += d * d;
                    }
                    var /= cn;
                    const T inv = T(1) / std::sqrt(var + p.eps);
                    T sum_dh = T(0), sum_dh_xhat = T(0);
                    for (i64 ic = 0; ic < x.c; ++ic) {
                        const auto uc = static_cast<std::size_t>(ic);
                        const T xhat = (x.at(in, ic, iy, ix) - mu) * inv;
                        const T u = up.at(in, ic, iy, ix);
                        dgamma[uc] += u * xhat;
                        dbeta[uc] += u;
                        const T dh = u * p.gamma[uc];
                        sum_dh += dh;
                        sum_dh_xhat += dh * xhat;
                    }
                    for (i64 ic = 0; ic < x.c; ++ic) {
                        const auto uc = static_cast<std::size_t>(ic);
                        const T xhat = (x.at(in, ic, iy, ix) - mu) * inv;
                        const T dh = up.at(in, ic, iy, ix) * p.gamma[uc];
                        dx.at(in, ic, iy, ix) = inv * (dh - sum_dh / cn - xhat * sum_dh_xhat / cn);
                    }
                }
        grads.accumulate(prefix + "gamma", dgamma);
        grads.accumulate(prefix + "beta", dbeta);
        return dx;
    }
};

// ---------------------------------------------------------------------------
// Cbs: convolution -> batch normalization -> SiLU. Same padding k/2, no bias.
// ---------------------------------------------------------------------------
template <typename T>
struct Cbs {
    ConvLayer<T> conv;
    Norm<T> norm;

    Cbs() = default;
    // padding defaults to "same" (k/2); the 6x6 stem passes 2 explicitly
    Cbs(i64 c_in, i64 c_out, i64 k, i64 stride = 1, i64 padding = -1)
        : conv(ConvSpec{k, c_in, c_out, stride, padding >= 0 ? padding : k / 2, 1, false}),
          norm(c_out) {}

    void init(Rng& rng) {
        conv.init(rng);
        norm.init(rng);
    }

    struct Cache {
        Tensor4<T> x, conv_out, norm_out;
    };

    Tensor4<T> forward(const Tensor4<T>& x) const {
        return activation(norm.forward(conv.forward(x)), Act::silu);
    }

    Tensor4<T> forward(const Tensor4<T>& x, Cache& c) const {
        c.x = x;
        c.conv_out = conv.forward(x);
        c.norm_out = norm.forward(c.conv_out);
        return activation(c.norm_out, Act::silu);
    }

    Tensor4<T> backward(const Cache& c, const Tensor4<T>& up, GradMap<T>& grads,
                        const std::string& prefix) const {
        Tensor4<T> d = activation_backward(c.norm_out, Act::silu, up);
        d = norm.backward(c.conv_out, d, grads, prefix + "norm.");
        return conv.backward(c.x, d, grads, prefix + "conv.");
    }

    void visit_params(const std::string& prefix, const ParamFn<T>& fn) {
        conv.visit_params(prefix + "conv.", fn);
        norm.visit_params(prefix + "norm.", fn);
    }
};

// f_dw: depthwise convolution (g == channels) -> batch norm -> SiLU.
template <typename T>
struct DwUnit {
    ConvLayer<T> conv;
    Norm<T> norm;

    DwUnit() = default;
    DwUnit(i64 channels, i64 k)
        : conv(ConvSpec{k, channels, channels, 1, k / 2, channels, false}), norm(channels) {}

    void init(Rng& rng) { conv.init(rng); }

    struct Cache {
        Tensor4<T> x, conv_out, norm_out;
    };

    Tensor4<T> forward(const Tensor4<T>& x) const {
        return activation(norm.forward(conv.forward(x)), Act::silu);
    }

    Tensor4<T> forward(const Tensor4<T>& x, Cache& c) const {
        c.x = x;
        c.conv_out = conv.forward(x);
        c.norm_out = norm.forward(c.conv_out);
        return activation(c.norm_out, Act::silu);
    }

    Tensor4<T> backward(const Cache& c, const Tensor4<T>& up, GradMap<T>& grads,
                        const std::string& prefix) const {
        Tensor4<T> d = activation_backward(c.norm_out, Act::silu, up);
        d = norm.backward(c.conv_out, d, grads, prefix + "norm.");
        return conv.backward(c.x, d, grads, prefix + "conv.");
    }

    void visit_params(const std::string& prefix, const ParamFn<T>& fn) {
        conv.visit_params(prefix + "conv.", fn);
        norm.visit_params(prefix + "norm.", fn);
    }
};

// f_pw: 1x1 expand to e*C -> SiLU -> 1x1 project to C -> batch norm.
template <typename T>
struct PwUnit {
    ConvLayer<T> expand, project;
    Norm<T> norm;

    PwUnit() = default;
    PwUnit(i64 channels, double e) {
        const i64 hidden = static_cast<i64>(std::llround(e * static_cast<double>(channels)));
        if (hidden < 1) throw DimensionError("pointwise expansion must round to a positive width");
        expand = ConvLayer<T>(ConvSpec{1, channels, hidden, 1, 0, 1, false});
        project = ConvLayer<T>(ConvSpec{1, hidden, channels, 1, 0, 1, false});
        norm = Norm<T>(channels);
    }

    void init(Rng& rng) {
        expand.init(rng);
        project.init(rng);
    }

    struct Cache {
        Tensor4<T> x, ex_out, act_out, pr_out;
    };

    Tensor4<T> forward(const Tensor4<T>& x) const {
        return norm.forward(project.forward(activation(expand.forward(x), Act::silu)));
    }

    Tensor4<T> forward(const Tensor4<T>& x, Cache& c) const {
        c.x = x;
        c.ex_out = expand.forward(x);
        c.act_out = activation(c.ex_out, Act::silu);
        c.pr_out = project.forward(c.act_out);
        return norm.forward(c.pr_out);
    }

    Tensor4<T> backward(const Cache& c, const Tensor4<T>& up, GradMap<T>& grads,
                        const std::string& prefix) const {
        Tensor4<T> d = norm.backward(c.pr_out, up, grads, prefix + "norm.");
        d = project.backward(c.act_out, d, grads, prefix + "project.");
        d = activation_backward(c.ex_out, Act::silu, d);
        return expand.backward(c.x, d, grads, prefix + "expand.");
    }

    void visit_params(const std::string& prefix, const ParamFn<T>& fn) {
        expand.visit_params(prefix + "expand.", fn);
        project.visit_params(prefix + "project.", fn);
        norm.visit_params(prefix + "norm.", fn);
    }
};

// ---------------------------------------------------------------------------
// DSLK-Block: y = x + f_pw(e, f_dw(K_L, x) + path_S), where path_S is
// f_dw(K_S, x) when K_S == 3 and a plain shortcut when K_S == 0.
// ---------------------------------------------------------------------------
struct DslkBlockSpec {
    i64 k_large = 3;
    i64 k_small = 0;  // 0 => plain shortcut path
    double expand = 1.0;
    i64 channels = 0;

    void validate() const {
        if (k_large < 3 || k_large % 2 == 0) throw DimensionError("K_L must be odd and >= 3");
        if (k_small != 0 && k_small != 3) throw DimensionError("K_S must be 0 or 3");
        if (channels < 1) throw DimensionError("channels must be >= 1");
        if (std::llround(expand * static_cast<double>(channels)) < 1)
            throw DimensionError("e*C must round to a positive integer");
    }
};

template <typename T>
struct DslkBlock {
    DslkBlockSpec spec;
    DwUnit<T> dw_large;
    std::optional<DwUnit<T>> dw_small;
    PwUnit<T> pw;

    DslkBlock() = default;
    explicit DslkBlock(const DslkBlockSpec& s) : spec(s) {
        s.validate();
        dw_large = DwUnit<T>(s.channels, s.k_large);
        if (s.k_small == 3) dw_small = DwUnit<T>(s.channels, 3);
        pw = PwUnit<T>(s.channels, s.expand);
    }

    void init(Rng& rng) {
        dw_large.init(rng);
        if (dw_small) dw_small->init(rng);
        pw.init(rng);
    }

    struct Cache {
        Tensor4<T> x;
        typename DwUnit<T>::Cache large, small;
        Tensor4<T> merged;
        typename PwUnit<T>::Cache pwc;
    };

    Tensor4<T> forward(const Tensor4<T>& x) const {
        if (x.c != spec.channels) throw DimensionError("DslkBlock: channel mismatch");
        Tensor4<T> merged = dw_large.forward(x);
        merged = add(merged, dw_small ? dw_small->forward(x) : x);
        return add(x, pw.forward(merged));
    }

    Tensor4<T> forward(const Tensor4<T>& x, Cache& c) const {
        if (x.c != spec.channels) throw DimensionError("DslkBlock: channel mismatch");
        c.x = x;
        Tensor4<T> l = dw_large.forward(x, c.large);
        c.merged = add(l, dw_small ? dw_small->forward(x, c.small) : x);
        return add(x, pw.forward(c.merged, c.pwc));
    }

    Tensor4<T> backward(const Cache& c, const Tensor4<T>& up, GradMap<T>& grads,
                        const std::string& prefix) const {
        Tensor4<T> d_merged = pw.backward(c.pwc, up, grads, prefix + "pw.");
        Tensor4<T> dx = add(up, dw_large.backward(c.large, d_merged, grads, prefix + "dw_large."));
        if (dw_small) {
            dx = add(dx, dw_small->backward(c.small, d_merged, grads, prefix + "dw_small."));
        } else {
            dx = add(dx, d_merged);
        }
        return dx;
    }

    void visit_params(const std::string& prefix, const ParamFn<T>& fn) {
        dw_large.visit_params(prefix + "dw_large.", fn);
        if (dw_small) dw_small->visit_params(prefix + "dw_small.", fn);
        pw.visit_params(prefix + "pw.", fn);
    }
};

// ---------------------------------------------------------------------------
// DSLK-Layer: split-transform-merge. Path a runs CBS(1, c_out/2) through n
// chained DSLK-Blocks; path b is CBS(1, c_out/2); the concat goes through
// CBS(1, c_out).
// ---------------------------------------------------------------------------
template <typename T>
struct DslkLayer {
    Cbs<T> cv1, cv2, cv3;
    std::vector<DslkBlock<T>> blocks;

    DslkLayer() = default;
    DslkLayer(i64 c_in, i64 c_out, i64 n, i64 k_large, i64 k_small, double e) {
        if (c_out % 2 != 0) throw DimensionError("DslkLayer: channel count must be even");
        const i64 half = c_out / 2;
        cv1 = Cbs<T>(c_in, half, 1);
        cv2 = Cbs<T>(c_in, half, 1);
        cv3 = Cbs<T>(c_out, c_out, 1);
        for (i64 i = 0; i < n; ++i) blocks.emplace_back(DslkBlockSpec{k_large, k_small, e, half});
    }

    void init(Rng& rng) {
        cv1.init(rng);
        cv2.init(rng);
        for (auto& b : blocks) b.init(rng);
        cv3.init(rng);
    }

    struct Cache {
        typename Cbs<T>::Cache c1, c2, c3;
        std::vector<typename DslkBlock<T>::Cache> bc;
        i64 half = 0;
    };

    Tensor4<T> forward(const Tensor4<T>& x) const {
        Tensor4<T> a = cv1.forward(x);
        for (const auto& b : blocks) a = b.forward(a);
        Tensor4<T> bpath = cv2.forward(x);
        Tensor4<T> cat = concat_channels<T>({&a, &bpath});
        return cv3.forward(cat);
    }

    Tensor4<T> forward(const Tensor4<T>& x, Cache& c) const {
        c.bc.resize(blocks.size());
        Tensor4<T> a = cv1.forward(x, c.c1);
        c.half = a.c;
        for (std::size_t i = 0; i < blocks.size(); ++i) a = blocks[i].forward(a, c.bc[i]);
        Tensor4<T> bpath = cv2.forward(x, c.c2);
        Tensor4<T> cat = concat_channels<T>({&a, &bpath});
        return cv3.forward(cat, c.c3);
    }

    Tensor4<T> backward(const Cache& c, const Tensor4<T>& up, GradMap<T>& grads,
                        const std::string& prefix) const {
        Tensor4<T> d_cat = cv3.backward(c.c3, up, grads, prefix + "cv3.");
        auto split = concat_channels_backward<T>({c.half, c.half}, d_cat);
        Tensor4<T> d_a = std::move(split[0]);
        for (std::size_t i = blocks.size(); i-- > 0;) {
            d_a = blocks[i].backward(c.bc[i], d_a, grads, prefix + "block" + std::to_string(i) + ".");
        }
        Tensor4<T> dx = cv1.backward(c.c1, d_a, grads, prefix + "cv1.");
        return add(dx, cv2.backward(c.c2, split[1], grads, prefix + "cv2."));
    }

    void visit_params(const std::string& prefix, const ParamFn<T>& fn) {
        cv1.visit_params(prefix + "cv1.", fn);
        cv2.visit_params(prefix + "cv2.", fn);
        for (std::size_t i = 0; i < blocks.size(); ++i)
            blocks[i].visit_params(prefix + "block" + std::to_string(i) + ".", fn);
        cv3.visit_params(prefix + "cv3.", fn);
    }
};

// ---------------------------------------------------------------------------
// Multi-head self-attention over spatial tokens. Per-head projection
// matrices plus the output projection; no biases.
// ---------------------------------------------------------------------------
template <typename T>
struct Mhsa {
    i64 d_model = 0, heads = 0, d_head = 0;
    std::vector<Mat<T>> wq, wk, wv;
    Mat<T> wo;

    Mhsa() = default;
    Mhsa(i64 d_model_, i64 heads_) : d_model(d_model_), heads(heads_) {
        if (heads < 1 || d_model % heads != 0)
            throw DimensionError("Mhsa: heads must divide d_model");
        d_head = d_model / heads;
        for (i64 i = 0; i < heads; ++i) {
            wq.emplace_back(d_model, d_head);
            wk.emplace_back(d_model, d_head);
            wv.emplace_back(d_model, d_head);
        }
        wo = Mat<T>(d_model, d_model);
    }

    void init(Rng& rng) {
        auto fill = [&rng](Mat<T>& m) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(m.rows));
            for (auto& v : m.data) v = static_cast<T>(rng.uniform(-bound, bound));
        };
        for (i64 i = 0; i < heads; ++i) {
            fill(wq[static_cast<std::size_t>(i)]);
            fill(wk[static_cast<std::size_t>(i)]);
            fill(wv[static_cast<std::size_t>(i)]);
        }
        fill(wo);
    }

    struct Cache {
        // per batch item, per head
        std::vector<Mat<T>> x_tokens;
        std::vector<std::vector<Mat<T>>> q, k, v, attn;
        std::vector<Mat<T>> heads_cat;
    };

    Tensor4<T> forward(const Tensor4<T>& x) const {
        Cache scratch;
        return forward(x, scratch);
    }

    Tensor4<T> forward(const Tensor4<T>& x, Cache& c) const {
        if (x.c != d_model) throw DimensionError("Mhsa: channel count must equal d_model");
        const T scale = T(1) / std::sqrt(static_cast<T>(d_head));
        Tensor4<T> y(x.n, x.c, x.h, x.w);
        c.x_tokens.clear();
        c.q.assign(static_cast<std::size_t>(x.n), {});
        c.k.assign(static_cast<std::size_t>(x.n), {});
        c.v.assign(static_cast<std::size_t>(x.n), {});
        c.attn.assign(static_cast<std::size_t>(x.n), {});
        c.heads_cat.clear();
        for (i64 in = 0; in < x.n; ++in) {
            Mat<T> tokens = tokens_from(x, in);
            Mat<T> cat(tokens.rows, d_model);
            for (i64 hd = 0; hd < heads; ++hd) {
                const auto uh = static_cast<std::size_t>(hd);
                Mat<T> q = matmul(tokens, wq[uh]);
                Mat<T> k = matmul(tokens, wk[uh]);
                Mat<T> v = matmul(tokens, wv[uh]);
                Mat<T> scores = matmul_nt(q, k);
                for (auto& s : scores.data) s *= scale;
                Mat<T> attn = softmax_rows(scores);
                Mat<T> head_out = matmul(attn, v);
                for (i64 r = 0; r < cat.rows; ++r)
                    for (i64 col = 0; col < d_head; ++col)
                        cat.at(r, hd * d_head + col) = head_out.at(r, col);
                c.q[static_cast<std::size_t>(in)].push_back(std::move(q));
                c.k[static_cast<std::size_t>(in)].push_back(std::move(k));
                c.v[static_cast<std::size_t>(in)].push_back(std::move(v));
                c.attn[static_cast<std::size_t>(in)].push_back(std::move(attn));
            }
            Mat<T> out = matmul(cat, wo);
            tokens_into(out, y, in);
            c.x_tokens.push_back(std::move(tokens));
            c.heads_cat.push_back(std::move(cat));
        }
        return y;
    }

    Tensor4<T> backward(const Cache& c, const Tensor4<T>& up, GradMap<T>& grads,
                        const std::string& prefix) const {
        const T scale = T(1) / std::sqrt(static_cast<T>(d_head));
        Tensor4<T> dx(up.n, up.c, up.h, up.w);
        for (i64 in = 0; in < up.n; ++in) {
            const auto ui = static_cast<std::size_t>(in);
            Mat<T> d_out = tokens_from(up, in);
            grads.accumulate(prefix + "wo", matmul_tn(c.heads_cat[ui], d_out));
            Mat<T> d_cat = matmul_nt(d_out, wo);
            Mat<T> d_tokens(c.x_tokens[ui].rows, d_model);
            for (i64 hd = 0; hd < heads; ++hd) {
                const auto uh = static_cast<std::size_t>(hd);
                Mat<T> d_head_out(d_cat.rows, d_head);
                for (i64 r = 0; r < d_cat.rows; ++r)
                    for (i64 col = 0; col < d_head; ++col)
                        d_head_out.at(r, col) = d_cat.at(r, hd * d_head + col);
                const Mat<T>& attn = c.attn[ui][uh];
                Mat<T> d_attn = matmul_nt(d_head_out, c.v[ui][uh]);
                Mat<T> d_v = matmul_tn(attn, d_head_out);
                Mat<T> d_scores = softmax_rows_backward(attn, d_attn);
                for (auto& s : d_scores.data) s *= scale;
                Mat<T> d_q = matmul(d_scores, c.k[ui][uh]);
                Mat<T> d_k = matmul_tn(d_scores, c.q[ui][uh]);
                grads.accumulate(prefix + "wq" + std::to_string(hd), matmul_tn(c.x_tokens[ui], d_q));
                grads.accumulate(prefix + "wk" + std::to_string(hd), matmul_tn(c.x_tokens[ui], d_k));
                grads.accumulate(prefix + "wv" + std::to_string(hd), matmul_tn(c.x_tokens[ui], d_v));
                Mat<T> dt = matmul_nt(d_q, wq[uh]);
                Mat<T> dt2 = matmul_nt(d_k, wk[uh]);
                Mat<T> dt3 = matmul_nt(d_v, wv[uh]);
                for (std::size_t i = 0; i < d_tokens.data.size(); ++i)
                    d_tokens.data[i] += dt.data[i] + dt2.data[i] + dt3.data[i];
            }
            tokens_into(d_tokens, dx, in);
        }
        return dx;
    }

    void visit_params(const std::string& prefix, const ParamFn<T>& fn) {
        for (i64 i = 0; i < heads; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            fn(prefix + "wq" + std::to_string(i), view_of(wq[ui]));
            fn(prefix + "wk" + std::to_string(i), view_of(wk[ui]));
            fn(prefix + "wv" + std::to_string(i), view_of(wv[ui]));
        }
        fn(prefix + "wo", view_of(wo));
    }
};

// ---------------------------------------------------------------------------
// FFN: x + norm(MLP(x)), the MLP being a token-wise pair of fully connected
// layers (d -> expand*d -> d) with GELU between them.
// ---------------------------------------------------------------------------
template <typename T>
struct Ffn {
    i64 d_model = 0, hidden = 0;
    Mat<T> w1, w2;
    std::vector<T> b1, b2;
    Norm<T> norm;

    Ffn() = default;
    Ffn(i64 d_model_, double expand, NormKind nk = NormKind::batch) : d_model(d_model_) {
        hidden = static_cast<i64>(std::llround(expand * static_cast<double>(d_model)));
        if (hidden < 1) throw DimensionError("Ffn: expansion must round to a positive width");
        w1 = Mat<T>(d_model, hidden);
        w2 = Mat<T>(hidden, d_model);
        b1.assign(static_cast<std::size_t>(hidden), T(0));
        b2.assign(static_cast<std::size_t>(d_model), T(0));
        norm = Norm<T>(d_model, nk);
    }

    void init(Rng& rng) {
        auto fill = [&rng](Mat<T>& m) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(m.rows));
            for (auto& v : m.data) v = static_cast<T>(rng.uniform(-bound, bound));
        };
        fill(w1);
        fill(w2);
    }

    struct Cache {
        Tensor4<T> x;
        Mat<T> tokens, m1, a1;
        Tensor4<T> mlp_out;
    };

    Tensor4<T> forward(const Tensor4<T>& x) const {
        Cache scratch;
        return forward(x, scratch);
    }

    Tensor4<T> forward(const Tensor4<T>& x, Cache& c) const {
        if (x.c != d_model) throw DimensionError("Ffn: channel count must equal d_model");
        c.x = x;
        c.tokens = all_tokens(x);
        c.m1 = linear(c.tokens, w1, &b1);
        c.a1 = Mat<T>(c.m1.rows, c.m1.cols);
        for (std::size_t i = 0; i < c.m1.data.size(); ++i) c.a1.data[i] = gelu_scalar(c.m1.data[i]);
        Mat<T> m2 = linear(c.a1, w2, &b2);
        c.mlp_out = from_all_tokens(m2, x);
        return add(x, norm.forward(c.mlp_out));
    }

    Tensor4<T> backward(const Cache& c, const Tensor4<T>& up, GradMap<T>& grads,
                        const std::string& prefix) const {
        Tensor4<T> d_mlp = norm.backward(c.mlp_out, up, grads, prefix + "norm.");
        Mat<T> d_m2 = all_tokens(d_mlp);
        LinearGrads<T> g2 = linear_backward(c.a1, w2, d_m2, true);
        grads.accumulate(prefix + "w2", g2.dweight);
        grads.accumulate(prefix + "b2", g2.dbias);
        Mat<T> d_m1 = std::move(g2.dx);
        for (std::size_t i = 0; i < d_m1.data.size(); ++i)
            d_m1.data[i] *= gelu_grad_scalar(c.m1.data[i]);
        LinearGrads<T> g1 = linear_backward(c.tokens, w1, d_m1, true);
        grads.accumulate(prefix + "w1", g1.dweight);
        grads.accumulate(prefix + "b1", g1.dbias);
        Tensor4<T> dx = from_all_tokens(g1.dx, c.x);
        return add(dx, up);
    }

    void visit_params(const std::string& prefix, const ParamFn<T>& fn) {
        fn(prefix + "w1", view_of(w1));
        fn(prefix + "b1", view_of(b1));
        fn(prefix + "w2", view_of(w2));
        fn(prefix + "b2", view_of(b2));
        norm.visit_params(prefix + "norm.", fn);
    }

private:
    static Mat<T> all_tokens(const Tensor4<T>& x) {
        Mat<T> m(x.n * x.h * x.w, x.c);
        i64 r = 0;
        for (i64 in = 0; in < x.n; ++in)
            for (i64 iy = 0; iy < x.h; ++iy)
                for (i64 ix = 0; ix < x.w; ++ix, ++r)
                    for (i64 ic = 0; ic < x.c; ++ic) m.at(r, ic) = x.at(in, ic, iy, ix);
        return m;
    }

    static Tensor4<T> from_all_tokens(const Mat<T>& m, const Tensor4<T>& like) {
        Tensor4<T> t(like.n, like.c, like.h, like.w);
        i64 r = 0;
        for (i64 in = 0; in < like.n; ++in)
            for (i64 iy = 0; iy < like.h; ++iy)
                for (i64 ix = 0; ix < like.w; ++ix, ++r)
                    for (i64 ic = 0; ic < like.c; ++ic) t.at(in, ic, iy, ix) = m.at(r, ic);
        return t;
    }
};

// ---------------------------------------------------------------------------
// DSLKVit-Block.
//   f_local(x)  = avg_pool_{k=s=sr}( norm( f_PE(x) + DSLK(x) ) )
//   f_global(x) = x + norm( deconv_{k=s=sr}( MHSA( f_local(x) ) ) )
//   forward(x)  = FFN( f_global(x) )
// f_PE is a depthwise 3x3 convolution; the deconv weights start as the
// uniform 1/sr^2 scatter and are learned.
// ---------------------------------------------------------------------------
struct VitSpec {
    i64 sr = 2;
    i64 d_model = 0;
    i64 heads = 4;
    double ffn_expand = 2.0;
    double e_block = 1.0;  // expansion of the internal DSLK-Block
    i64 k_large = 3;       // neck form: 3x3 large kernel, plain shortcut
    i64 k_small = 0;

    void validate() const {
        if (sr < 1) throw DimensionError("VitSpec: sr must be >= 1");
        if (d_model < 1 || d_model % heads != 0)
            throw DimensionError("VitSpec: heads must divide d_model");
    }
};

template <typename T>
struct DslkVit {
    VitSpec spec;
    ConvLayer<T> pe;
    DslkBlock<T> local_block;
    Norm<T> norm_local;
    Mhsa<T> attn;
    ConvLayer<T> ld;
    Norm<T> norm_global;
    Ffn<T> ffn;

    DslkVit() = default;
    explicit DslkVit(const VitSpec& s, NormKind nk = NormKind::batch) : spec(s) {
        s.validate();
        const i64 c = s.d_model;
        pe = ConvLayer<T>(ConvSpec{3, c, c, 1, 1, c, false});
        local_block = DslkBlock<T>(DslkBlockSpec{s.k_large, s.k_small, s.e_block, c});
        norm_local = Norm<T>(c, nk);
        attn = Mhsa<T>(c, s.heads);
        ld = ConvLayer<T>(ConvSpec{s.sr, c, c, s.sr, 0, 1, false});
        norm_global = Norm<T>(c, nk);
        ffn = Ffn<T>(c, s.ffn_expand, nk);
    }

    void init(Rng& rng) {
        pe.init(rng);
        local_block.init(rng);
        attn.init(rng);
        // uniform 1/sr^2 scatter: identity channel map spread over the window
        const T v = T(1) / static_cast<T>(spec.sr * spec.sr);
        for (auto& w : ld.weight.data) w = T(0);
        for (i64 ci = 0; ci < spec.d_model; ++ci)
            for (i64 kh = 0; kh < spec.sr; ++kh)
                for (i64 kw = 0; kw < spec.sr; ++kw) ld.weight.at(ci, ci, kh, kw) = v;
        ffn.init(rng);
    }

    struct Cache {
        Tensor4<T> x;
        Tensor4<T> pe_out;
        typename DslkBlock<T>::Cache blockc;
        Tensor4<T> local_sum, local_norm_out, pooled;
        typename Mhsa<T>::Cache attnc;
        Tensor4<T> attn_out, ld_out;
        typename Ffn<T>::Cache ffnc;
    };

    void check_divisible(const Tensor4<T>& x) const {
        if (x.h % spec.sr != 0 || x.w % spec.sr != 0)
            throw GeometryError("DslkVit: sr must divide spatial dims, input " + x.shape_str());
    }

    Tensor4<T> forward_local(const Tensor4<T>& x) const {
        Cache scratch;
        return forward_local(x, scratch);
    }

    Tensor4<T> forward_local(const Tensor4<T>& x, Cache& c) const {
        check_divisible(x);
        c.x = x;
        c.pe_out = pe.forward(x);
        Tensor4<T> blk = local_block.forward(x, c.blockc);
        c.local_sum = add(c.pe_out, blk);
        c.local_norm_out = norm_local.forward(c.local_sum);
        c.pooled = pool(c.local_norm_out, PoolKind::avg, spec.sr, spec.sr);
        return c.pooled;
    }

    Tensor4<T> forward_global(const Tensor4<T>& x) const {
        Cache scratch;
        return forward_global(x, scratch);
    }

    Tensor4<T> forward_global(const Tensor4<T>& x, Cache& c) const {
        Tensor4<T> local = forward_local(x, c);
        c.attn_out = attn.forward(local, c.attnc);
        c.ld_out = transposed_conv(c.attn_out, ld.weight, ld.spec);
        return add(x, norm_global.forward(c.ld_out));
    }

    Tensor4<T> forward(const Tensor4<T>& x) const {
        Cache scratch;
        return forward(x, scratch);
    }

    Tensor4<T> forward(const Tensor4<T>& x, Cache& c) const {
        return ffn.forward(forward_global(x, c), c.ffnc);
    }

    Tensor4<T> backward_local(const Cache& c, const Tensor4<T>& up, GradMap<T>& grads,
                              const std::string& prefix) const {
        Tensor4<T> d = pool_backward(c.local_norm_out, PoolKind::avg, spec.sr, spec.sr, up);
        d = norm_local.backward(c.local_sum, d, grads, prefix + "norm_local.");
        Tensor4<T> dx = pe.backward(c.x, d, grads, prefix + "pe.");
        return add(dx, local_block.backward(c.blockc, d, grads, prefix + "local."));
    }

    Tensor4<T> backward_global(const Cache& c, const Tensor4<T>& up, GradMap<T>& grads,
                               const std::string& prefix) const {
        Tensor4<T> d = norm_global.backward(c.ld_out, up, grads, prefix + "norm_global.");
        TransposedConvGrads<T> tg = transposed_conv_backward(c.attn_out, ld.weight, ld.spec, d);
        grads.accumulate(prefix + "ld.weight", tg.dweight);
        Tensor4<T> d_local = attn.backward(c.attnc, tg.dx, grads, prefix + "attn.");
        Tensor4<T> dx = backward_local(c, d_local, grads, prefix);
        return add(dx, up);
    }

    Tensor4<T> backward(const Cache& c, const Tensor4<T>& up, GradMap<T>& grads,
                        const std::string& prefix) const {
        Tensor4<T> d = ffn.backward(c.ffnc, up, grads, prefix + "ffn.");
        return backward_global(c, d, grads, prefix);
    }

    void visit_params(const std::string& prefix, const ParamFn<T>& fn) {
        pe.visit_params(prefix + "pe.", fn);
        local_block.visit_params(prefix + "local.", fn);
        norm_local.visit_params(prefix + "norm_local.", fn);
        attn.visit_params(prefix + "attn.", fn);
        fn(prefix + "ld.weight", view_of(ld.weight));
        norm_global.visit_params(prefix + "norm_global.", fn);
        ffn.visit_params(prefix + "ffn.", fn);
    }
};

// ---------------------------------------------------------------------------
// YOLOv5 reference modules (forward only; used by the baseline graphs).
// ---------------------------------------------------------------------------
template <typename T>
struct Bottleneck {
    Cbs<T> cv1, cv2;
    bool shortcut = true;

    Bottleneck() = default;
    Bottleneck(i64 c_in, i64 c_out, bool shortcut_)
        : cv1(c_in, c_out, 1), cv2(c_out, c_out, 3), shortcut(shortcut_ && c_in == c_out) {}

    void init(Rng& rng) {
        cv1.init(rng);
        cv2.init(rng);
    }

    Tensor4<T> forward(const Tensor4<T>& x) const {
        Tensor4<T> y = cv2.forward(cv1.forward(x));
        return shortcut ? add(x, y) : y;
    }

    void visit_params(const std::string& prefix, const ParamFn<T>& fn) {
        cv1.visit_params(prefix + "cv1.", fn);
        cv2.visit_params(prefix + "cv2.", fn);
    }
};

template <typename T>
struct C3 {
    Cbs<T> cv1, cv2, cv3;
    std::vector<Bottleneck<T>> m;

    C3() = default;
    C3(i64 c_in, i64 c_out, i64 n, bool shortcut) {
        const i64 half = c_out / 2;
        cv1 = Cbs<T>(c_in, half, 1);
        cv2 = Cbs<T>(c_in, half, 1);
        cv3 = Cbs<T>(2 * half, c_out, 1);
        for (i64 i = 0; i < n; ++i) m.emplace_back(half, half, shortcut);
    }

    void init(Rng& rng) {
        cv1.init(rng);
        cv2.init(rng);
        for (auto& b : m) b.init(rng);
        cv3.init(rng);
    }

    Tensor4<T> forward(const Tensor4<T>& x) const {
        Tensor4<T> a = cv1.forward(x);
        for (const auto& b : m) a = b.forward(a);
        Tensor4<T> bpath = cv2.forward(x);
        Tensor4<T> cat = concat_channels<T>({&a, &bpath});
        return cv3.forward(cat);
    }

    void visit_params(const std::string& prefix, const ParamFn<T>& fn) {
        cv1.visit_params(prefix + "cv1.", fn);
        cv2.visit_params(prefix + "cv2.", fn);
        for (std::size_t i = 0; i < m.size(); ++i)
            m[i].visit_params(prefix + "m" + std::to_string(i) + ".", fn);
        cv3.visit_params(prefix + "cv3.", fn);
    }
};

template <typename T>
struct Sppf {
    Cbs<T> cv1, cv2;
    i64 k = 5;

    Sppf() = default;
    Sppf(i64 c_in, i64 c_out, i64 k_) : k(k_) {
        const i64 half = c_in / 2;
        cv1 = Cbs<T>(c_in, half, 1);
        cv2 = Cbs<T>(half * 4, c_out, 1);
    }

    void init(Rng& rng) {
        cv1.init(rng);
        cv2.init(rng);
    }

    Tensor4<T> forward(const Tensor4<T>& x) const {
        Tensor4<T> y0 = cv1.forward(x);
        Tensor4<T> y1 = pool(y0, PoolKind::max, k, 1, k / 2);
        Tensor4<T> y2 = pool(y1, PoolKind::max, k, 1, k / 2);
        Tensor4<T> y3 = pool(y2, PoolKind::max, k, 1, k / 2);
        Tensor4<T> cat = concat_channels<T>({&y0, &y1, &y2, &y3});
        return cv2.forward(cat);
    }

    void visit_params(const std::string& prefix, const ParamFn<T>& fn) {
        cv1.visit_params(prefix + "cv1.", fn);
        cv2.visit_params(prefix + "cv2.", fn);
    }
};

// Detection head: plain 1x1 convolution with bias (no norm follows).
template <typename T>
struct DetectHead {
    ConvLayer<T> conv;

    DetectHead() = default;
    DetectHead(i64 c_in, i64 nc) : conv(ConvSpec{1, c_in, 3 * (nc + 5), 1, 0, 1, true}) {}

    void init(Rng& rng) { conv.init(rng); }

    Tensor4<T> forward(const Tensor4<T>& x) const { return conv.forward(x); }

    void visit_params(const std::string& prefix, const ParamFn<T>& fn) {
        conv.visit_params(prefix + "conv.", fn);
    }
};

}  // namespace antnet
