#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "antnet/blocks.hpp"

namespace antnet {

struct GradReport {
    std::string op_name;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    int n_probes = 0;
    bool passed = false;
};

// A check target couples one forward map with its analytic backward and the
// parameter slots it owns. forward() reads the live input/params, so the
// probe loop can perturb coordinates in place.
template <typename T>
struct CheckTarget {
    std::string name;
    Tensor4<T> input;
    std::vector<std::pair<std::string, TensorView<T>>> params;
    std::function<Tensor4<T>()> forward;
    std::function<std::pair<Tensor4<T>, GradMap<T>>(const Tensor4<T>&)> backward;
};

template <typename T>
Tensor4<T> random_tensor(Rng& rng, i64 n, i64 c, i64 h, i64 w, double scale = 1.0) {
    Tensor4<T> t(n, c, h, w);
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(-scale, scale));
    return t;
}

// Compares analytic vector-Jacobian products against central differences at
// randomly chosen coordinates of the input and every parameter.
inline GradReport run_gradcheck(CheckTarget<double>& t, u64 seed, double tol,
                                int requested_probes = 24, double h = 1e-5) {
    Rng rng(seed);
    Tensor4<double> probe_scratch = t.forward();
    Tensor4<double> upstream = random_tensor<double>(rng, probe_scratch.n, probe_scratch.c,
                                                     probe_scratch.h, probe_scratch.w);

    auto [dx, grad_map] = t.backward(upstream);

    const auto scalar_fn = [&]() {
        Tensor4<double> y = t.forward();
        double s = 0.0;
        for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * upstream.data[i];
        return s;
    };

    // Global coordinate pool: input first, then parameters in listed order.
    i64 total = t.input.numel();
    for (const auto& [pname, view] : t.params) total += view.size;
    std::vector<i64> pool(static_cast<std::size_t>(total));
    std::iota(pool.begin(), pool.end(), i64(0));
    const int n_probes = static_cast<int>(std::min<i64>(total, requested_probes));
    for (int i = 0; i < n_probes; ++i) {
        const i64 j = i + rng.next_index(total - i);
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }

    GradReport report;
    report.op_name = t.name;
    report.n_probes = n_probes;
    for (int p = 0; p < n_probes; ++p) {
        i64 idx = pool[static_cast<std::size_t>(p)];
        double* slot = nullptr;
        double analytic = 0.0;
        if (idx < t.input.numel()) {
            slot = &t.input.data[static_cast<std::size_t>(idx)];
            analytic = dx.data[static_cast<std::size_t>(idx)];
        } else {
            idx -= t.input.numel();
            for (const auto& [pname, view] : t.params) {
                if (idx < view.size) {
                    slot = view.ptr + idx;
                    const auto it = grad_map.grads.find(pname);
                    analytic = it == grad_map.grads.end() ? 0.0 : it->second[static_cast<std::size_t>(idx)];
                    break;
                }
                idx -= view.size;
            }
        }
        const double numeric = finite_diff_at<double>(scalar_fn, slot, h);
        report.max_abs_err = std::max(report.max_abs_err, std::abs(analytic - numeric));
        report.max_rel_err = std::max(report.max_rel_err, rel_err(analytic, numeric));
    }
    report.passed = report.max_rel_err <= tol;
    return report;
}

namespace detail {

// Ensures each pooling window has a clear winner so no finite-difference
// probe sits within 1e-3 of a max-pool tie.
inline void detie_pool_windows(Tensor4<double>& x, i64 k, i64 stride) {
    const i64 ho = conv_out_dim(x.h, k, stride, 0);
    const i64 wo = conv_out_dim(x.w, k, stride, 0);
    for (i64 in = 0; in < x.n; ++in)
        for (i64 ic = 0; ic < x.c; ++ic)
            for (i64 oy = 0; oy < ho; ++oy)
                for (i64 ox = 0; ox < wo; ++ox) {
                    double best = -1e300, second = -1e300;
                    i64 by = 0, bx = 0;
                    for (i64 kh = 0; kh < k; ++kh)
                        for (i64 kw = 0; kw < k; ++kw) {
                            const double v = x.at(in, ic, oy * stride + kh, ox * stride + kw);
                            if (v > best) {
                                second = best;
                                best = v;
                                by = oy * stride + kh;
                                bx = ox * stride + kw;
                            } else {
                                second = std::max(second, v);
                            }
                        }
                    if (best - second < 1e-3) x.at(in, ic, by, bx) += 2e-3;
                }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitive targets. Unknown names raise CapabilityError.
// ---------------------------------------------------------------------------
inline std::vector<std::string> gradcheck_primitive_names() {
    return {"conv2d",        "conv2d_depthwise", "batchnorm", "silu",    "gelu",
            "pool_avg",      "pool_max",         "transposed_conv", "upsample",
            "concat",        "add",              "linear",    "softmax"};
}

inline GradReport gradcheck_primitive(const std::string& name, u64 seed, double tol) {
    Rng rng(seed);
    CheckTarget<double> t;
    t.name = name;

    if (name == "conv2d" || name == "conv2d_depthwise") {
        const bool dw = name == "conv2d_depthwise";
        auto spec = std::make_shared<ConvSpec>();
        *spec = dw ? ConvSpec{3, 4, 4, 1, 1, 4, false} : ConvSpec{3, 3, 5, 2, 1, 1, true};
        auto weight = std::make_shared<Tensor4<double>>(
            random_tensor<double>(rng, spec->c_out, spec->c_in / spec->groups, spec->kernel, spec->kernel));
        auto bias = std::make_shared<std::vector<double>>();
        if (spec->has_bias)
            for (i64 i = 0; i < spec->c_out; ++i) bias->push_back(rng.uniform(-1.0, 1.0));
        t.input = random_tensor<double>(rng, 2, spec->c_in, 6, 6);
        t.params.emplace_back("weight", view_of(*weight));
        if (spec->has_bias) t.params.emplace_back("bias", view_of(*bias));
        t.forward = [&t, spec, weight, bias]() {
            return conv2d(t.input, *weight, spec->has_bias ? bias.get() : nullptr, *spec);
        };
        t.backward = [&t, spec, weight](const Tensor4<double>& up) {
            ConvGrads<double> g = conv2d_backward(t.input, *weight, *spec, up);
            GradMap<double> gm;
            gm.accumulate("weight", g.dweight);
            if (spec->has_bias) gm.accumulate("bias", g.dbias);
            return std::make_pair(std::move(g.dx), std::move(gm));
        };
        return run_gradcheck(t, seed + 1, tol);
    }
    if (name == "batchnorm") {
        auto p = std::make_shared<NormParams<double>>();
        const i64 c = 4;
        for (i64 i = 0; i < c; ++i) {
            p->gamma.push_back(rng.uniform(0.5, 1.5));
            p->beta.push_back(rng.uniform(-0.5, 0.5));
            p->mean.push_back(rng.uniform(-0.5, 0.5));
            p->var.push_back(rng.uniform(0.5, 2.0));
        }
        p->eps = 1e-5;
        t.input = random_tensor<double>(rng, 2, c, 5, 5);
        t.params.emplace_back("gamma", view_of(p->gamma));
        t.params.emplace_back("beta", view_of(p->beta));
        t.forward = [&t, p]() { return batchnorm_infer(t.input, *p); };
        t.backward = [&t, p](const Tensor4<double>& up) {
            NormGrads<double> g = batchnorm_infer_backward(t.input, *p, up);
            GradMap<double> gm;
            gm.accumulate("gamma", g.dgamma);
            gm.accumulate("beta", g.dbeta);
            return std::make_pair(std::move(g.dx), std::move(gm));
        };
        return run_gradcheck(t, seed + 1, tol);
    }
    if (name == "silu" || name == "gelu") {
        const Act kind = name == "silu" ? Act::silu : Act::gelu;
        t.input = random_tensor<double>(rng, 1, 4, 6, 6, 2.0);
        t.forward = [&t, kind]() { return activation(t.input, kind); };
        t.backward = [&t, kind](const Tensor4<double>& up) {
            return std::make_pair(activation_backward(t.input, kind, up), GradMap<double>());
        };
        return run_gradcheck(t, seed + 1, tol);
    }
    if (name == "pool_avg" || name == "pool_max") {
        const PoolKind kind = name == "pool_avg" ? PoolKind::avg : PoolKind::max;
        t.input = random_tensor<double>(rng, 1, 4, 8, 8);
        if (kind == PoolKind::max) detail::detie_pool_windows(t.input, 2, 2);
        t.forward = [&t, kind]() { return pool(t.input, kind, 2, 2); };
        t.backward = [&t, kind](const Tensor4<double>& up) {
            return std::make_pair(pool_backward(t.input, kind, 2, 2, up), GradMap<double>());
        };
        return run_gradcheck(t, seed + 1, tol);
    }
    if (name == "transposed_conv") {
        auto spec = std::make_shared<ConvSpec>(ConvSpec{2, 4, 4, 2, 0, 1, false});
        auto weight = std::make_shared<Tensor4<double>>(random_tensor<double>(rng, 4, 4, 2, 2));
        t.input = random_tensor<double>(rng, 1, 4, 4, 4);
        t.params.emplace_back("weight", view_of(*weight));
        t.forward = [&t, spec, weight]() { return transposed_conv(t.input, *weight, *spec); };
        t.backward = [&t, spec, weight](const Tensor4<double>& up) {
            TransposedConvGrads<double> g = transposed_conv_backward(t.input, *weight, *spec, up);
            GradMap<double> gm;
            gm.accumulate("weight", g.dweight);
            return std::make_pair(std::move(g.dx), std::move(gm));
        };
        return run_gradcheck(t, seed + 1, tol);
    }
    if (name == "upsample") {
        t.input = random_tensor<double>(rng, 1, 3, 4, 4);
        t.forward = [&t]() { return upsample_nearest(t.input, 2); };
        t.backward = [&t](const Tensor4<double>& up) {
            return std::make_pair(upsample_nearest_backward(t.input, 2, up), GradMap<double>());
        };
        return run_gradcheck(t, seed + 1, tol);
    }
    if (name == "concat") {
        auto other = std::make_shared<Tensor4<double>>(random_tensor<double>(rng, 1, 3, 5, 5));
        t.input = random_tensor<double>(rng, 1, 2, 5, 5);
        t.forward = [&t, other]() { return concat_channels<double>({&t.input, other.get()}); };
        t.backward = [&t, other](const Tensor4<double>& up) {
            auto grads = concat_channels_backward<double>({t.input.c, other->c}, up);
            return std::make_pair(std::move(grads[0]), GradMap<double>());
        };
        return run_gradcheck(t, seed + 1, tol);
    }
    if (name == "add") {
        auto other = std::make_shared<Tensor4<double>>(random_tensor<double>(rng, 1, 3, 4, 4));
        t.input = random_tensor<double>(rng, 1, 3, 4, 4);
        t.forward = [&t, other]() { return add(t.input, *other); };
        t.backward = [](const Tensor4<double>& up) {
            return std::make_pair(Tensor4<double>(up), GradMap<double>());
        };
        return run_gradcheck(t, seed + 1, tol);
    }
    if (name == "linear") {
        auto weight = std::make_shared<Mat<double>>(4, 3);
        auto bias = std::make_shared<std::vector<double>>();
        for (auto& v : weight->data) v = rng.uniform(-1.0, 1.0);
        for (int i = 0; i < 3; ++i) bias->push_back(rng.uniform(-1.0, 1.0));
        t.input = random_tensor<double>(rng, 1, 1, 5, 4);  // rows x d_in
        t.params.emplace_back("weight", view_of(*weight));
        t.params.emplace_back("bias", view_of(*bias));
        auto as_mat = [](const Tensor4<double>& x) {
            Mat<double> m(x.h, x.w);
            m.data = x.data;
            return m;
        };
        t.forward = [&t, weight, bias, as_mat]() {
            Mat<double> y = linear(as_mat(t.input), *weight, bias.get());
            Tensor4<double> out(1, 1, y.rows, y.cols);
            out.data = y.data;
            return out;
        };
        t.backward = [&t, weight, as_mat](const Tensor4<double>& up) {
            Mat<double> upm(up.h, up.w);
            upm.data = up.data;
            LinearGrads<double> g = linear_backward(as_mat(t.input), *weight, upm, true);
            GradMap<double> gm;
            gm.accumulate("weight", g.dweight);
            gm.accumulate("bias", g.dbias);
            Tensor4<double> dx(1, 1, g.dx.rows, g.dx.cols);
            dx.data = g.dx.data;
            return std::make_pair(std::move(dx), std::move(gm));
        };
        return run_gradcheck(t, seed + 1, tol);
    }
    if (name == "softmax") {
        t.input = random_tensor<double>(rng, 1, 1, 4, 5, 2.0);
        auto as_mat = [](const Tensor4<double>& x) {
            Mat<double> m(x.h, x.w);
            m.data = x.data;
            return m;
        };
        t.forward = [&t, as_mat]() {
            Mat<double> y = softmax_rows(as_mat(t.input));
            Tensor4<double> out(1, 1, y.rows, y.cols);
            out.data = y.data;
            return out;
        };
        t.backward = [&t, as_mat](const Tensor4<double>& up) {
            Mat<double> y = softmax_rows(as_mat(t.input));
            Mat<double> upm(up.h, up.w);
            upm.data = up.data;
            Mat<double> dx = softmax_rows_backward(y, upm);
            Tensor4<double> out(1, 1, dx.rows, dx.cols);
            out.data = dx.data;
            return std::make_pair(std::move(out), GradMap<double>());
        };
        return run_gradcheck(t, seed + 1, tol);
    }
    throw CapabilityError("gradcheck: unsupported primitive '" + name + "'");
}

// ---------------------------------------------------------------------------
// Block targets at miniature geometry (1x8x8x8 input, binary64).
// ---------------------------------------------------------------------------
inline std::vector<std::string> gradcheck_block_names() {
    return {"cbs", "dslk_block", "dslk_layer", "f_local", "mhsa", "f_global", "ffn", "dslkvit"};
}

inline GradReport gradcheck_block(const std::string& name, u64 seed, double tol) {
    Rng rng(seed);
    CheckTarget<double> t;
    t.name = name;
    t.input = random_tensor<double>(rng, 1, 8, 8, 8);

    auto collect = [&t](auto& block) {
        block.visit_params("", [&t](const std::string& n, TensorView<double> v) {
            t.params.emplace_back(n, v);
        });
    };

    if (name == "cbs") {
        auto blk = std::make_shared<Cbs<double>>(8, 6, 3, 1);
        blk->init(rng);
        collect(*blk);
        t.forward = [&t, blk]() { return blk->forward(t.input); };
        t.backward = [&t, blk](const Tensor4<double>& up) {
            typename Cbs<double>::Cache c;
            blk->forward(t.input, c);
            GradMap<double> gm;
            Tensor4<double> dx = blk->backward(c, up, gm, "");
            return std::make_pair(std::move(dx), std::move(gm));
        };
        return run_gradcheck(t, seed + 1, tol);
    }
    if (name == "dslk_block") {
        auto blk = std::make_shared<DslkBlock<double>>(DslkBlockSpec{5, 3, 2.0, 8});
        blk->init(rng);
        collect(*blk);
        t.forward = [&t, blk]() { return blk->forward(t.input); };
        t.backward = [&t, blk](const Tensor4<double>& up) {
            typename DslkBlock<double>::Cache c;
            blk->forward(t.input, c);
            GradMap<double> gm;
            Tensor4<double> dx = blk->backward(c, up, gm, "");
            return std::make_pair(std::move(dx), std::move(gm));
        };
        return run_gradcheck(t, seed + 1, tol);
    }
    if (name == "dslk_layer") {
        auto blk = std::make_shared<DslkLayer<double>>(8, 8, 2, 3, 3, 1.0);
        blk->init(rng);
        collect(*blk);
        t.forward = [&t, blk]() { return blk->forward(t.input); };
        t.backward = [&t, blk](const Tensor4<double>& up) {
            typename DslkLayer<double>::Cache c;
            blk->forward(t.input, c);
            GradMap<double> gm;
            Tensor4<double> dx = blk->backward(c, up, gm, "");
            return std::make_pair(std::move(dx), std::move(gm));
        };
        return run_gradcheck(t, seed + 1, tol);
    }
    if (name == "mhsa") {
        auto blk = std::make_shared<Mhsa<double>>(8, 4);
        blk->init(rng);
        t.input = random_tensor<double>(rng, 1, 8, 4, 4);
        collect(*blk);
        t.forward = [&t, blk]() { return blk->forward(t.input); };
        t.backward = [&t, blk](const Tensor4<double>& up) {
            typename Mhsa<double>::Cache c;
            blk->forward(t.input, c);
            GradMap<double> gm;
            Tensor4<double> dx = blk->backward(c, up, gm, "");
            return std::make_pair(std::move(dx), std::move(gm));
        };
        return run_gradcheck(t, seed + 1, tol);
    }
    if (name == "ffn") {
        auto blk = std::make_shared<Ffn<double>>(8, 2.0);
        blk->init(rng);
        collect(*blk);
        t.forward = [&t, blk]() { return blk->forward(t.input); };
        t.backward = [&t, blk](const Tensor4<double>& up) {
            typename Ffn<double>::Cache c;
            blk->forward(t.input, c);
            GradMap<double> gm;
            Tensor4<double> dx = blk->backward(c, up, gm, "");
            return std::make_pair(std::move(dx), std::move(gm));
        };
        return run_gradcheck(t, seed + 1, tol);
    }
    if (name == "f_local" || name == "f_global" || name == "dslkvit") {
        VitSpec spec;
        spec.sr = 2;
        spec.d_model = 8;
        spec.heads = 4;
        spec.ffn_expand = 2.0;
        spec.e_block = 1.0;
        auto blk = std::make_shared<DslkVit<double>>(spec);
        blk->init(rng);
        if (name == "f_local") {
            blk->pe.visit_params("pe.", [&t](const std::string& n, TensorView<double> v) { t.params.emplace_back(n, v); });
            blk->local_block.visit_params("local.", [&t](const std::string& n, TensorView<double> v) { t.params.emplace_back(n, v); });
            blk->norm_local.visit_params("norm_local.", [&t](const std::string& n, TensorView<double> v) { t.params.emplace_back(n, v); });
            t.forward = [&t, blk]() { return blk->forward_local(t.input); };
            t.backward = [&t, blk](const Tensor4<double>& up) {
                typename DslkVit<double>::Cache c;
                blk->forward_local(t.input, c);
                GradMap<double> gm;
                Tensor4<double> dx = blk->backward_local(c, up, gm, "");
                return std::make_pair(std::move(dx), std::move(gm));
            };
        } else if (name == "f_global") {
            collect(*blk);  // ffn params unused: zero grads on both sides
            t.forward = [&t, blk]() { return blk->forward_global(t.input); };
            t.backward = [&t, blk](const Tensor4<double>& up) {
                typename DslkVit<double>::Cache c;
                blk->forward_global(t.input, c);
                GradMap<double> gm;
                Tensor4<double> dx = blk->backward_global(c, up, gm, "");
                return std::make_pair(std::move(dx), std::move(gm));
            };
        } else {
            collect(*blk);
            t.forward = [&t, blk]() { return blk->forward(t.input); };
            t.backward = [&t, blk](const Tensor4<double>& up) {
                typename DslkVit<double>::Cache c;
                blk->forward(t.input, c);
                GradMap<double> gm;
                Tensor4<double> dx = blk->backward(c, up, gm, "");
                return std::make_pair(std::move(dx), std::move(gm));
            };
        }
        return run_gradcheck(t, seed + 1, tol);
    }
    throw CapabilityError("gradcheck: unsupported block '" + name + "'");
}

/// Runs every primitive and block check; used by the CLI and the acceptance
/// suite.
inline std::vector<GradReport> gradcheck_all(u64 seed, double tol) {
    std::vector<GradReport> reports;
    for (const auto& n : gradcheck_primitive_names()) reports.push_back(gradcheck_primitive(n, seed, tol));
    for (const auto& n : gradcheck_block_names()) reports.push_back(gradcheck_block(n, seed, tol));
    return reports;
}

}  // namespace antnet
