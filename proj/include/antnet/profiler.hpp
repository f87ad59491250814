#pragma once

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "antnet/graph.hpp"

namespace antnet {

// Static analysis over a Graph: exact learnable-parameter counts and FLOPs.
// Conventions (fixed, documented):
//   - parameters: conv k^2*(c_in/g)*c_out (+c_out with bias); norm gamma+beta
//     only (running statistics are not learnable); linear d_in*d_out (+d_out);
//     attention counts every projection matrix.
//   - FLOPs: 2*MACs for conv / transposed conv / linear / attention matrix
//     products; norm, activation, pooling, upsampling and elementwise adds
//     count 0.

struct ProfileRow {
    int stage_id = 0;
    std::string name;
    std::string module_desc;
    i64 params = 0;
    i64 flops = 0;
    std::string out_shape;
};

struct ProfileReport {
    std::string model;
    i64 in_h = 0, in_w = 0;
    std::vector<ProfileRow> rows;
    i64 total_params = 0;
    i64 total_flops = 0;
    double gflops() const { return static_cast<double>(total_flops) / 1e9; }
};

namespace profile_detail {

struct Dims {
    i64 c = 0, h = 0, w = 0;
};

inline i64 conv_params(i64 c_in, i64 c_out, i64 k, i64 g = 1, bool bias = false) {
    return k * k * (c_in / g) * c_out + (bias ? c_out : 0);
}

inline i64 cbs_params(i64 c_in, i64 c_out, i64 k) { return conv_params(c_in, c_out, k) + 2 * c_out; }

inline i64 conv_flops(i64 c_in, i64 c_out, i64 k, i64 ho, i64 wo, i64 g = 1) {
    return 2 * k * k * (c_in / g) * c_out * ho * wo;
}

inline i64 bottleneck_params(i64 c) { return cbs_params(c, c, 1) + cbs_params(c, c, 3); }

inline i64 bottleneck_flops(i64 c, i64 h, i64 w) {
    return conv_flops(c, c, 1, h, w) + conv_flops(c, c, 3, h, w);
}

inline i64 dslk_block_params(i64 c, i64 kl, i64 ks, double e) {
    i64 p = conv_params(c, c, kl, c) + 2 * c;
    if (ks == 3) p += conv_params(c, c, 3, c) + 2 * c;
    const i64 ec = static_cast<i64>(std::llround(e * static_cast<double>(c)));
    p += conv_params(c, ec, 1) + conv_params(ec, c, 1) + 2 * c;
    return p;
}

inline i64 dslk_block_flops(i64 c, i64 kl, i64 ks, double e, i64 h, i64 w) {
    i64 f = conv_flops(c, c, kl, h, w, c);
    if (ks == 3) f += conv_flops(c, c, 3, h, w, c);
    const i64 ec = static_cast<i64>(std::llround(e * static_cast<double>(c)));
    f += conv_flops(c, ec, 1, h, w) + conv_flops(ec, c, 1, h, w);
    return f;
}

inline i64 mhsa_params(i64 d) { return 4 * d * d; }

inline i64 mhsa_flops(i64 d, i64 heads, i64 n_tokens) {
    const i64 dk = d / heads;
    i64 f = 3 * heads * 2 * n_tokens * d * dk;          // per-head Q,K,V projections
    f += heads * 2 * (2 * n_tokens * n_tokens * dk);    // QK^T and weights*V, per head
    f += 2 * n_tokens * d * d;                          // output projection
    return f;
}

}  // namespace profile_detail

inline ProfileReport profile(const Graph& g, i64 in_h, i64 in_w) {
    using namespace profile_detail;
    if (in_h % 32 != 0 || in_w % 32 != 0)
        throw GeometryError("profile: input dims must be divisible by 32");
    g.validate();

    ProfileReport rep;
    rep.model = g.model;
    rep.in_h = in_h;
    rep.in_w = in_w;
    std::map<int, Dims> dims;
    dims[-1] = Dims{3, in_h, in_w};

    for (const auto& s : g.stages) {
        const Hyper& h = s.hyper;
        ProfileRow row;
        row.stage_id = s.id;
        row.name = s.name;
        const Dims in = dims.at(s.src.at(0));
        Dims out = in;
        std::ostringstream desc;

        if (s.kind == "cbs") {
            const i64 ci = h.geti("c_in"), co = h.geti("c_out"), k = h.geti("k"), st = h.geti("stride");
            const i64 pad = h.has("p") ? h.geti("p") : k / 2;
            if (ci != in.c) throw DimensionError("profile: stage " + std::to_string(s.id) + " channel mismatch");
            out.c = co;
            out.h = conv_out_dim(in.h, k, st, pad);
            out.w = conv_out_dim(in.w, k, st, pad);
            row.params = cbs_params(ci, co, k);
            row.flops = conv_flops(ci, co, k, out.h, out.w);
            desc << "Conv[" << ci << "," << co << "]x1";
        } else if (s.kind == "c3") {
            const i64 ci = h.geti("c_in"), co = h.geti("c_out"), n = h.geti("n");
            if (ci != in.c) throw DimensionError("profile: stage " + std::to_string(s.id) + " channel mismatch");
            const i64 half = co / 2;
            out.c = co;
            row.params = 2 * cbs_params(ci, half, 1) + cbs_params(2 * half, co, 1) + n * bottleneck_params(half);
            row.flops = 2 * conv_flops(ci, half, 1, in.h, in.w) + conv_flops(2 * half, co, 1, in.h, in.w) +
                        n * bottleneck_flops(half, in.h, in.w);
            desc << "C3[" << ci << "," << co << "]x" << n;
        } else if (s.kind == "dslk_layer") {
            const i64 ci = h.geti("c_in"), co = h.geti("c_out"), n = h.geti("n");
            const i64 kl = h.geti("k_large"), ks = h.geti("k_small");
            const double e = h.getd("e");
            if (ci != in.c) throw DimensionError("profile: stage " + std::to_string(s.id) + " channel mismatch");
            const i64 half = co / 2;
            out.c = co;
            row.params = 2 * cbs_params(ci, half, 1) + cbs_params(co, co, 1) + n * dslk_block_params(half, kl, ks, e);
            row.flops = 2 * conv_flops(ci, half, 1, in.h, in.w) + conv_flops(co, co, 1, in.h, in.w) +
                        n * dslk_block_flops(half, kl, ks, e, in.h, in.w);
            desc << "DSLKLayer[" << ci << "," << co << "]x" << n << "k" << kl;
        } else if (s.kind == "dslkvit") {
            const i64 c = h.geti("channels"), sr = h.geti("sr"), heads = h.geti("heads");
            const double fe = h.getd("ffn_expand"), eb = h.getd("e_block");
            if (c != in.c) throw DimensionError("profile: stage " + std::to_string(s.id) + " channel mismatch");
            if (in.h % sr != 0 || in.w % sr != 0)
                throw GeometryError("profile: stage " + std::to_string(s.id) + " sr does not divide spatial dims");
            const i64 hidden = static_cast<i64>(std::llround(fe * static_cast<double>(c)));
            const i64 n_tok = (in.h / sr) * (in.w / sr);
            i64 p = dslk_block_params(c, 3, 0, eb);  // local DSLK (neck form)
            p += c * 9;                              // f_PE depthwise 3x3
            p += 2 * c;                              // norm after local sum
            p += mhsa_params(c);
            p += c * c * sr * sr;                    // f_LD transposed conv
            p += 2 * c;                              // norm after f_LD
            p += c * hidden + hidden + hidden * c + c + 2 * c;  // FFN (biased) + norm
            row.params = p;
            i64 f = dslk_block_flops(c, 3, 0, eb, in.h, in.w);
            f += conv_flops(c, c, 3, in.h, in.w, c);            // f_PE
            f += mhsa_flops(c, heads, n_tok);
            f += 2 * sr * sr * c * c * n_tok;                   // f_LD
            f += (2 * c * hidden + 2 * hidden * c) * in.h * in.w;  // FFN
            row.flops = f;
            desc << "DSLKVit[" << c << "]sr" << sr;
        } else if (s.kind == "sppf") {
            const i64 ci = h.geti("c_in"), co = h.geti("c_out");
            if (ci != in.c) throw DimensionError("profile: stage " + std::to_string(s.id) + " channel mismatch");
            const i64 half = ci / 2;
            out.c = co;
            row.params = cbs_params(ci, half, 1) + cbs_params(half * 4, co, 1);
            row.flops = conv_flops(ci, half, 1, in.h, in.w) + conv_flops(half * 4, co, 1, in.h, in.w);
            desc << "SPPF[" << ci << "," << co << "]";
        } else if (s.kind == "upsample") {
            const i64 f = h.geti("factor");
            out.h = in.h * f;
            out.w = in.w * f;
            desc << "Upsample x" << f;
        } else if (s.kind == "concat") {
            out.c = 0;
            for (const int p : s.src) {
                const Dims d = dims.at(p);
                if (d.h != in.h || d.w != in.w)
                    throw DimensionError("profile: stage " + std::to_string(s.id) + " concat spatial mismatch");
                out.c += d.c;
            }
            desc << "Concat";
        } else if (s.kind == "detect_head") {
            const i64 ci = h.geti("c_in"), nc = h.geti("nc");
            if (ci != in.c) throw DimensionError("profile: stage " + std::to_string(s.id) + " channel mismatch");
            out.c = 3 * (nc + 5);
            row.params = conv_params(ci, out.c, 1, 1, true);
            row.flops = conv_flops(ci, out.c, 1, in.h, in.w);
            desc << "Detect[" << ci << "," << out.c << "]";
        } else {
            throw CapabilityError("profile: unknown stage kind '" + s.kind + "'");
        }

        dims[s.id] = out;
        row.module_desc = desc.str();
        std::ostringstream shp;
        shp << "1x" << out.c << "x" << out.h << "x" << out.w;
        row.out_shape = shp.str();
        rep.rows.push_back(std::move(row));
    }
    for (const auto& r : rep.rows) {
        rep.total_params += r.params;
        rep.total_flops += r.flops;
    }
    return rep;
}

inline std::string report_to_text(const ProfileReport& r) {
    std::ostringstream os;
    os << "model " << r.model << " at " << r.in_h << "x" << r.in_w << "\n";
    os << std::left << std::setw(6) << "stage" << std::setw(14) << "name" << std::setw(26) << "module"
       << std::right << std::setw(10) << "params" << std::setw(14) << "flops"
       << "  " << std::left << "out_shape" << "\n";
    for (const auto& row : r.rows) {
        os << std::left << std::setw(6) << row.stage_id << std::setw(14) << row.name << std::setw(26)
           << row.module_desc << std::right << std::setw(10) << row.params << std::setw(14) << row.flops
           << "  " << std::left << row.out_shape << "\n";
    }
    os << "total_params " << r.total_params << "\n";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", r.gflops());
    os << "gflops " << buf << "\n";
    return os.str();
}

inline std::string report_to_csv(const ProfileReport& r) {
    std::ostringstream os;
    os << "stage,name,params,flops,out_shape\n";
    for (const auto& row : r.rows)
        os << row.stage_id << "," << row.name << "," << row.params << "," << row.flops << ","
           << row.out_shape << "\n";
    os << "total," << r.model << "," << r.total_params << "," << r.total_flops << ",\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Side-by-side comparison, aligned by stage name.
// ---------------------------------------------------------------------------
struct CompareRow {
    std::string name;
    int stage_id = -1;
    std::string desc_a, desc_b;
    i64 params_a = 0, params_b = 0;
    i64 delta = 0;
};

struct CompareReport {
    std::vector<CompareRow> rows;
    i64 total_a = 0, total_b = 0;
};

inline CompareReport compare(const ProfileReport& a, const ProfileReport& b) {
    CompareReport rep;
    rep.total_a = a.total_params;
    rep.total_b = b.total_params;
    for (const auto& ra : a.rows) {
        CompareRow row;
        row.name = ra.name;
        row.stage_id = ra.stage_id;
        row.desc_a = ra.module_desc;
        row.params_a = ra.params;
        for (const auto& rb : b.rows) {
            if (rb.name == ra.name) {
                row.desc_b = rb.module_desc;
                row.params_b = rb.params;
                break;
            }
        }
        row.delta = row.params_a - row.params_b;
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

}  // namespace antnet
