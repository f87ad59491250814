#pragma once

#include <map>
#include <memory>
#include <variant>

#include "antnet/blocks.hpp"
#include "antnet/graph.hpp"

namespace antnet {

// Runtime instantiation of a Graph: one parameterized block per stage, all
// weights drawn from a single seeded stream in stage order. Immutable after
// construction; forward calls over distinct inputs are safe concurrently.

template <typename T>
struct UpsampleStage {
    i64 factor = 2;
};
struct ConcatStage {};

template <typename T>
using StageBlock = std::variant<Cbs<T>, C3<T>, DslkLayer<T>, DslkVit<T>, Sppf<T>, UpsampleStage<T>,
                                ConcatStage, DetectHead<T>>;

template <typename T>
class Model {
public:
    explicit Model(const Graph& graph, u64 seed = 0) : graph_(graph) {
        graph_.validate();
        for (const auto& s : graph_.stages) blocks_.push_back(instantiate(s));
        Rng rng(seed);
        visit_params([&rng](const std::string&, TensorView<T>) {});  // shape check only
        init_all(rng);
    }

    const Graph& graph() const { return graph_; }

    /// Applies fn to every learnable tensor in manifest order
    /// (stage order, then block member order), names prefixed "s<id>.".
    void visit_params(const ParamFn<T>& fn) {
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const std::string prefix = "s" + std::to_string(graph_.stages[i].id) + ".";
            std::visit(
                [&](auto& blk) {
                    using B = std::decay_t<decltype(blk)>;
                    if constexpr (!std::is_same_v<B, UpsampleStage<T>> && !std::is_same_v<B, ConcatStage>) {
                        blk.visit_params(prefix, fn);
                    }
                },
                blocks_[i]);
        }
    }

    i64 param_value_count() {
        i64 total = 0;
        visit_params([&total](const std::string&, TensorView<T> v) { total += v.size; });
        return total;
    }

    /// Topological execution; returns the three raw head tensors (P3, P4, P5).
    std::vector<Tensor4<T>> forward(const Tensor4<T>& x) const {
        if (x.h != graph_.in_h || x.w != graph_.in_w) {
            // permitted: any input divisible by 32 (and by every sr in use)
        }
        if (x.h % 32 != 0 || x.w % 32 != 0)
            throw GeometryError("model forward: input dims must be divisible by 32, got " + x.shape_str());

        // free intermediate maps when no later stage needs them
        std::map<int, int> last_use;
        for (std::size_t i = 0; i < graph_.stages.size(); ++i)
            for (const int p : graph_.stages[i].src) last_use[p] = static_cast<int>(i);
        for (const int o : graph_.outputs) last_use[o] = static_cast<int>(graph_.stages.size());

        std::map<int, Tensor4<T>> values;
        auto fetch = [&](int id) -> const Tensor4<T>& {
            if (id == -1) return x;
            const auto it = values.find(id);
            if (it == values.end())
                throw DimensionError("model forward: missing value for stage " + std::to_string(id));
            return it->second;
        };

        for (std::size_t i = 0; i < graph_.stages.size(); ++i) {
            const Stage& s = graph_.stages[i];
            Tensor4<T> out;
            try {
                out = run_stage(blocks_[i], s, fetch);
            } catch (const std::runtime_error& e) {
                throw DimensionError("stage " + std::to_string(s.id) + " (" + s.name + "): " + e.what());
            }
            values[s.id] = std::move(out);
            for (const int p : s.src) {
                if (p >= 0 && last_use[p] == static_cast<int>(i)) values.erase(p);
            }
        }
        std::vector<Tensor4<T>> heads;
        for (const int o : graph_.outputs) heads.push_back(values.at(o));
        return heads;
    }

private:
    Graph graph_;
    std::vector<StageBlock<T>> blocks_;

    static StageBlock<T> instantiate(const Stage& s) {
        const Hyper& h = s.hyper;
        if (s.kind == "cbs") {
            return Cbs<T>(h.geti("c_in"), h.geti("c_out"), h.geti("k"), h.geti("stride"),
                          h.has("p") ? h.geti("p") : -1);
        }
        if (s.kind == "c3") {
            return C3<T>(h.geti("c_in"), h.geti("c_out"), h.geti("n"), h.geti("shortcut") != 0);
        }
        if (s.kind == "dslk_layer") {
            return DslkLayer<T>(h.geti("c_in"), h.geti("c_out"), h.geti("n"), h.geti("k_large"),
                                h.geti("k_small"), h.getd("e"));
        }
        if (s.kind == "dslkvit") {
            VitSpec v;
            v.d_model = h.geti("channels");
            v.sr = h.geti("sr");
            v.heads = h.geti("heads");
            v.ffn_expand = h.getd("ffn_expand");
            v.e_block = h.getd("e_block");
            return DslkVit<T>(v);
        }
        if (s.kind == "sppf") {
            return Sppf<T>(h.geti("c_in"), h.geti("c_out"), h.geti("k"));
        }
        if (s.kind == "upsample") {
            return UpsampleStage<T>{h.geti("factor")};
        }
        if (s.kind == "concat") {
            return ConcatStage{};
        }
        if (s.kind == "detect_head") {
            return DetectHead<T>(h.geti("c_in"), static_cast<i64>(h.geti("nc")));
        }
        throw CapabilityError("unknown stage kind '" + s.kind + "'");
    }

    void init_all(Rng& rng) {
        for (auto& b : blocks_) {
            std::visit(
                [&rng](auto& blk) {
                    using B = std::decay_t<decltype(blk)>;
                    if constexpr (!std::is_same_v<B, UpsampleStage<T>> && !std::is_same_v<B, ConcatStage>) {
                        blk.init(rng);
                    }
                },
                b);
        }
    }

    template <typename Fetch>
    static Tensor4<T> run_stage(const StageBlock<T>& block, const Stage& s, Fetch&& fetch) {
        return std::visit(
            [&](const auto& blk) -> Tensor4<T> {
                using B = std::decay_t<decltype(blk)>;
                if constexpr (std::is_same_v<B, UpsampleStage<T>>) {
                    return upsample_nearest(fetch(s.src.at(0)), blk.factor);
                } else if constexpr (std::is_same_v<B, ConcatStage>) {
                    std::vector<const Tensor4<T>*> ins;
                    for (const int p : s.src) ins.push_back(&fetch(p));
                    return concat_channels(ins);
                } else {
                    return blk.forward(fetch(s.src.at(0)));
                }
            },
            block);
    }
};

}  // namespace antnet
