#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "antnet/tensor.hpp"

namespace antnet {

// Head decoding, NMS, and the detection metrics (P, R, AP, mAP.5, mAP.5:.95,
// size-class breakdown). Everything is deterministic: ranking ties break by
// (score desc, x1, y1), matching ties by highest IoU then lowest GT index.

struct DetectionBox {
    std::string image;
    int class_id = 0;
    double score = 0.0;
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    double area() const { return (x2 - x1) * (y2 - y1); }
};

struct GroundTruthBox {
    std::string image;
    int class_id = 0;
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    double area() const { return (x2 - x1) * (y2 - y1); }
};

inline double iou(double ax1, double ay1, double ax2, double ay2, double bx1, double by1, double bx2,
                  double by2) {
    const double ix1 = std::max(ax1, bx1);
    const double iy1 = std::max(ay1, by1);
    const double ix2 = std::min(ax2, bx2);
    const double iy2 = std::min(ay2, by2);
    const double iw = std::max(0.0, ix2 - ix1);
    const double ih = std::max(0.0, iy2 - iy1);
    const double inter = iw * ih;
    const double uni = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
    return uni <= 0.0 ? 0.0 : inter / uni;
}

inline double iou(const DetectionBox& a, const GroundTruthBox& b) {
    return iou(a.x1, a.y1, a.x2, a.y2, b.x1, b.y1, b.x2, b.y2);
}

inline double iou(const DetectionBox& a, const DetectionBox& b) {
    return iou(a.x1, a.y1, a.x2, a.y2, b.x1, b.y1, b.x2, b.y2);
}

/// Stable ranking key for detections.
inline bool det_before(const DetectionBox& a, const DetectionBox& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.x1 != b.x1) return a.x1 < b.x1;
    return a.y1 < b.y1;
}

// ---------------------------------------------------------------------------
// Anchor decoding (YOLOv5 convention):
//   center = (2*sig(txy) - 0.5 + grid) * stride
//   size   = (2*sig(twh))^2 * anchor
//   score  = sig(obj) * max_c sig(cls_c)
// Channel layout per anchor a: [tx, ty, tw, th, obj, cls_0..cls_{nc-1}].
// ---------------------------------------------------------------------------
struct Anchor {
    double w = 0, h = 0;
};

inline const std::array<std::array<Anchor, 3>, 3>& default_anchors() {
    static const std::array<std::array<Anchor, 3>, 3> a = {{
        {{{10, 13}, {16, 30}, {33, 23}}},     // P3, stride 8
        {{{30, 61}, {62, 45}, {59, 119}}},    // P4, stride 16
        {{{116, 90}, {156, 198}, {373, 326}}} // P5, stride 32
    }};
    return a;
}

template <typename T>
std::vector<DetectionBox> decode(const std::vector<Tensor4<T>>& heads, int nc,
                                 const std::vector<i64>& strides,
                                 const std::array<std::array<Anchor, 3>, 3>& anchors,
                                 double conf_thresh, const std::string& image_id = "0") {
    if (heads.size() != strides.size()) throw DimensionError("decode: heads/strides size mismatch");
    std::vector<DetectionBox> out;
    for (std::size_t level = 0; level < heads.size(); ++level) {
        const Tensor4<T>& head = heads[level];
        const i64 per_anchor = nc + 5;
        if (head.c != 3 * per_anchor)
            throw DimensionError("decode: head has " + std::to_string(head.c) + " channels, expected " +
                                 std::to_string(3 * per_anchor));
        const double stride = static_cast<double>(strides[level]);
        const double img_w = static_cast<double>(head.w) * stride;
        const double img_h = static_cast<double>(head.h) * stride;
        for (i64 in = 0; in < head.n; ++in) {
            for (int a = 0; a < 3; ++a) {
                const i64 base_c = a * per_anchor;
                const Anchor& anc = anchors[level][static_cast<std::size_t>(a)];
                for (i64 gy = 0; gy < head.h; ++gy) {
                    for (i64 gx = 0; gx < head.w; ++gx) {
                        const double tx = head.at(in, base_c + 0, gy, gx);
                        const double ty = head.at(in, base_c + 1, gy, gx);
                        const double tw = head.at(in, base_c + 2, gy, gx);
                        const double th = head.at(in, base_c + 3, gy, gx);
                        const double obj = 1.0 / (1.0 + std::exp(-double(head.at(in, base_c + 4, gy, gx))));
                        int best_cls = 0;
                        double best_logit = head.at(in, base_c + 5, gy, gx);
                        for (int c = 1; c < nc; ++c) {
                            const double l = head.at(in, base_c + 5 + c, gy, gx);
                            if (l > best_logit) {
                                best_logit = l;
                                best_cls = c;
                            }
                        }
                        const double cls_p = 1.0 / (1.0 + std::exp(-best_logit));
                        const double score = obj * cls_p;
                        if (!(score > conf_thresh)) continue;
                        const double sx = 1.0 / (1.0 + std::exp(-tx));
                        const double sy = 1.0 / (1.0 + std::exp(-ty));
                        const double sw = 1.0 / (1.0 + std::exp(-tw));
                        const double sh = 1.0 / (1.0 + std::exp(-th));
                        const double cx = (2.0 * sx - 0.5 + static_cast<double>(gx)) * stride;
                        const double cy = (2.0 * sy - 0.5 + static_cast<double>(gy)) * stride;
                        const double bw = (2.0 * sw) * (2.0 * sw) * anc.w;
                        const double bh = (2.0 * sh) * (2.0 * sh) * anc.h;
                        DetectionBox d;
                        d.image = image_id;
                        d.class_id = best_cls;
                        d.score = score;
                        d.x1 = std::max(0.0, cx - bw / 2.0);
                        d.y1 = std::max(0.0, cy - bh / 2.0);
                        d.x2 = std::min(img_w, cx + bw / 2.0);
                        d.y2 = std::min(img_h, cy + bh / 2.0);
                        if (d.x2 <= d.x1 || d.y2 <= d.y1) continue;
                        out.push_back(d);
                    }
                }
            }
        }
    }
    std::sort(out.begin(), out.end(), det_before);
    return out;
}

// ---------------------------------------------------------------------------
// Greedy NMS per (image, class); suppress when IoU > threshold. The output is
// ranked by the same stable key used everywhere.
// ---------------------------------------------------------------------------
inline std::vector<DetectionBox> nms(const std::vector<DetectionBox>& dets, double iou_thresh) {
    std::vector<DetectionBox> ranked = dets;
    std::sort(ranked.begin(), ranked.end(), det_before);
    std::vector<bool> suppressed(ranked.size(), false);
    std::vector<DetectionBox> kept;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (suppressed[i]) continue;
        kept.push_back(ranked[i]);
        for (std::size_t j = i + 1; j < ranked.size(); ++j) {
            if (suppressed[j]) continue;
            if (ranked[j].class_id != ranked[i].class_id || ranked[j].image != ranked[i].image) continue;
            if (iou(ranked[i], ranked[j]) > iou_thresh) suppressed[j] = true;
        }
    }
    return kept;
}

// ---------------------------------------------------------------------------
// Matching and PR accumulation.
// ---------------------------------------------------------------------------
struct PrCurve {
    std::vector<double> precision, recall;
    i64 tp = 0, fp = 0;
    i64 n_gt = 0;
};

namespace eval_detail {

struct RankedFlags {
    std::vector<int> flag;  // 1 = TP, 0 = FP (ignored detections are dropped)
    i64 n_gt = 0;
};

// One class, one IoU threshold, optional area gate [amin, amax). GTs outside
// the gate are "ignore": detections matched to them drop out of the ranking;
// unmatched detections outside the gate drop out as well.
inline RankedFlags match_ranked(const std::vector<DetectionBox>& dets,
                                const std::vector<GroundTruthBox>& gts, double iou_thresh,
                                double amin = 0.0, double amax = 1e18) {
    std::vector<DetectionBox> ranked = dets;
    std::sort(ranked.begin(), ranked.end(), det_before);
    std::vector<bool> gt_matched(gts.size(), false);
    RankedFlags out;
    for (const auto& g : gts) {
        if (g.area() >= amin && g.area() < amax) ++out.n_gt;
    }
    for (const auto& d : ranked) {
        i64 best_gt = -1;
        double best_iou = 0.0;
        for (std::size_t gi = 0; gi < gts.size(); ++gi) {
            if (gt_matched[gi]) continue;
            if (gts[gi].image != d.image) continue;
            const double v = iou(d, gts[gi]);
            if (v >= iou_thresh && v > best_iou) {
                best_iou = v;
                best_gt = static_cast<i64>(gi);
            }
        }
        if (best_gt >= 0) {
            gt_matched[static_cast<std::size_t>(best_gt)] = true;
            const auto& g = gts[static_cast<std::size_t>(best_gt)];
            if (g.area() >= amin && g.area() < amax) {
                out.flag.push_back(1);
            }
            // matched to an out-of-range GT: ignored
        } else {
            if (d.area() >= amin && d.area() < amax) out.flag.push_back(0);
        }
    }
    return out;
}

inline PrCurve curve_from_flags(const RankedFlags& rf) {
    PrCurve c;
    c.n_gt = rf.n_gt;
    i64 tp = 0, fp = 0;
    for (const int f : rf.flag) {
        if (f)
            ++tp;
        else
            ++fp;
        c.precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
        c.recall.push_back(rf.n_gt == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(rf.n_gt));
    }
    c.tp = tp;
    c.fp = fp;
    return c;
}

}  // namespace eval_detail

/// Score-descending greedy matching for one class across the eval set.
inline PrCurve match_and_curve(const std::vector<DetectionBox>& dets,
                               const std::vector<GroundTruthBox>& gts, double iou_thresh) {
    return eval_detail::curve_from_flags(eval_detail::match_ranked(dets, gts, iou_thresh));
}

/// 101-point interpolated AP: precision envelope max{p(r') : r' >= r} sampled
/// at r = 0.00, 0.01, ..., 1.00.
inline double average_precision(const PrCurve& curve) {
    if (curve.precision.empty() || curve.n_gt == 0) return 0.0;
    double sum = 0.0;
    for (int i = 0; i <= 100; ++i) {
        const double r = static_cast<double>(i) / 100.0;
        double best = 0.0;
        for (std::size_t j = 0; j < curve.precision.size(); ++j) {
            if (curve.recall[j] >= r) best = std::max(best, curve.precision[j]);
        }
        sum += best;
    }
    return sum / 101.0;
}

struct EvalMetrics {
    double precision = 0.0;  // mean over classes, final point of the IoU-0.5 curve
    double recall = 0.0;
    double map50 = 0.0;
    double map5095 = 0.0;
    double map_small = 0.0;
    double map_medium = 0.0;
    double map_large = 0.0;
};

inline std::vector<double> iou_grid_50_95() {
    std::vector<double> g;
    for (int i = 0; i < 10; ++i) g.push_back(0.5 + 0.05 * i);
    return g;
}

// COCO area gates: small < 32^2, medium 32^2..96^2, large > 96^2.
inline constexpr double kAreaSmallMax = 32.0 * 32.0;
inline constexpr double kAreaMediumMax = 96.0 * 96.0;

/// Full evaluation: classes are those with at least one ground-truth box;
/// per-class results merge in ascending class-id order.
inline EvalMetrics evaluate(const std::vector<DetectionBox>& dets,
                            const std::vector<GroundTruthBox>& gts) {
    if (gts.empty()) throw DomainError("evaluate: no ground-truth boxes");
    std::set<int> classes;
    for (const auto& g : gts) classes.insert(g.class_id);

    std::map<int, std::vector<DetectionBox>> dets_by_class;
    std::map<int, std::vector<GroundTruthBox>> gts_by_class;
    for (const auto& d : dets) dets_by_class[d.class_id].push_back(d);
    for (const auto& g : gts) gts_by_class[g.class_id].push_back(g);

    EvalMetrics m;
    const auto grid = iou_grid_50_95();
    struct SizeAcc {
        double sum = 0.0;
        i64 n = 0;
    };
    SizeAcc acc_small, acc_medium, acc_large;
    double sum50 = 0.0, sum5095 = 0.0, sum_p = 0.0, sum_r = 0.0;
    for (const int cls : classes) {
        const auto& cdets = dets_by_class[cls];
        const auto& cgts = gts_by_class[cls];
        PrCurve c50 = match_and_curve(cdets, cgts, 0.5);
        sum50 += average_precision(c50);
        if (!c50.precision.empty()) {
            sum_p += c50.precision.back();
            sum_r += c50.recall.back();
        }
        double over_grid = 0.0;
        for (const double t : grid) over_grid += average_precision(match_and_curve(cdets, cgts, t));
        sum5095 += over_grid / static_cast<double>(grid.size());

        const std::array<std::pair<double, double>, 3> gates = {
            std::pair<double, double>{0.0, kAreaSmallMax},
            {kAreaSmallMax, kAreaMediumMax},
            {kAreaMediumMax, 1e18}};
        std::array<SizeAcc*, 3> accs = {&acc_small, &acc_medium, &acc_large};
        for (int gi = 0; gi < 3; ++gi) {
            i64 gated_gt = 0;
            for (const auto& g : cgts)
                if (g.area() >= gates[static_cast<std::size_t>(gi)].first &&
                    g.area() < gates[static_cast<std::size_t>(gi)].second)
                    ++gated_gt;
            if (gated_gt == 0) continue;
            double over = 0.0;
            for (const double t : grid) {
                const auto rf = eval_detail::match_ranked(cdets, cgts, t,
                                                          gates[static_cast<std::size_t>(gi)].first,
                                                          gates[static_cast<std::size_t>(gi)].second);
                over += average_precision(eval_detail::curve_from_flags(rf));
            }
            accs[static_cast<std::size_t>(gi)]->sum += over / static_cast<double>(grid.size());
            accs[static_cast<std::size_t>(gi)]->n += 1;
        }
    }
    const double ncls = static_cast<double>(classes.size());
    m.map50 = sum50 / ncls;
    m.map5095 = sum5095 / ncls;
    m.precision = sum_p / ncls;
    m.recall = sum_r / ncls;
    m.map_small = acc_small.n ? acc_small.sum / static_cast<double>(acc_small.n) : 0.0;
    m.map_medium = acc_medium.n ? acc_medium.sum / static_cast<double>(acc_medium.n) : 0.0;
    m.map_large = acc_large.n ? acc_large.sum / static_cast<double>(acc_large.n) : 0.0;
    return m;
}

}  // namespace antnet
