#pragma once

// Brute-force reference implementations for NMS and AP/mAP, kept independent
// of the library's evaluator: selection scans instead of sorts, direct
// re-tallying per recall sample instead of an accumulated curve.

#include <set>
#include <vector>

#include "antnet/detect.hpp"

namespace refeval {

inline std::vector<antnet::DetectionBox> nms_bruteforce(std::vector<antnet::DetectionBox> pool,
                                                        double thresh) {
    using antnet::det_before;
    std::vector<antnet::DetectionBox> kept;
    while (!pool.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < pool.size(); ++i)
            if (det_before(pool[i], pool[best])) best = i;
        antnet::DetectionBox top = pool[best];
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
        kept.push_back(top);
        std::vector<antnet::DetectionBox> rest;
        for (const auto& d : pool) {
            const bool same_group = d.class_id == top.class_id && d.image == top.image;
            if (same_group && antnet::iou(top, d) > thresh) continue;
            rest.push_back(d);
        }
        pool = std::move(rest);
    }
    return kept;
}

inline double ap_bruteforce(std::vector<antnet::DetectionBox> dets,
                            const std::vector<antnet::GroundTruthBox>& gts, double thresh) {
    using antnet::det_before;
    using antnet::i64;
    std::vector<bool> taken(gts.size(), false);
    std::vector<int> flags;
    std::vector<antnet::DetectionBox> ranked;
    while (!dets.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < dets.size(); ++i)
            if (det_before(dets[i], dets[best])) best = i;
        ranked.push_back(dets[best]);
        dets.erase(dets.begin() + static_cast<std::ptrdiff_t>(best));
    }
    const i64 n_gt = static_cast<i64>(gts.size());
    for (const auto& d : ranked) {
        double best_iou = 0.0;
        i64 best_gt = -1;
        for (std::size_t gi = 0; gi < gts.size(); ++gi) {
            if (taken[gi] || gts[gi].image != d.image) continue;
            const double v = antnet::iou(d, gts[gi]);
            if (v >= thresh && v > best_iou) {
                best_iou = v;
                best_gt = static_cast<i64>(gi);
            }
        }
        if (best_gt >= 0) {
            taken[static_cast<std::size_t>(best_gt)] = true;
            flags.push_back(1);
        } else {
            flags.push_back(0);
        }
    }
    if (flags.empty() || n_gt == 0) return 0.0;
    double sum = 0.0;
    for (int s = 0; s <= 100; ++s) {
        const double r = s / 100.0;
        double best_p = 0.0;
        i64 tp = 0, fp = 0;
        for (const int f : flags) {
            if (f)
                ++tp;
            else
                ++fp;
            const double recall = static_cast<double>(tp) / static_cast<double>(n_gt);
            const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
            if (recall >= r && precision > best_p) best_p = precision;
        }
        sum += best_p;
    }
    return sum / 101.0;
}

inline double map_bruteforce(const std::vector<antnet::DetectionBox>& dets,
                             const std::vector<antnet::GroundTruthBox>& gts,
                             const std::vector<double>& grid) {
    std::set<int> classes;
    for (const auto& g : gts) classes.insert(g.class_id);
    double total = 0.0;
    for (const int cls : classes) {
        std::vector<antnet::DetectionBox> cd;
        std::vector<antnet::GroundTruthBox> cg;
        for (const auto& d : dets)
            if (d.class_id == cls) cd.push_back(d);
        for (const auto& g : gts)
            if (g.class_id == cls) cg.push_back(g);
        double over = 0.0;
        for (const double t : grid) over += ap_bruteforce(cd, cg, t);
        total += over / static_cast<double>(grid.size());
    }
    return total / static_cast<double>(classes.size());
}

}  // namespace refeval
