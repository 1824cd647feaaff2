#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "iosicp/encoder.hpp"
#include "iosicp/errors.hpp"
#include "iosicp/geometry.hpp"
#include "iosicp/grid.hpp"
#include "iosicp/scenario.hpp"

namespace iosicp {

struct OrientedBox {
    double cx = 0.0, cy = 0.0;
    double length = 1.0, width = 1.0;
    double yaw = 0.0;

    static OrientedBox of(const ObjectBox& o) {
        return OrientedBox{o.center.x, o.center.y, o.length, o.width, o.yaw};
    }
};

struct Detection {
    OrientedBox box;
    double score = 0.0;  // clamped to [0, 1]
};

/// Detections sorted by descending score; ties broken by ascending center-x
/// then center-y.
using DetectionSet = std::vector<Detection>;

inline void sort_detections(DetectionSet& dets) {
    std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.box.cx != b.box.cx) return a.box.cx < b.box.cx;
        return a.box.cy < b.box.cy;
    });
}

// ---------------------------------------------------------------------------
// Analytic decoder: threshold occupancy evidence, 4-connected components,
// box per component from the cell extent.
// ---------------------------------------------------------------------------

/// block_channels is the channel count of one concatenated block; occupancy
/// evidence is the max over channel 0 of every block. Boxes come out in the
/// grid's own (local) frame.
inline DetectionSet decode(const FeatureGrid& grid, double occupancy_threshold,
                           int block_channels) {
    if (block_channels <= 0 || grid.channels % block_channels != 0)
        throw ShapeError("decode: channels not a multiple of block size");
    const int blocks = grid.channels / block_channels;
    const int hw = grid.height * grid.width;

    std::vector<double> evidence(hw, 0.0);
    for (int b = 0; b < blocks; ++b) {
        const float* p = grid.data.data() + static_cast<std::size_t>(b) * block_channels * hw;
        for (int i = 0; i < hw; ++i)
            evidence[i] = std::max(evidence[i], static_cast<double>(p[i]));
    }

    std::vector<int> label(hw, -1);
    DetectionSet dets;
    std::vector<int> stack;
    for (int start = 0; start < hw; ++start) {
        if (label[start] >= 0 || !(evidence[start] > occupancy_threshold)) continue;
        int min_h = grid.height, max_h = -1, min_w = grid.width, max_w = -1;
        double score_acc = 0.0;
        int cells = 0;
        stack.assign(1, start);
        label[start] = static_cast<int>(dets.size());
        while (!stack.empty()) {
            const int i = stack.back();
            stack.pop_back();
            const int h = i / grid.width, w = i % grid.width;
            min_h = std::min(min_h, h);
            max_h = std::max(max_h, h);
            min_w = std::min(min_w, w);
            max_w = std::max(max_w, w);
            score_acc += evidence[i];
            ++cells;
            const int nb[4] = {i - grid.width, i + grid.width, i - 1, i + 1};
            const bool ok[4] = {h > 0, h + 1 < grid.height, w > 0, w + 1 < grid.width};
            for (int k = 0; k < 4; ++k) {
                if (!ok[k] || label[nb[k]] >= 0 || !(evidence[nb[k]] > occupancy_threshold))
                    continue;
                label[nb[k]] = static_cast<int>(dets.size());
                stack.push_back(nb[k]);
            }
        }
        Detection d;
        const double cell = grid.cell_size;
        d.box.cx = grid.origin_x + 0.5 * (min_w + max_w) * cell;
        d.box.cy = grid.origin_y + 0.5 * (min_h + max_h) * cell;
        d.box.length = (max_w - min_w + 1) * cell;
        d.box.width = (max_h - min_h + 1) * cell;
        d.box.yaw = 0.0;
        d.score = std::min(1.0, score_acc / cells);
        dets.push_back(d);
    }
    sort_detections(dets);
    return dets;
}

// ---------------------------------------------------------------------------
// Oriented IoU via convex polygon clipping
// ---------------------------------------------------------------------------

inline double iou(const OrientedBox& a, const OrientedBox& b) {
    if (!(a.length > 0.0) || !(a.width > 0.0) || !(b.length > 0.0) || !(b.width > 0.0))
        throw DomainError("iou: degenerate box");
    const auto ca = rect_corners({a.cx, a.cy}, a.length, a.width, a.yaw);
    const auto cb = rect_corners({b.cx, b.cy}, b.length, b.width, b.yaw);
    const std::vector<Vec2> pa(ca.begin(), ca.end());
    const std::vector<Vec2> pb(cb.begin(), cb.end());
    const std::vector<Vec2> inter = clip_convex(pa, pb);
    double ai = inter.size() >= 3 ? std::abs(polygon_area(inter)) : 0.0;
    const double area_a = a.length * a.width;
    const double area_b = b.length * b.width;
    ai = std::min(ai, std::min(area_a, area_b));
    const double u = area_a + area_b - ai;
    return ai / u;
}

// ---------------------------------------------------------------------------
// Average precision (all-point interpolation, greedy score-order matching)
// ---------------------------------------------------------------------------

struct ApResult {
    enum class Status { Ok, Degenerate, Skipped };
    double ap = 0.0;
    Status status = Status::Ok;
};

struct MatchResult {
    std::vector<int> det_to_gt;     // -1 for false positives
    std::vector<bool> gt_matched;
};

/// Greedy matching: detections in score order grab the highest-IoU unmatched
/// ground truth with IoU >= threshold.
inline MatchResult match_detections(const DetectionSet& dets, const std::vector<OrientedBox>& gts,
                                    double iou_threshold) {
    MatchResult m;
    m.det_to_gt.assign(dets.size(), -1);
    m.gt_matched.assign(gts.size(), false);
    for (std::size_t d = 0; d < dets.size(); ++d) {
        double best = -1.0;
        int best_g = -1;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (m.gt_matched[g]) continue;
            const double v = iou(dets[d].box, gts[g]);
            if (v >= iou_threshold && v > best) {
                best = v;
                best_g = static_cast<int>(g);
            }
        }
        if (best_g >= 0) {
            m.det_to_gt[d] = best_g;
            m.gt_matched[best_g] = true;
        }
    }
    return m;
}

inline ApResult average_precision(const DetectionSet& dets, const std::vector<OrientedBox>& gts,
                                  double iou_threshold) {
    if (gts.empty() && dets.empty()) return {0.0, ApResult::Status::Skipped};
    if (gts.empty()) return {0.0, ApResult::Status::Degenerate};
    if (dets.empty()) return {0.0, ApResult::Status::Ok};

    DetectionSet sorted = dets;
    sort_detections(sorted);
    const MatchResult m = match_detections(sorted, gts, iou_threshold);

    std::vector<double> precision, recall;
    int tp = 0;
    for (std::size_t d = 0; d < sorted.size(); ++d) {
        if (m.det_to_gt[d] >= 0) ++tp;
        precision.push_back(static_cast<double>(tp) / static_cast<double>(d + 1));
        recall.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
    }
    // Precision envelope, then the area under the stepwise PR curve.
    for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i)
        precision[i] = std::max(precision[i], precision[i + 1]);
    double ap = 0.0;
    double prev_r = 0.0;
    for (std::size_t i = 0; i < precision.size(); ++i) {
        ap += (recall[i] - prev_r) * precision[i];
        prev_r = recall[i];
    }
    return {ap, ApResult::Status::Ok};
}

// ---------------------------------------------------------------------------
// Scene evaluation
// ---------------------------------------------------------------------------

struct EvalEntry {
    int agent_id = 0;
    double iou_threshold = 0.0;
    ApResult ap;
    bool has_visible = false;
    bool has_occluded = false;
    double recall_visible = 0.0;
    double recall_occluded = 0.0;
};

/// Ground truth for an agent: objects whose center falls inside the agent's
/// grid extent (in the agent frame). Recall is split by the occlusion-aware
/// visibility of each ground truth.
inline std::vector<EvalEntry> evaluate(const WorldState& world,
                                       const std::map<int, DetectionSet>& world_frame_dets,
                                       const std::vector<double>& iou_thresholds,
                                       const GridSpec& spec) {
    std::vector<EvalEntry> out;
    const double half_x = 0.5 * spec.width * spec.cell_size_m;
    const double half_y = 0.5 * spec.height * spec.cell_size_m;
    for (const auto& [agent_id, dets] : world_frame_dets) {
        const AgentState* agent = world.find_agent(agent_id);
        if (!agent) throw DomainError("evaluate: detections for unknown agent");

        std::vector<OrientedBox> gts;
        std::vector<bool> gt_visible;
        std::vector<ObjectBox> vis = visible_objects(*agent, world);
        for (const auto& obj : world.objects) {
            const Vec2 local = detail::world_to_local(agent->pose, obj.center);
            if (std::abs(local.x) > half_x || std::abs(local.y) > half_y) continue;
            gts.push_back(OrientedBox::of(obj));
            bool is_vis = false;
            for (const auto& v : vis) is_vis |= v.id == obj.id;
            gt_visible.push_back(is_vis);
        }

        for (double thr : iou_thresholds) {
            EvalEntry e;
            e.agent_id = agent_id;
            e.iou_threshold = thr;
            if (gts.empty() && dets.empty()) {
                e.ap = {0.0, ApResult::Status::Skipped};
                out.push_back(e);
                continue;
            }
            e.ap = average_precision(dets, gts, thr);
            DetectionSet sorted = dets;
            sort_detections(sorted);
            const MatchResult m = match_detections(sorted, gts, thr);
            int vis_total = 0, vis_hit = 0, occ_total = 0, occ_hit = 0;
            for (std::size_t g = 0; g < gts.size(); ++g) {
                if (gt_visible[g]) {
                    ++vis_total;
                    vis_hit += m.gt_matched[g] ? 1 : 0;
                } else {
                    ++occ_total;
                    occ_hit += m.gt_matched[g] ? 1 : 0;
                }
            }
            e.has_visible = vis_total > 0;
            e.has_occluded = occ_total > 0;
            e.recall_visible = vis_total ? static_cast<double>(vis_hit) / vis_total : 0.0;
            e.recall_occluded = occ_total ? static_cast<double>(occ_hit) / occ_total : 0.0;
            out.push_back(e);
        }
    }
    return out;
}

}  // namespace iosicp
