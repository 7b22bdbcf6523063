#pragma once

// Class-agnostic mask evaluation following the COCO protocol (10 IoU thresholds
// 0.50:0.05:0.95, 101 recall points, top-100 detections per image, area "all",
// no crowd regions), plus the IoU-0.5 precision/recall protocol for pseudo
// annotations. All reported values are percentages.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sos/annotations.hpp"
#include "sos/error.hpp"
#include "sos/mask.hpp"

namespace sos {

struct Detection {
    ImageId image_id = 0;
    BinaryMask mask;
    double score = 0.0;
};

/// Harmonic mean; 0 when both inputs are 0.
inline double f1(double ap, double ar) {
    if (ap < 0.0 || ar < 0.0) throw PreconditionError("f1 inputs must be >= 0");
    if (ap + ar == 0.0) return 0.0;
    return 2.0 * ap * ar / (ap + ar);
}

/// IoU thresholds as numpy.linspace(0.5, 0.95, 10) produces them.
inline std::array<double, 10> coco_iou_thresholds() {
    std::array<double, 10> t{};
    const double step = (0.95 - 0.5) / 9.0;
    for (int i = 0; i < 10; ++i) t[static_cast<std::size_t>(i)] = i * step + 0.5;
    t[9] = 0.95;
    return t;
}

/// Recall sample points as numpy.linspace(0, 1, 101) produces them.
inline std::array<double, 101> coco_recall_points() {
    std::array<double, 101> r{};
    const double step = 1.0 / 100.0;
    for (int i = 0; i < 101; ++i) r[static_cast<std::size_t>(i)] = i * step;
    r[100] = 1.0;
    return r;
}

/// Greedy one-to-one matching. Detections are visited in the given order; each takes the
/// not-yet-matched ground truth with the highest IoU >= threshold (ties go to the later
/// ground truth, as in the COCO reference code). Returns the matched gt index per detection or -1.
inline std::vector<int> greedy_match(const std::vector<std::vector<double>>& iou, std::size_t num_gt, double threshold) {
    std::vector<int> det_match(iou.size(), -1);
    std::vector<bool> gt_taken(num_gt, false);
    for (std::size_t d = 0; d < iou.size(); ++d) {
        double best = std::min(threshold, 1.0 - 1e-10);
        int m = -1;
        for (std::size_t g = 0; g < num_gt; ++g) {
            if (gt_taken[g]) continue;
            if (iou[d][g] < best) continue;
            best = iou[d][g];
            m = static_cast<int>(g);
        }
        if (m >= 0) {
            det_match[d] = m;
            gt_taken[static_cast<std::size_t>(m)] = true;
        }
    }
    return det_match;
}

struct ThresholdResult {
    double iou = 0.0;
    double ap = 0.0;
    double recall = 0.0;
};

struct EvalReport {
    double ap = 0.0;
    double ar100 = 0.0;
    double f1 = 0.0;
    std::vector<ThresholdResult> per_threshold;
    std::size_t num_gt = 0;
    std::size_t num_detections = 0;

    nlohmann::json to_json() const {
        nlohmann::json pt = nlohmann::json::array();
        for (const auto& t : per_threshold) pt.push_back({{"iou", t.iou}, {"ap", t.ap}, {"recall", t.recall}});
        return {{"ap", ap},
                {"ar100", ar100},
                {"f1", f1},
                {"per_threshold", pt},
                {"num_gt", num_gt},
                {"num_detections", num_detections},
                {"protocol", "class-agnostic COCO mask eval; AR@100 averaged over IoU 0.50:0.05:0.95"}};
    }
};

namespace detail {

struct ImageEval {
    std::vector<double> scores;                  // kept detections, score-sorted
    std::vector<std::vector<int>> matched;       // [threshold][detection] 1 = true positive
};

template <typename T, typename ScoreOf>
std::vector<std::size_t> score_sorted(const std::vector<T>& items, ScoreOf score_of) {
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return score_of(items[a]) > score_of(items[b]); });
    return order;
}

}  // namespace detail

inline EvalReport evaluate_detections(std::span<const Detection> dets, const AnnotationSet& gts,
                                      std::size_t max_dets = 100) {
    const auto thresholds = coco_iou_thresholds();
    const auto recall_pts = coco_recall_points();

    std::map<ImageId, std::vector<const Detection*>> dets_by_image;
    for (const auto& d : dets) {
        if (!(d.score >= 0.0 && d.score <= 1.0)) throw PreconditionError("detection score outside [0,1]");
        dets_by_image[d.image_id].push_back(&d);
    }
    std::map<ImageId, std::vector<const AnnotationRecord*>> gts_by_image;
    for (const auto& g : gts.annotations) gts_by_image[g.image_id].push_back(&g);

    std::set<ImageId> image_ids;
    for (const auto& [id, _] : gts.images) image_ids.insert(id);
    for (const auto& [id, _] : dets_by_image) image_ids.insert(id);

    std::size_t total_gt = gts.annotations.size();
    if (total_gt == 0) throw PreconditionError("no ground-truth instances; AP is undefined");

    // Flattened per-detection records across images, in image order then per-image score order.
    std::vector<double> all_scores;
    std::vector<std::vector<int>> all_tp(thresholds.size());
    std::size_t kept_dets = 0;
    for (const ImageId id : image_ids) {
        const auto& gl = gts_by_image[id];
        auto dl = dets_by_image[id];
        const auto order = detail::score_sorted(dl, [](const Detection* d) { return d->score; });
        std::vector<const Detection*> top;
        for (std::size_t i = 0; i < order.size() && i < max_dets; ++i) top.push_back(dl[order[i]]);
        std::vector<std::vector<double>> iou(top.size(), std::vector<double>(gl.size(), 0.0));
        for (std::size_t d = 0; d < top.size(); ++d)
            for (std::size_t g = 0; g < gl.size(); ++g) iou[d][g] = mask_iou(top[d]->mask, gl[g]->mask);
        for (std::size_t t = 0; t < thresholds.size(); ++t) {
            const auto m = greedy_match(iou, gl.size(), thresholds[t]);
            for (const int v : m) all_tp[t].push_back(v >= 0 ? 1 : 0);
        }
        for (const auto* d : top) all_scores.push_back(d->score);
        kept_dets += top.size();
    }

    const auto global = detail::score_sorted(all_scores, [](double s) { return s; });
    EvalReport rep;
    rep.num_gt = total_gt;
    rep.num_detections = kept_dets;
    const double eps = std::numeric_limits<double>::epsilon();
    double ap_sum = 0.0;
    double rec_sum = 0.0;
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
        const std::size_t nd = global.size();
        std::vector<double> rc(nd);
        std::vector<double> pr(nd);
        double tp = 0.0;
        double fp = 0.0;
        for (std::size_t i = 0; i < nd; ++i) {
            if (all_tp[t][global[i]]) tp += 1.0;
            else fp += 1.0;
            rc[i] = tp / static_cast<double>(total_gt);
            pr[i] = tp / (fp + tp + eps);
        }
        const double recall = nd ? rc.back() : 0.0;
        for (std::size_t i = nd; i-- > 1;) pr[i - 1] = std::max(pr[i - 1], pr[i]);
        double q_sum = 0.0;
        for (const double r : recall_pts) {
            const auto it = std::lower_bound(rc.begin(), rc.end(), r);
            if (it != rc.end()) q_sum += pr[static_cast<std::size_t>(it - rc.begin())];
        }
        const double ap_t = q_sum / static_cast<double>(recall_pts.size());
        rep.per_threshold.push_back({thresholds[t], 100.0 * ap_t, 100.0 * recall});
        ap_sum += ap_t;
        rec_sum += recall;
    }
    rep.ap = 100.0 * ap_sum / static_cast<double>(thresholds.size());
    rep.ar100 = 100.0 * rec_sum / static_cast<double>(thresholds.size());
    rep.f1 = f1(rep.ap, rep.ar100);
    return rep;
}

struct QualityReport {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t matched = 0;
    std::size_t num_pseudo = 0;
    std::size_t num_gt = 0;

    nlohmann::json to_json() const {
        return {{"precision", precision}, {"recall", recall}, {"f1", f1},
                {"matched", matched},     {"num_pseudo", num_pseudo}, {"num_gt", num_gt}};
    }
};

/// Precision/recall of pseudo annotations against ground truth at a single IoU threshold,
/// with per-image one-to-one greedy matching in pseudo-score order.
inline QualityReport pseudo_quality(std::span<const AnnotationRecord> pseudo, std::span<const AnnotationRecord> gts,
                                    double iou_threshold = 0.5) {
    if (gts.empty()) throw PreconditionError("no ground-truth instances; recall is undefined");
    std::map<ImageId, std::vector<const AnnotationRecord*>> p_by, g_by;
    for (const auto& p : pseudo) p_by[p.image_id].push_back(&p);
    for (const auto& g : gts) g_by[g.image_id].push_back(&g);
    QualityReport q;
    q.num_pseudo = pseudo.size();
    q.num_gt = gts.size();
    for (auto& [id, pl] : p_by) {
        const auto git = g_by.find(id);
        if (git == g_by.end()) continue;
        const auto& gl = git->second;
        const auto order = detail::score_sorted(pl, [](const AnnotationRecord* r) { return r->score; });
        std::vector<std::vector<double>> iou(order.size(), std::vector<double>(gl.size(), 0.0));
        for (std::size_t d = 0; d < order.size(); ++d)
            for (std::size_t g = 0; g < gl.size(); ++g) iou[d][g] = mask_iou(pl[order[d]]->mask, gl[g]->mask);
        for (const int m : greedy_match(iou, gl.size(), iou_threshold))
            if (m >= 0) ++q.matched;
    }
    q.precision = q.num_pseudo ? 100.0 * static_cast<double>(q.matched) / static_cast<double>(q.num_pseudo) : 0.0;
    q.recall = 100.0 * static_cast<double>(q.matched) / static_cast<double>(q.num_gt);
    q.f1 = f1(q.precision, q.recall);
    return q;
}

}  // namespace sos
