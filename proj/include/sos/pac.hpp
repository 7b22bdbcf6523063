#pragma once

// Pseudo annotation creation: confidence filter, mask NMS, suppression against
// original annotations, per-image cap, and merge.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sos/annotations.hpp"
#include "sos/error.hpp"
#include "sos/mask.hpp"
#include "sos/segmenter.hpp"

namespace sos {

struct PacConfig {
    double tau_conf = 0.9;
    double tau_nms = 0.95;
    /// Threshold for suppression against originals; tau_nms when unset.
    std::optional<double> tau_gt;
    int P = 10;

    double gt_threshold() const noexcept { return tau_gt.value_or(tau_nms); }

    void validate() const {
        const auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (!in_unit(tau_conf)) throw ConfigError("tau_conf must lie in [0, 1]");
        if (!in_unit(tau_nms)) throw ConfigError("tau_nms must lie in [0, 1]");
        if (tau_gt && !in_unit(*tau_gt)) throw ConfigError("tau_gt must lie in [0, 1]");
        if (P < 0) throw ConfigError("P must be >= 0");
    }
};

/// Keeps segments with score >= tau_conf, in input order.
inline std::vector<ScoredSegment> filter_confidence(std::span<const ScoredSegment> segments, double tau_conf) {
    std::vector<ScoredSegment> out;
    for (const auto& s : segments)
        if (s.score >= tau_conf) out.push_back(s);
    return out;
}

/// Drops every segment whose IoU with some original is >= tau, in input order.
inline std::vector<ScoredSegment> suppress_vs_original(std::span<const ScoredSegment> pseudo,
                                                       std::span<const AnnotationRecord* const> originals,
                                                       double tau) {
    std::vector<ScoredSegment> out;
    for (const auto& s : pseudo) {
        const bool hit = std::any_of(originals.begin(), originals.end(),
                                     [&](const AnnotationRecord* o) { return iou_at_least(s.mask, o->mask, tau); });
        if (!hit) out.push_back(s);
    }
    return out;
}

inline std::vector<ScoredSegment> suppress_vs_original(std::span<const ScoredSegment> pseudo,
                                                       std::span<const AnnotationRecord> originals, double tau) {
    std::vector<const AnnotationRecord*> ptrs;
    for (const auto& o : originals) ptrs.push_back(&o);
    return suppress_vs_original(pseudo, ptrs, tau);
}

/// Top-P segments by rank order (score, then area, then input index).
inline std::vector<ScoredSegment> cap_pseudo(std::span<const ScoredSegment> segments, int P) {
    if (P < 0) throw PreconditionError("P must be >= 0");
    std::vector<ScoredSegment> out;
    for (const std::size_t i : rank_order(segments)) {
        if (static_cast<int>(out.size()) >= P) break;
        out.push_back(segments[i]);
    }
    return out;
}

/// Survivor counts after each stage.
struct PacTrace {
    std::size_t returned = 0;
    std::size_t non_empty = 0;
    std::size_t confident = 0;
    std::size_t after_nms = 0;
    std::size_t after_gt = 0;
    std::size_t kept = 0;

    nlohmann::json to_json() const {
        return {{"returned", returned}, {"non_empty", non_empty}, {"confident", confident},
                {"after_nms", after_nms}, {"after_gt", after_gt},  {"kept", kept}};
    }
};

/// Runs the filter stages over backend output.
inline std::vector<ScoredSegment> pac_filter(std::span<const ScoredSegment> segments,
                                             std::span<const AnnotationRecord* const> originals, const PacConfig& cfg,
                                             PacTrace* trace = nullptr) {
    cfg.validate();
    std::vector<ScoredSegment> s;
    for (const auto& seg : segments)
        if (seg.mask.area() > 0) s.push_back(seg);
    const std::size_t non_empty = s.size();
    s = filter_confidence(s, cfg.tau_conf);
    const std::size_t confident = s.size();
    s = mask_nms(s, cfg.tau_nms);
    const std::size_t after_nms = s.size();
    s = suppress_vs_original(s, originals, cfg.gt_threshold());
    const std::size_t after_gt = s.size();
    s = cap_pseudo(s, cfg.P);
    if (trace) *trace = {segments.size(), non_empty, confident, after_nms, after_gt, s.size()};
    return s;
}

/// Prompts the backend and turns the survivors into pseudo records (ids left at 0).
inline std::vector<AnnotationRecord> make_pseudo_annotations(const ImageRef& image, const PromptSet& prompts,
                                                             SegmenterBackend& backend,
                                                             std::span<const AnnotationRecord* const> originals,
                                                             const PacConfig& cfg, PacTrace* trace = nullptr) {
    cfg.validate();
    for (const auto* o : originals)
        if (o->mask.height() != image.height || o->mask.width() != image.width)
            throw DimensionError("original annotation does not match image size");
    const auto segments = prompts.empty() ? std::vector<ScoredSegment>{} : backend.segment(image, prompts);
    validate_reply(segments, image, prompts, backend.capabilities().masks_per_prompt);
    std::vector<AnnotationRecord> out;
    for (auto& s : pac_filter(segments, originals, cfg, trace)) {
        AnnotationRecord r;
        r.image_id = image.id;
        r.mask = std::move(s.mask);
        r.source = AnnotationSource::pseudo;
        r.score = s.score;
        out.push_back(std::move(r));
    }
    return out;
}

/// Numbers pseudo records consecutively above the largest original id.
inline void allocate_ids(std::vector<AnnotationRecord>& pseudo, const AnnotationSet& originals) {
    std::int64_t next = originals.max_annotation_id() + 1;
    for (auto& r : pseudo) r.id = next++;
}

/// Originals unchanged and first, then pseudo records.
inline AnnotationSet merge_annotations(const AnnotationSet& originals, std::span<const AnnotationRecord> pseudo) {
    AnnotationSet out = originals;
    std::set<std::int64_t> ids;
    for (const auto& a : originals.annotations) ids.insert(a.id);
    for (const auto& p : pseudo) {
        if (!out.images.contains(p.image_id))
            throw PreconditionError("pseudo annotation for unknown image " + std::to_string(p.image_id));
        if (!ids.insert(p.id).second) throw PreconditionError("annotation id collision: " + std::to_string(p.id));
        out.annotations.push_back(p);
    }
    return out;
}

}  // namespace sos
