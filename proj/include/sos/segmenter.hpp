#pragma once

// Prompt-to-segments backends.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "sos/error.hpp"
#include "sos/mask.hpp"
#include "sos/prior.hpp"
#include "sos/prompts.hpp"

namespace sos {

/// What a backend needs to know about the image it segments.
struct ImageRef {
    ImageId id = 0;
    std::string path;
    int height = 0;
    int width = 0;
};

struct BackendCapabilities {
    int masks_per_prompt = 3;
    /// False means calls must be serialized by the caller (single-flight).
    bool concurrent = true;
    bool attention = false;
};

class SegmenterBackend {
public:
    virtual ~SegmenterBackend() = default;

    virtual BackendCapabilities capabilities() const = 0;

    /// Up to masks_per_prompt segments per prompt, grouped by ascending prompt index.
    virtual std::vector<ScoredSegment> segment(const ImageRef& image, const PromptSet& prompts) = 0;

    /// Per-head attention maps at image resolution.
    virtual AttentionStack attention(const ImageRef& image) {
        throw ProtocolError("unsupported", "backend does not serve attention maps for image " +
                                               std::to_string(image.id));
    }
};

/// Rejects replies that break ScoredSegment invariants or the per-prompt bound.
inline void validate_reply(const std::vector<ScoredSegment>& reply, const ImageRef& image, const PromptSet& prompts,
                           int masks_per_prompt) {
    std::map<std::size_t, int> per_prompt;
    std::size_t last = 0;
    for (const auto& s : reply) {
        if (!std::isfinite(s.score) || s.score < 0.0 || s.score > 1.0)
            throw ProtocolError("score " + std::to_string(s.score) + " outside [0,1]");
        if (s.mask.height() != image.height || s.mask.width() != image.width)
            throw ProtocolError("segment mask is " + std::to_string(s.mask.height()) + "x" +
                                std::to_string(s.mask.width()) + ", image is " + std::to_string(image.height) +
                                "x" + std::to_string(image.width));
        if (s.prompt_index >= prompts.size()) throw ProtocolError("prompt index out of range");
        if (s.prompt_index < last) throw ProtocolError("segments not grouped by ascending prompt index");
        last = s.prompt_index;
        if (++per_prompt[s.prompt_index] > masks_per_prompt)
            throw ProtocolError("more than " + std::to_string(masks_per_prompt) + " segments for one prompt");
    }
}

inline void check_prompts_in_bounds(const ImageRef& image, const PromptSet& prompts) {
    for (const auto& p : prompts.points)
        if (p.x < 0 || p.y < 0 || p.x >= image.width || p.y >= image.height)
            throw PreconditionError("prompt (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                                    ") outside image " + std::to_string(image.id));
}

/// Deterministic stand-in for a promptable segmenter over one labeled image.
///
/// Label 0 is void. A prompt on region r returns r's mask followed by the masks of
/// r's ancestors in the nesting table (innermost first), at most masks_per_prompt
/// of them. A region's mask covers its own pixels and those of all its descendants.
class OracleBackend : public SegmenterBackend {
public:
    OracleBackend(LabelGrid labels, std::map<int, double> scores = {}, std::map<int, int> parents = {},
                  int masks_per_prompt = 3)
        : labels_(std::move(labels)), scores_(std::move(scores)), parents_(std::move(parents)), m_(masks_per_prompt) {
        if (labels_.empty()) throw DimensionError("oracle label image is empty");
        if (m_ < 1) throw PreconditionError("masks_per_prompt must be >= 1");
        for (const auto& [id, s] : scores_)
            if (!(s >= 0.0 && s <= 1.0)) throw PreconditionError("oracle score outside [0,1]");
        std::set<int> ids;
        for (const auto v : labels_.values())
            if (v != 0) ids.insert(v);
        for (const auto& [child, parent] : parents_) {
            ids.insert(parent);
            if (child == 0 || parent == 0) throw PreconditionError("void region cannot take part in nesting");
        }
        for (const int id : ids) {
            int steps = 0;
            for (int r = id; parents_.contains(r); r = parents_.at(r))
                if (++steps > static_cast<int>(parents_.size())) throw PreconditionError("nesting table has a cycle");
        }
        std::map<int, BoolGrid> dense;
        for (const int id : ids) dense.emplace(id, BoolGrid(labels_.height(), labels_.width(), 0));
        for (int y = 0; y < labels_.height(); ++y)
            for (int x = 0; x < labels_.width(); ++x)
                for (int r = labels_(x, y); r != 0; r = parent_of(r)) dense.at(r)(x, y) = 1;
        for (auto& [id, g] : dense) masks_.emplace(id, encode(g));
    }

    BackendCapabilities capabilities() const override { return {m_, true, false}; }

    std::vector<ScoredSegment> segment(const ImageRef& image, const PromptSet& prompts) override {
        if (image.height != labels_.height() || image.width != labels_.width())
            throw DimensionError("image size does not match the oracle label image");
        check_prompts_in_bounds(image, prompts);
        std::vector<ScoredSegment> out;
        for (std::size_t i = 0; i < prompts.size(); ++i) {
            const auto& p = prompts.points[i];
            int count = 0;
            for (int r = labels_(p.x, p.y); r != 0 && count < m_; ++count) {
                out.push_back({masks_.at(r), score_of(r), i});
                if (!parents_.contains(r)) break;
                r = parents_.at(r);
            }
        }
        return out;
    }

    const BinaryMask& region_mask(int id) const { return masks_.at(id); }
    const LabelGrid& labels() const noexcept { return labels_; }

private:
    int parent_of(int r) const {
        const auto it = parents_.find(r);
        return it == parents_.end() ? 0 : it->second;
    }
    double score_of(int r) const {
        const auto it = scores_.find(r);
        return it == scores_.end() ? 1.0 : it->second;
    }

    LabelGrid labels_;
    std::map<int, double> scores_;
    std::map<int, int> parents_;
    int m_;
    std::map<int, BinaryMask> masks_;
};

/// Dispatches to one oracle per image id.
class OracleDatasetBackend : public SegmenterBackend {
public:
    OracleDatasetBackend() = default;
    explicit OracleDatasetBackend(int masks_per_prompt) : m_(masks_per_prompt) {}

    void add(ImageId id, std::shared_ptr<OracleBackend> oracle) { oracles_[id] = std::move(oracle); }

    BackendCapabilities capabilities() const override { return {m_, true, false}; }

    std::vector<ScoredSegment> segment(const ImageRef& image, const PromptSet& prompts) override {
        const auto it = oracles_.find(image.id);
        if (it == oracles_.end()) throw PreconditionError("no oracle fixture for image " + std::to_string(image.id));
        return it->second->segment(image, prompts);
    }

private:
    int m_ = 3;
    std::map<ImageId, std::shared_ptr<OracleBackend>> oracles_;
};

}  // namespace sos
