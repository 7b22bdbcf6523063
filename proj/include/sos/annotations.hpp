#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sos/mask.hpp"
#include "sos/prompts.hpp"

namespace sos {

enum class AnnotationSource { original, pseudo };

inline const char* to_string(AnnotationSource s) { return s == AnnotationSource::original ? "original" : "pseudo"; }

struct AnnotationRecord {
    std::int64_t id = 0;
    ImageId image_id = 0;
    BinaryMask mask;
    AnnotationSource source = AnnotationSource::original;
    double score = 1.0;
    std::optional<std::int64_t> category_id;
    /// Keys of the source JSON object that the pipeline does not model; written back verbatim.
    nlohmann::json extra = nlohmann::json::object();

    friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

struct ImageInfo {
    std::string file_name;
    int height = 0;
    int width = 0;

    friend bool operator==(const ImageInfo&, const ImageInfo&) = default;
};

/// COCO-style instance annotations with images and optional categories.
struct AnnotationSet {
    std::map<ImageId, ImageInfo> images;
    std::vector<AnnotationRecord> annotations;
    nlohmann::json categories = nlohmann::json::array();
    /// Provenance header (pipeline version, config hash, effective config). Null when absent.
    nlohmann::json provenance;

    std::vector<const AnnotationRecord*> for_image(ImageId id) const {
        std::vector<const AnnotationRecord*> out;
        for (const auto& a : annotations)
            if (a.image_id == id) out.push_back(&a);
        return out;
    }

    std::int64_t max_annotation_id() const {
        std::int64_t m = 0;
        for (const auto& a : annotations) m = std::max(m, a.id);
        return m;
    }

    friend bool operator==(const AnnotationSet&, const AnnotationSet&) = default;
};

}  // namespace sos
