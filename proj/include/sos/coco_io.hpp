#pragma once

// COCO-format annotation JSON (subset): images, annotations with uncompressed
// RLE or polygon segmentations, categories. Pipeline-specific keys:
//   annotations[].sos_source   "original" | "pseudo"
//   sos_provenance             pipeline version, config hash, effective config

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sos/annotations.hpp"
#include "sos/error.hpp"
#include "sos/eval.hpp"
#include "sos/mask.hpp"

namespace sos::io {

using nlohmann::json;

namespace detail {

[[noreturn]] inline void fail(const std::string& where, const std::string& what) {
    throw ParseError(where + ": " + what);
}

inline const json& member(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object()) fail(where, "expected an object");
    const auto it = obj.find(key);
    if (it == obj.end()) fail(where, std::string("missing key \"") + key + "\"");
    return *it;
}

inline std::int64_t as_int(const json& v, const std::string& where) {
    if (!v.is_number_integer()) fail(where, "expected an integer");
    return v.get<std::int64_t>();
}

inline double as_number(const json& v, const std::string& where) {
    if (!v.is_number()) fail(where, "expected a number");
    return v.get<double>();
}

/// Even-odd fill sampled at pixel centers.
inline BinaryMask rasterize_polygons(const json& polys, int height, int width, const std::string& where) {
    std::vector<std::vector<std::pair<double, double>>> rings;
    for (std::size_t i = 0; i < polys.size(); ++i) {
        const auto& poly = polys[i];
        const std::string pw = where + "[" + std::to_string(i) + "]";
        if (!poly.is_array() || poly.size() < 6 || poly.size() % 2 != 0)
            fail(pw, "polygon must be an array of >= 3 x,y pairs");
        std::vector<std::pair<double, double>> ring;
        for (std::size_t k = 0; k < poly.size(); k += 2)
            ring.emplace_back(as_number(poly[k], pw), as_number(poly[k + 1], pw));
        rings.push_back(std::move(ring));
    }
    BoolGrid g(height, width, 0);
    std::vector<double> xs;
    for (int y = 0; y < height; ++y) {
        const double cy = y + 0.5;
        xs.clear();
        for (const auto& ring : rings)
            for (std::size_t i = 0; i < ring.size(); ++i) {
                const auto [x1, y1] = ring[i];
                const auto [x2, y2] = ring[(i + 1) % ring.size()];
                if ((y1 <= cy && y2 > cy) || (y2 <= cy && y1 > cy))
                    xs.push_back(x1 + (cy - y1) * (x2 - x1) / (y2 - y1));
            }
        std::sort(xs.begin(), xs.end());
        for (std::size_t i = 0; i + 1 < xs.size(); i += 2)
            for (int x = 0; x < width; ++x) {
                const double cx = x + 0.5;
                if (cx >= xs[i] && cx < xs[i + 1]) g(x, y) = 1;
            }
    }
    return encode(g);
}

inline BinaryMask parse_segmentation(const json& seg, int height, int width, const std::string& where) {
    if (seg.is_array()) return rasterize_polygons(seg, height, width, where);
    const auto& size = member(seg, "size", where);
    if (!size.is_array() || size.size() != 2) fail(where + ".size", "expected [height, width]");
    const auto h = as_int(size[0], where + ".size[0]");
    const auto w = as_int(size[1], where + ".size[1]");
    if (h != height || w != width)
        fail(where + ".size", "RLE size [" + std::to_string(h) + "," + std::to_string(w) + "] does not match image " +
                                  std::to_string(height) + "x" + std::to_string(width));
    const auto& counts = member(seg, "counts", where);
    if (counts.is_string()) fail(where + ".counts", "compressed string RLE is not supported");
    if (!counts.is_array()) fail(where + ".counts", "expected an integer array");
    std::vector<std::uint32_t> runs;
    runs.reserve(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const auto v = as_int(counts[i], where + ".counts[" + std::to_string(i) + "]");
        if (v < 0 || v > 0xFFFFFFFFLL) fail(where + ".counts[" + std::to_string(i) + "]", "run out of range");
        runs.push_back(static_cast<std::uint32_t>(v));
    }
    try {
        return BinaryMask(height, width, std::move(runs));
    } catch (const Error& e) {
        fail(where + ".counts", e.what());
    }
}

inline json rle_json(const BinaryMask& m) {
    return json{{"size", {m.height(), m.width()}},
                {"counts", std::vector<std::uint32_t>(m.counts().begin(), m.counts().end())}};
}

inline const std::set<std::string>& modelled_annotation_keys() {
    static const std::set<std::string> keys{"id",    "image_id", "category_id", "segmentation",
                                            "score", "sos_source", "area",      "bbox"};
    return keys;
}

}  // namespace detail

inline AnnotationSet annotation_set_from_json(const json& doc) {
    using detail::as_int;
    using detail::fail;
    using detail::member;
    if (!doc.is_object()) fail("$", "expected a COCO object");
    AnnotationSet set;

    const auto& images = member(doc, "images", "$");
    if (!images.is_array()) fail("$.images", "expected an array");
    for (std::size_t i = 0; i < images.size(); ++i) {
        const std::string where = "$.images[" + std::to_string(i) + "]";
        const auto& im = images[i];
        const auto id = as_int(member(im, "id", where), where + ".id");
        ImageInfo info;
        const auto& fn = member(im, "file_name", where);
        if (!fn.is_string()) fail(where + ".file_name", "expected a string");
        info.file_name = fn.get<std::string>();
        info.height = static_cast<int>(as_int(member(im, "height", where), where + ".height"));
        info.width = static_cast<int>(as_int(member(im, "width", where), where + ".width"));
        if (info.height <= 0 || info.width <= 0) fail(where, "image dimensions must be positive");
        if (!set.images.emplace(id, std::move(info)).second) fail(where + ".id", "duplicate image id");
    }

    std::set<std::int64_t> ids;
    if (const auto it = doc.find("annotations"); it != doc.end()) {
        if (!it->is_array()) fail("$.annotations", "expected an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const std::string where = "$.annotations[" + std::to_string(i) + "]";
            const auto& a = (*it)[i];
            AnnotationRecord rec;
            rec.id = as_int(member(a, "id", where), where + ".id");
            if (!ids.insert(rec.id).second) fail(where + ".id", "duplicate annotation id");
            rec.image_id = as_int(member(a, "image_id", where), where + ".image_id");
            const auto img = set.images.find(rec.image_id);
            if (img == set.images.end())
                fail(where + ".image_id", "dangling image id " + std::to_string(rec.image_id));
            rec.mask = detail::parse_segmentation(member(a, "segmentation", where), img->second.height,
                                                  img->second.width, where + ".segmentation");
            if (const auto c = a.find("category_id"); c != a.end() && !c->is_null())
                rec.category_id = as_int(*c, where + ".category_id");
            if (const auto s = a.find("score"); s != a.end()) {
                rec.score = detail::as_number(*s, where + ".score");
                if (!(rec.score >= 0.0 && rec.score <= 1.0)) fail(where + ".score", "score outside [0,1]");
            }
            if (const auto s = a.find("sos_source"); s != a.end()) {
                if (*s == "original") rec.source = AnnotationSource::original;
                else if (*s == "pseudo") rec.source = AnnotationSource::pseudo;
                else fail(where + ".sos_source", "expected \"original\" or \"pseudo\"");
            }
            for (const auto& [k, v] : a.items())
                if (!detail::modelled_annotation_keys().contains(k)) rec.extra[k] = v;
            set.annotations.push_back(std::move(rec));
        }
    }
    if (const auto c = doc.find("categories"); c != doc.end()) {
        if (!c->is_array()) fail("$.categories", "expected an array");
        set.categories = *c;
    }
    if (const auto p = doc.find("sos_provenance"); p != doc.end()) set.provenance = *p;
    return set;
}

inline json annotation_set_to_json(const AnnotationSet& set) {
    json images = json::array();
    for (const auto& [id, info] : set.images)
        images.push_back({{"id", id}, {"file_name", info.file_name}, {"height", info.height}, {"width", info.width}});
    json anns = json::array();
    for (const auto& a : set.annotations) {
        json j = a.extra.is_object() ? a.extra : json::object();
        j["id"] = a.id;
        j["image_id"] = a.image_id;
        if (a.category_id) j["category_id"] = *a.category_id;
        j["segmentation"] = detail::rle_json(a.mask);
        const auto st = mask_stats(a.mask);
        j["area"] = st.area;
        if (st.bbox)
            j["bbox"] = {st.bbox->x_min, st.bbox->y_min, st.bbox->x_max - st.bbox->x_min + 1,
                         st.bbox->y_max - st.bbox->y_min + 1};
        else
            j["bbox"] = {0, 0, 0, 0};
        j["score"] = a.score;
        j["sos_source"] = to_string(a.source);
        anns.push_back(std::move(j));
    }
    json doc{{"images", std::move(images)}, {"annotations", std::move(anns)}, {"categories", set.categories}};
    if (!set.provenance.is_null()) doc["sos_provenance"] = set.provenance;
    return doc;
}

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

inline AnnotationSet load_annotations(const std::filesystem::path& path) {
    const json doc = read_json_file(path);
    try {
        return annotation_set_from_json(doc);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

/// Serialized form: compact JSON, keys sorted, trailing newline. Byte-stable for equal sets.
inline std::string dump_annotations(const AnnotationSet& set) { return annotation_set_to_json(set).dump() + "\n"; }

inline void save_annotations(const AnnotationSet& set, const std::filesystem::path& path) {
    const std::string text = dump_annotations(set);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write " + path.string());
    out << text;
    if (!out) throw ParseError("write failed: " + path.string());
}

/// Drops annotations whose category is not listed. Images are kept even when emptied.
inline AnnotationSet filter_classes(const AnnotationSet& set, std::span<const std::int64_t> keep) {
    std::set<std::int64_t> known;
    for (const auto& c : set.categories)
        if (c.is_object() && c.contains("id") && c["id"].is_number_integer()) known.insert(c["id"].get<std::int64_t>());
    if (known.empty()) throw PreconditionError("annotation set has no categories");
    for (const auto id : keep)
        if (!known.contains(id)) throw PreconditionError("unknown category id " + std::to_string(id));
    const std::set<std::int64_t> keep_set(keep.begin(), keep.end());
    AnnotationSet out = set;
    out.annotations.clear();
    for (const auto& a : set.annotations)
        if (a.category_id && keep_set.contains(*a.category_id)) out.annotations.push_back(a);
    return out;
}

/// Detections in COCO results form: an array of {image_id, segmentation, score}, or an
/// annotation file whose annotations carry scores. Image sizes come from `gt`.
inline std::vector<Detection> detections_from_json(const json& doc, const AnnotationSet& gt) {
    const json* list = &doc;
    std::string base = "$";
    if (doc.is_object()) {
        list = &detail::member(doc, "annotations", "$");
        base = "$.annotations";
    }
    if (!list->is_array()) detail::fail(base, "expected an array of detections");
    std::vector<Detection> out;
    for (std::size_t i = 0; i < list->size(); ++i) {
        const std::string where = base + "[" + std::to_string(i) + "]";
        const auto& d = (*list)[i];
        Detection det;
        det.image_id = detail::as_int(detail::member(d, "image_id", where), where + ".image_id");
        const auto img = gt.images.find(det.image_id);
        if (img == gt.images.end()) detail::fail(where + ".image_id", "image not in ground truth");
        det.mask = detail::parse_segmentation(detail::member(d, "segmentation", where), img->second.height,
                                              img->second.width, where + ".segmentation");
        det.score = detail::as_number(detail::member(d, "score", where), where + ".score");
        if (!(det.score >= 0.0 && det.score <= 1.0)) detail::fail(where + ".score", "score outside [0,1]");
        out.push_back(std::move(det));
    }
    return out;
}

inline std::vector<Detection> load_detections(const std::filesystem::path& path, const AnnotationSet& gt) {
    const json doc = read_json_file(path);
    try {
        return detections_from_json(doc, gt);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

}  // namespace sos::io
