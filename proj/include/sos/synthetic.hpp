#pragma once

// Seeded blob scenes with exact ground truth, for oracle-backed pipeline runs.
//
// Each scene has a flat gray background (void), rectangular background-stuff
// regions drawn in the background color, and saturated elliptical objects.
// Some objects carry an off-center part nested under them. The first object is
// the "known" class (an original annotation); the rest are ground truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "sos/annotations.hpp"
#include "sos/coco_io.hpp"
#include "sos/image.hpp"
#include "sos/image_io.hpp"
#include "sos/mask.hpp"
#include "sos/rng.hpp"
#include "sos/segmenter.hpp"

namespace sos::synth {

struct SceneParams {
    int height = 288;
    int width = 384;
    int min_objects = 5;
    int max_objects = 8;
    int min_stuff = 3;
    int max_stuff = 6;
    double min_radius = 8.0;
    double max_radius = 24.0;
    double part_probability = 0.5;
    std::uint8_t background = 128;
};

struct Scene {
    ImageId id = 0;
    RgbImage image;
    LabelGrid labels;
    std::map<int, double> scores;
    std::map<int, int> parents;
    std::vector<BinaryMask> known;
    std::vector<BinaryMask> unknown;
};

inline constexpr int kStuffBase = 1;
inline constexpr int kObjectBase = 100;
inline constexpr int kPartBase = 200;

namespace detail {

inline Rgb hue_color(double hue) {
    const double h = hue * 6.0;
    const int sector = static_cast<int>(h) % 6;
    const double f = h - std::floor(h);
    const auto c = [](double v) { return static_cast<std::uint8_t>(std::lround(20.0 + 210.0 * v)); };
    switch (sector) {
        case 0: return {c(1), c(f), c(0)};
        case 1: return {c(1 - f), c(1), c(0)};
        case 2: return {c(0), c(1), c(f)};
        case 3: return {c(0), c(1 - f), c(1)};
        case 4: return {c(f), c(0), c(1)};
        default: return {c(1), c(0), c(1 - f)};
    }
}

struct Ellipse {
    double cx, cy, rx, ry;
    bool contains(int x, int y) const {
        const double dx = (x - cx) / rx;
        const double dy = (y - cy) / ry;
        return dx * dx + dy * dy <= 1.0;
    }
};

}  // namespace detail

inline Scene make_scene(std::uint64_t seed, ImageId id, const SceneParams& p = {}) {
    SplitMix64 rng(image_seed(seed, id));
    const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
    const auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng.next() % static_cast<std::uint64_t>(hi - lo + 1)); };

    Scene s;
    s.id = id;
    s.image = RgbImage(p.height, p.width, Rgb{p.background, p.background, p.background});
    s.labels = LabelGrid(p.height, p.width, 0);

    const int n_stuff = pick(p.min_stuff, p.max_stuff);
    for (int i = 0; i < n_stuff; ++i) {
        const int w = pick(p.width / 6, p.width / 2);
        const int h = pick(p.height / 6, p.height / 2);
        const int x0 = pick(0, p.width - w);
        const int y0 = pick(0, p.height - h);
        const int label = kStuffBase + i;
        for (int y = y0; y < y0 + h; ++y)
            for (int x = x0; x < x0 + w; ++x) s.labels(x, y) = label;
        s.scores[label] = uniform(0.9, 1.0);
    }

    std::vector<detail::Ellipse> placed;
    const int n_objects = pick(p.min_objects, p.max_objects);
    for (int i = 0, tries = 0; i < n_objects && tries < 1000; ++tries) {
        const double rx = uniform(p.min_radius, p.max_radius);
        const double ry = rx * uniform(0.7, 1.0);
        const detail::Ellipse e{uniform(rx + 2, p.width - rx - 3), uniform(ry + 2, p.height - ry - 3), rx, ry};
        const bool clash = std::any_of(placed.begin(), placed.end(), [&](const detail::Ellipse& o) {
            return std::hypot(o.cx - e.cx, o.cy - e.cy) < std::max(o.rx, o.ry) + std::max(e.rx, e.ry) + 6.0;
        });
        if (clash) continue;
        placed.push_back(e);
        const int label = kObjectBase + i;
        const double hue = rng.uniform();
        const Rgb color = detail::hue_color(hue);
        BoolGrid whole(p.height, p.width, 0);
        for (int y = 0; y < p.height; ++y)
            for (int x = 0; x < p.width; ++x)
                if (e.contains(x, y)) {
                    s.labels(x, y) = label;
                    s.image(x, y) = color;
                    whole(x, y) = 1;
                }
        s.scores[label] = uniform(0.92, 1.0);
        if (rng.uniform() < p.part_probability) {
            // Off-center so the whole object's centroid stays outside the part.
            const double angle = uniform(0.0, 2.0 * M_PI);
            const detail::Ellipse part{e.cx + 0.55 * e.rx * std::cos(angle), e.cy + 0.55 * e.ry * std::sin(angle),
                                       0.3 * e.rx, 0.3 * e.ry};
            const Rgb part_color = detail::hue_color(std::fmod(hue + 0.5, 1.0));
            const int plabel = kPartBase + i;
            for (int y = 0; y < p.height; ++y)
                for (int x = 0; x < p.width; ++x)
                    if (whole(x, y) && part.contains(x, y)) {
                        s.labels(x, y) = plabel;
                        s.image(x, y) = part_color;
                    }
            s.scores[plabel] = uniform(0.9, 1.0);
            s.parents[plabel] = label;
        }
        (i == 0 ? s.known : s.unknown).push_back(encode(whole));
        ++i;
    }
    return s;
}

/// Originals (known objects), ground truth (unknown objects), and a matching oracle backend.
struct Dataset {
    std::vector<Scene> scenes;
    AnnotationSet originals;
    AnnotationSet gt;
    std::shared_ptr<OracleDatasetBackend> backend;

    const Scene& scene(ImageId id) const {
        for (const auto& s : scenes)
            if (s.id == id) return s;
        throw PreconditionError("no scene " + std::to_string(id));
    }
};

inline std::string image_file_name(ImageId id) { return "scene_" + std::to_string(id) + ".png"; }

inline Dataset make_dataset(std::uint64_t seed, int count, const SceneParams& p = {}, int masks_per_prompt = 3) {
    Dataset d;
    d.backend = std::make_shared<OracleDatasetBackend>(masks_per_prompt);
    const nlohmann::json categories = nlohmann::json::array({{{"id", 1}, {"name", "known"}},
                                                             {{"id", 2}, {"name", "unknown"}}});
    d.originals.categories = categories;
    d.gt.categories = categories;
    std::int64_t next_id = 1;
    for (int i = 0; i < count; ++i) {
        const ImageId id = i + 1;
        Scene s = make_scene(seed, id, p);
        const ImageInfo info{image_file_name(id), p.height, p.width};
        d.originals.images[id] = info;
        d.gt.images[id] = info;
        for (const auto& m : s.known) d.originals.annotations.push_back({next_id++, id, m, AnnotationSource::original, 1.0, 1});
        for (const auto& m : s.unknown) d.gt.annotations.push_back({next_id++, id, m, AnnotationSource::original, 1.0, 2});
        d.backend->add(id, std::make_shared<OracleBackend>(s.labels, s.scores, s.parents, masks_per_prompt));
        d.scenes.push_back(std::move(s));
    }
    return d;
}

/// Writes images/, labels/, oracle.json, originals.json and gt.json under `dir`.
inline void write_dataset(const Dataset& d, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "labels");
    nlohmann::json fixture{{"masks_per_prompt", d.backend->capabilities().masks_per_prompt}, {"images", nlohmann::json::array()}};
    for (const auto& s : d.scenes) {
        io::write_png(dir / "images" / image_file_name(s.id), s.image);
        const std::string label_file = "labels/scene_" + std::to_string(s.id) + ".png";
        io::write_label_png(dir / label_file, s.labels);
        nlohmann::json scores = nlohmann::json::object();
        for (const auto& [k, v] : s.scores) scores[std::to_string(k)] = v;
        nlohmann::json parents = nlohmann::json::object();
        for (const auto& [k, v] : s.parents) parents[std::to_string(k)] = v;
        fixture["images"].push_back({{"image_id", s.id}, {"labels", label_file}, {"scores", scores}, {"parents", parents}});
    }
    std::ofstream(dir / "oracle.json") << fixture.dump(1) << '\n';
    io::save_annotations(d.originals, dir / "originals.json");
    io::save_annotations(d.gt, dir / "gt.json");
}

}  // namespace sos::synth
