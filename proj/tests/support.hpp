#pragma once

// Test helpers: small mask builders and seeded random generators.

#include <cstdint>
#include <initializer_list>
#include <utility>
#include <vector>

#include "sos/annotations.hpp"
#include "sos/grid.hpp"
#include "sos/image.hpp"
#include "sos/mask.hpp"
#include "sos/rng.hpp"

namespace testing_support {

using sos::BinaryMask;
using sos::BoolGrid;

inline BinaryMask mask_of(int h, int w, std::initializer_list<std::pair<int, int>> xy) {
    BoolGrid g(h, w, 0);
    for (const auto& [x, y] : xy) g(x, y) = 1;
    return sos::encode(g);
}

inline BinaryMask rect(int h, int w, int x0, int y0, int x1, int y1) {
    return sos::mask_from(h, w, [&](int x, int y) { return x >= x0 && x < x1 && y >= y0 && y < y1; });
}

inline sos::AnnotationRecord record(std::int64_t id, sos::ImageId image, BinaryMask mask,
                                   sos::AnnotationSource source = sos::AnnotationSource::original, double score = 1.0) {
    sos::AnnotationRecord r;
    r.id = id;
    r.image_id = image;
    r.mask = std::move(mask);
    r.source = source;
    r.score = score;
    return r;
}

/// Hand-rolled generator over SplitMix64.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    int uniform_int(int lo, int hi) { return lo + static_cast<int>(rng_.next() % static_cast<std::uint64_t>(hi - lo + 1)); }
    double uniform(double lo = 0.0, double hi = 1.0) { return lo + (hi - lo) * rng_.uniform(); }
    bool coin(double p = 0.5) { return rng_.uniform() < p; }

    BoolGrid grid(int h, int w, double density) {
        BoolGrid g(h, w, 0);
        for (auto& v : g.values()) v = coin(density) ? 1 : 0;
        return g;
    }
    BinaryMask mask(int h, int w, double density) { return sos::encode(grid(h, w, density)); }
    BinaryMask rect_mask(int h, int w) {
        const int x0 = uniform_int(0, w - 1);
        const int y0 = uniform_int(0, h - 1);
        return rect(h, w, x0, y0, uniform_int(x0 + 1, w), uniform_int(y0 + 1, h));
    }
    sos::RgbImage noise_image(int h, int w) {
        sos::RgbImage img(h, w);
        for (auto& px : img.values())
            for (auto& c : px) c = static_cast<std::uint8_t>(uniform_int(0, 255));
        return img;
    }

private:
    sos::SplitMix64 rng_;
};

}  // namespace testing_support
