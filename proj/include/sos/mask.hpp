#pragma once

// Run-length encoded binary masks, mask geometry, mask IoU and greedy mask NMS.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sos/error.hpp"
#include "sos/grid.hpp"

namespace sos {

/// Binary instance mask stored as COCO-style uncompressed RLE.
///
/// Runs alternate background/foreground in column-major scan order (pixel (x, y)
/// has linear index x * height + y). The first run counts background and may be
/// zero; every later run is positive.
class BinaryMask {
public:
    BinaryMask() = default;

    /// Validates and adopts an RLE count list.
    BinaryMask(int height, int width, std::vector<std::uint32_t> counts)
        : height_(height), width_(width), counts_(std::move(counts)) {
        if (height_ <= 0 || width_ <= 0) throw DimensionError("mask dimensions must be positive");
        std::uint64_t total = 0;
        for (std::size_t i = 0; i < counts_.size(); ++i) {
            if (i > 0 && counts_[i] == 0) throw ParseError("RLE run " + std::to_string(i) + " is zero");
            total += counts_[i];
            if (i % 2 == 1) area_ += counts_[i];
        }
        if (total != static_cast<std::uint64_t>(height_) * static_cast<std::uint64_t>(width_))
            throw ParseError("RLE runs sum to " + std::to_string(total) + ", expected " +
                             std::to_string(static_cast<std::uint64_t>(height_) * width_));
        if (counts_.empty()) throw ParseError("RLE has no runs");
    }

    /// All-background mask.
    static BinaryMask empty(int height, int width) {
        return BinaryMask(height, width, {static_cast<std::uint32_t>(height) * static_cast<std::uint32_t>(width)});
    }

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::span<const std::uint32_t> counts() const noexcept { return counts_; }
    std::uint64_t area() const noexcept { return area_; }

    bool same_shape(const BinaryMask& o) const noexcept { return height_ == o.height_ && width_ == o.width_; }

    friend bool operator==(const BinaryMask& a, const BinaryMask& b) {
        return a.height_ == b.height_ && a.width_ == b.width_ && a.counts_ == b.counts_;
    }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<std::uint32_t> counts_;
    std::uint64_t area_ = 0;
};

/// Encodes a dense boolean grid (non-zero = foreground).
inline BinaryMask encode(const BoolGrid& dense) {
    const int h = dense.height();
    const int w = dense.width();
    if (h <= 0 || w <= 0) throw DimensionError("cannot encode a zero-sized grid");
    std::vector<std::uint32_t> counts;
    std::uint8_t current = 0;
    std::uint32_t run = 0;
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) {
            const std::uint8_t v = dense(x, y) ? 1 : 0;
            if (v != current) {
                counts.push_back(run);
                run = 0;
                current = v;
            }
            ++run;
        }
    }
    counts.push_back(run);
    return BinaryMask(h, w, std::move(counts));
}

inline BoolGrid decode(const BinaryMask& m) {
    BoolGrid out(m.height(), m.width(), 0);
    const auto h = static_cast<std::uint64_t>(m.height());
    std::uint64_t pos = 0;
    const auto counts = m.counts();
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (i % 2 == 1) {
            for (std::uint64_t p = pos; p < pos + counts[i]; ++p)
                out(static_cast<int>(p / h), static_cast<int>(p % h)) = 1;
        }
        pos += counts[i];
    }
    return out;
}

/// Builds a mask from a predicate over pixel coordinates.
template <typename Pred>
BinaryMask mask_from(int height, int width, Pred&& inside) {
    BoolGrid g(height, width, 0);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            if (inside(x, y)) g(x, y) = 1;
    return encode(g);
}

struct Centroid {
    double x = 0.0;
    double y = 0.0;
};

/// Inclusive pixel bounds.
struct BBox {
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;
    int y_max = 0;

    friend bool operator==(const BBox&, const BBox&) = default;
};

struct MaskStats {
    std::uint64_t area = 0;
    std::optional<Centroid> centroid;  // absent when area == 0
    std::optional<BBox> bbox;          // absent when area == 0

    /// Centroid rounded half away from zero, for use as a point prompt.
    std::optional<Point> prompt() const {
        if (!centroid) return std::nullopt;
        return Point{static_cast<int>(std::lround(centroid->x)), static_cast<int>(std::lround(centroid->y))};
    }
};

inline MaskStats mask_stats(const BinaryMask& m) {
    MaskStats s;
    const auto h = static_cast<std::uint64_t>(m.height());
    const auto counts = m.counts();
    std::uint64_t pos = 0;
    double sum_x = 0.0;
    double sum_y = 0.0;
    BBox box{m.width(), m.height(), -1, -1};
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const std::uint64_t start = pos;
        const std::uint64_t end = pos + counts[i];  // exclusive
        pos = end;
        if (i % 2 == 0 || start == end) continue;
        // Split the run at column boundaries.
        std::uint64_t p = start;
        while (p < end) {
            const std::uint64_t col = p / h;
            const std::uint64_t col_end = std::min(end, (col + 1) * h);
            const auto y0 = static_cast<double>(p % h);
            const auto y1 = static_cast<double>((col_end - 1) % h);
            const auto n = static_cast<double>(col_end - p);
            sum_x += static_cast<double>(col) * n;
            sum_y += (y0 + y1) * n / 2.0;
            box.x_min = std::min(box.x_min, static_cast<int>(col));
            box.x_max = std::max(box.x_max, static_cast<int>(col));
            box.y_min = std::min(box.y_min, static_cast<int>(y0));
            box.y_max = std::max(box.y_max, static_cast<int>(y1));
            p = col_end;
        }
    }
    s.area = m.area();
    if (s.area > 0) {
        const auto a = static_cast<double>(s.area);
        s.centroid = Centroid{sum_x / a, sum_y / a};
        s.bbox = box;
    }
    return s;
}

/// Number of pixels set in both masks.
inline std::uint64_t intersection_area(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_shape(b)) throw DimensionError("mask dimensions differ");
    const auto ca = a.counts();
    const auto cb = b.counts();
    std::size_t ia = 0;
    std::size_t ib = 0;
    std::uint64_t ra = ca[0];
    std::uint64_t rb = cb[0];
    bool va = false;
    bool vb = false;
    std::uint64_t inter = 0;
    while (ia < ca.size() && ib < cb.size()) {
        const std::uint64_t step = std::min(ra, rb);
        if (va && vb) inter += step;
        ra -= step;
        rb -= step;
        if (ra == 0 && ++ia < ca.size()) {
            ra = ca[ia];
            va = !va;
        }
        if (rb == 0 && ++ib < cb.size()) {
            rb = cb[ib];
            vb = !vb;
        }
    }
    return inter;
}

/// Intersection over union; 0 when both masks are empty.
inline double mask_iou(const BinaryMask& a, const BinaryMask& b) {
    const std::uint64_t inter = intersection_area(a, b);
    const std::uint64_t uni = a.area() + b.area() - inter;
    if (uni == 0) return 0.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Backend segment: mask plus confidence, tagged with the prompt that produced it.
struct ScoredSegment {
    BinaryMask mask;
    double score = 0.0;
    std::size_t prompt_index = 0;

    friend bool operator==(const ScoredSegment&, const ScoredSegment&) = default;
};

/// Indices of `segments` ordered by score descending, then area descending, then input index.
inline std::vector<std::size_t> rank_order(std::span<const ScoredSegment> segments) {
    std::vector<std::size_t> order(segments.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        const auto& a = segments[i];
        const auto& b = segments[j];
        if (a.score != b.score) return a.score > b.score;
        if (a.mask.area() != b.mask.area()) return a.mask.area() > b.mask.area();
        return i < j;
    });
    return order;
}

/// True when IoU(a, b) >= tau. Skips the run merge when the area ratio already bounds IoU below tau.
inline bool iou_at_least(const BinaryMask& a, const BinaryMask& b, double tau) {
    if (!a.same_shape(b)) throw DimensionError("mask dimensions differ");
    const auto lo = static_cast<double>(std::min(a.area(), b.area()));
    const auto hi = static_cast<double>(std::max(a.area(), b.area()));
    if (hi > 0.0 && lo / hi < tau) return false;
    return mask_iou(a, b) >= tau;
}

/// Greedy NMS; returns input indices of the kept segments in keep order.
inline std::vector<std::size_t> mask_nms_indices(std::span<const ScoredSegment> segments, double tau_nms) {
    if (!(tau_nms >= 0.0 && tau_nms <= 1.0)) throw PreconditionError("tau_nms must lie in [0, 1]");
    if (segments.empty()) return {};
    for (const auto& s : segments)
        if (!s.mask.same_shape(segments.front().mask)) throw DimensionError("segments differ in mask dimensions");
    std::vector<std::size_t> kept;
    for (const std::size_t i : rank_order(segments)) {
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
            return iou_at_least(segments[i].mask, segments[k].mask, tau_nms);
        });
        if (!suppressed) kept.push_back(i);
    }
    return kept;
}

/// Greedy mask NMS: a segment survives iff its IoU with every earlier survivor is < tau_nms.
inline std::vector<ScoredSegment> mask_nms(std::span<const ScoredSegment> segments, double tau_nms) {
    std::vector<ScoredSegment> out;
    for (const std::size_t i : mask_nms_indices(segments, tau_nms)) out.push_back(segments[i]);
    return out;
}

}  // namespace sos
