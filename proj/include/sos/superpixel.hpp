#pragma once

// Felzenszwalb-Huttenlocher graph-based segmentation.
//
// Pipeline: Gaussian pre-smoothing of each color channel, an 8-connected pixel
// graph weighted by Euclidean RGB distance, Kruskal-order merging while the edge
// weight is <= Int(C) + k/|C| for both components, then a pass that absorbs
// components smaller than min_size. Edges are ordered by (weight, lower pixel
// index, higher pixel index) so the partition is unique even under weight ties.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "sos/error.hpp"
#include "sos/image.hpp"
#include "sos/mask.hpp"
#include "sos/prompts.hpp"

namespace sos {

struct SuperpixelParams {
    double k = 300.0;
    double sigma = 0.8;
    int min_size = 64;

    void validate() const {
        if (!(k > 0.0)) throw PreconditionError("superpixel scale k must be > 0");
        if (!(sigma >= 0.0)) throw PreconditionError("superpixel sigma must be >= 0");
        if (min_size < 1) throw PreconditionError("superpixel min_size must be >= 1");
    }
};

namespace detail {

// Smoothing kernel of the reference FH code: half-width ceil(4 sigma), taps normalized
// so the symmetric sum is 1.
inline std::vector<double> fh_half_kernel(double sigma) {
    const int len = static_cast<int>(std::ceil(sigma * 4.0)) + 1;
    std::vector<double> mask(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) mask[static_cast<std::size_t>(i)] = std::exp(-0.5 * (i / sigma) * (i / sigma));
    double sum = 0.0;
    for (const double m : mask) sum += std::abs(m);
    sum = 2.0 * sum - std::abs(mask[0]);
    for (double& m : mask) m /= sum;
    return mask;
}

inline RealGrid fh_smooth(const RealGrid& src, const std::vector<double>& mask) {
    const int h = src.height();
    const int w = src.width();
    const int len = static_cast<int>(mask.size());
    RealGrid tmp(h, w, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double sum = mask[0] * src(x, y);
            for (int i = 1; i < len; ++i)
                sum += mask[static_cast<std::size_t>(i)] * (src(std::max(x - i, 0), y) + src(std::min(x + i, w - 1), y));
            tmp(x, y) = sum;
        }
    RealGrid out(h, w, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double sum = mask[0] * tmp(x, y);
            for (int i = 1; i < len; ++i)
                sum += mask[static_cast<std::size_t>(i)] * (tmp(x, std::max(y - i, 0)) + tmp(x, std::min(y + i, h - 1)));
            out(x, y) = sum;
        }
    return out;
}

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0), size_(n, 1) {
        std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    }
    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }
    std::size_t join(std::size_t a, std::size_t b) {
        if (rank_[a] < rank_[b]) std::swap(a, b);
        parent_[b] = a;
        size_[a] += size_[b];
        if (rank_[a] == rank_[b]) ++rank_[a];
        return a;
    }
    std::size_t size(std::size_t root) const { return size_[root]; }

private:
    std::vector<std::size_t> parent_;
    std::vector<std::uint8_t> rank_;
    std::vector<std::size_t> size_;
};

struct Edge {
    double w;
    std::uint32_t a;  // lower pixel index
    std::uint32_t b;  // higher pixel index
};

}  // namespace detail

/// Per-pixel segment labels 0..n-1, numbered in row-major order of each segment's first pixel.
inline LabelGrid superpixel_labels(const RgbImage& image, const SuperpixelParams& p = {}) {
    p.validate();
    const int h = image.height();
    const int w = image.width();
    if (h <= 0 || w <= 0) throw DimensionError("empty image");

    std::array<RealGrid, 3> ch{RealGrid(h, w, 0.0), RealGrid(h, w, 0.0), RealGrid(h, w, 0.0)};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) ch[static_cast<std::size_t>(c)](x, y) = image(x, y)[static_cast<std::size_t>(c)];
    if (p.sigma > 0.0) {
        const auto mask = detail::fh_half_kernel(p.sigma);
        for (auto& c : ch) c = detail::fh_smooth(c, mask);
    }

    const auto idx = [w](int x, int y) { return static_cast<std::uint32_t>(y * w + x); };
    const auto diff = [&](int x1, int y1, int x2, int y2) {
        double s = 0.0;
        for (const auto& c : ch) {
            const double d = c(x1, y1) - c(x2, y2);
            s += d * d;
        }
        return std::sqrt(s);
    };
    std::vector<detail::Edge> edges;
    edges.reserve(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * 4);
    const auto add = [&](int x1, int y1, int x2, int y2) {
        const auto i = idx(x1, y1);
        const auto j = idx(x2, y2);
        edges.push_back({diff(x1, y1, x2, y2), std::min(i, j), std::max(i, j)});
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (x < w - 1) add(x, y, x + 1, y);
            if (y < h - 1) add(x, y, x, y + 1);
            if (x < w - 1 && y < h - 1) add(x, y, x + 1, y + 1);
            if (x < w - 1 && y > 0) add(x, y, x + 1, y - 1);
        }
    std::sort(edges.begin(), edges.end(), [](const detail::Edge& e1, const detail::Edge& e2) {
        if (e1.w != e2.w) return e1.w < e2.w;
        if (e1.a != e2.a) return e1.a < e2.a;
        return e1.b < e2.b;
    });

    const std::size_t n = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    detail::DisjointSets sets(n);
    std::vector<double> threshold(n, p.k);
    for (const auto& e : edges) {
        std::size_t a = sets.find(e.a);
        std::size_t b = sets.find(e.b);
        if (a != b && e.w <= threshold[a] && e.w <= threshold[b]) {
            a = sets.join(a, b);
            threshold[a] = e.w + p.k / static_cast<double>(sets.size(a));
        }
    }
    for (const auto& e : edges) {
        const std::size_t a = sets.find(e.a);
        const std::size_t b = sets.find(e.b);
        if (a != b && (sets.size(a) < static_cast<std::size_t>(p.min_size) ||
                       sets.size(b) < static_cast<std::size_t>(p.min_size)))
            sets.join(a, b);
    }

    LabelGrid labels(h, w, -1);
    std::vector<std::int32_t> root_label(n, -1);
    std::int32_t next = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t r = sets.find(idx(x, y));
            if (root_label[r] < 0) root_label[r] = next++;
            labels(x, y) = root_label[r];
        }
    return labels;
}

/// Masks of the label grid's segments, indexed by label.
inline std::vector<BinaryMask> label_masks(const LabelGrid& labels) {
    std::int32_t count = 0;
    for (const auto v : labels.values()) count = std::max(count, v + 1);
    std::vector<BoolGrid> grids(static_cast<std::size_t>(count), BoolGrid(labels.height(), labels.width(), 0));
    for (int y = 0; y < labels.height(); ++y)
        for (int x = 0; x < labels.width(); ++x)
            if (labels(x, y) >= 0) grids[static_cast<std::size_t>(labels(x, y))](x, y) = 1;
    std::vector<BinaryMask> out;
    out.reserve(grids.size());
    for (const auto& g : grids) out.push_back(encode(g));
    return out;
}

/// Superpixel masks in discovery order; they partition the image.
inline std::vector<BinaryMask> superpixel_segment(const RgbImage& image, const SuperpixelParams& p = {}) {
    return label_masks(superpixel_labels(image, p));
}

/// Rounded centroid of every superpixel, in discovery order.
inline PromptSet superpixel_prompts(const RgbImage& image, const SuperpixelParams& p = {}, ImageId image_id = 0) {
    PromptSet out{image_id, {}};
    for (const auto& m : superpixel_segment(image, p))
        if (const auto pt = mask_stats(m).prompt()) out.points.push_back(*pt);
    return out;
}

}  // namespace sos
