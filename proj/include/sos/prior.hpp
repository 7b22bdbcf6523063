#pragma once

// Object priors: dense per-pixel object likelihood maps, and the prompt-direct
// priors (regular grid, ground-truth centroids) that skip sampling.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sos/annotations.hpp"
#include "sos/error.hpp"
#include "sos/filters.hpp"
#include "sos/grid.hpp"
#include "sos/image.hpp"
#include "sos/prompts.hpp"

namespace sos {

/// Non-negative map with one value per pixel.
class ObjectPrior {
public:
    ObjectPrior() = default;
    explicit ObjectPrior(RealGrid values) : values_(std::move(values)) {
        for (const double v : values_.values())
            if (!std::isfinite(v) || v < 0.0) throw PreconditionError("object prior values must be finite and >= 0");
    }

    int height() const noexcept { return values_.height(); }
    int width() const noexcept { return values_.width(); }
    const RealGrid& values() const noexcept { return values_; }
    double operator()(int x, int y) const noexcept { return values_(x, y); }

    /// min == 0 and sum == 1 within `tol`.
    bool is_normalized(double tol = 1e-9) const {
        if (values_.empty()) return false;
        double sum = 0.0;
        double lo = std::numeric_limits<double>::infinity();
        for (const double v : values_.values()) {
            sum += v;
            lo = std::min(lo, v);
        }
        return lo == 0.0 && std::abs(sum - 1.0) <= tol;
    }

    /// Every value equal and summing to 1 within `tol`.
    bool is_uniform_pmf(double tol = 1e-9) const {
        if (values_.empty()) return false;
        const double first = values_.values().front();
        double sum = 0.0;
        for (const double v : values_.values()) {
            if (v != first) return false;
            sum += v;
        }
        return std::abs(sum - 1.0) <= tol;
    }

    friend bool operator==(const ObjectPrior&, const ObjectPrior&) = default;

private:
    RealGrid values_;
};

/// Equal mass on every pixel; the sampling fallback when a prior is degenerate.
inline ObjectPrior uniform_prior(int height, int width) {
    RealGrid g(height, width, 0.0);
    if (g.empty()) throw DimensionError("uniform prior needs a non-empty frame");
    const double v = 1.0 / static_cast<double>(g.size());
    for (double& x : g.values()) x = v;
    return ObjectPrior(std::move(g));
}

/// Shifts the minimum to 0 and rescales so the map sums to 1.
/// Accepts any finite map; throws DegeneratePriorError when the map is constant.
inline ObjectPrior normalize_prior(const RealGrid& raw) {
    if (raw.empty()) throw DimensionError("cannot normalize an empty map");
    const auto vals = raw.values();
    for (const double v : vals)
        if (!std::isfinite(v)) throw PreconditionError("prior map contains a non-finite value");
    const double lo = *std::min_element(vals.begin(), vals.end());
    double sum = 0.0;
    for (const double v : vals) sum += v - lo;
    if (!(sum > 0.0)) throw DegeneratePriorError("prior map is constant; nothing to normalize");
    RealGrid out(raw.height(), raw.width(), 0.0);
    auto dst = out.values();
    for (std::size_t i = 0; i < vals.size(); ++i) dst[i] = (vals[i] - lo) / sum;
    return ObjectPrior(std::move(out));
}

inline ObjectPrior normalize_prior(const ObjectPrior& raw) { return normalize_prior(raw.values()); }

/// Per-head attention maps, already upsampled to image resolution.
struct AttentionStack {
    std::vector<RealGrid> head_maps;

    void validate() const {
        if (head_maps.empty()) throw PreconditionError("attention stack needs at least one head");
        for (const auto& m : head_maps) {
            if (m.height() != head_maps.front().height() || m.width() != head_maps.front().width())
                throw DimensionError("attention heads differ in size");
            for (const double v : m.values())
                if (!std::isfinite(v) || v < 0.0) throw PreconditionError("attention values must be finite and >= 0");
        }
    }
};

/// Elementwise max over heads, then normalize_prior.
inline ObjectPrior aggregate_attention(const AttentionStack& stack) {
    stack.validate();
    RealGrid agg = stack.head_maps.front();
    auto dst = agg.values();
    for (std::size_t h = 1; h < stack.head_maps.size(); ++h) {
        const auto src = stack.head_maps[h].values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::max(dst[i], src[i]);
    }
    return normalize_prior(agg);
}

/// n x n prompts at the cell centers of an even partition, row-major.
inline PromptSet grid_prompts(int height, int width, int n, ImageId image_id = 0) {
    if (n < 1) throw PreconditionError("grid side must be >= 1");
    if (n > std::min(height, width))
        throw PreconditionError("grid side " + std::to_string(n) + " exceeds image extent");
    PromptSet out{image_id, {}};
    out.points.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    const auto center = [n](int extent, int i) {
        return static_cast<int>((static_cast<long long>(2 * i + 1) * extent) / (2LL * n));
    };
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) out.points.push_back({center(width, i), center(height, j)});
    return out;
}

/// Default smoothing for dist_prior: 2% of the image diagonal.
inline double default_dist_sigma(int height, int width) {
    return 0.02 * std::hypot(static_cast<double>(height), static_cast<double>(width));
}

/// Histogram of normalized centroids at image resolution, Gaussian-smoothed, normalized.
inline ObjectPrior dist_prior(std::span<const Centroid> centroids, int height, int width, double sigma) {
    if (centroids.empty()) throw PreconditionError("dist prior needs at least one centroid");
    if (height <= 0 || width <= 0) throw DimensionError("dist prior target must be non-empty");
    RealGrid hist(height, width, 0.0);
    for (const auto& c : centroids) {
        if (!(c.x >= 0.0 && c.x <= 1.0 && c.y >= 0.0 && c.y <= 1.0))
            throw PreconditionError("normalized centroid outside [0,1]^2");
        const int x = std::min(static_cast<int>(c.x * width), width - 1);
        const int y = std::min(static_cast<int>(c.y * height), height - 1);
        hist(x, y) += 1.0;
    }
    return normalize_prior(filters::gaussian_blur(hist, sigma));
}

/// Edge density: Sobel magnitude of luminance, box-summed over `window`, normalized.
inline ObjectPrior contour_density_prior(const RgbImage& image, int window) {
    if (image.empty()) throw DimensionError("empty image");
    return normalize_prior(filters::box_sum(filters::sobel_magnitude(filters::luminance(image)), window));
}

/// Contrast at or below this fraction of the peak is zeroed.
inline constexpr double kSaliencyFloor = 1e-9;

struct SaliencyParams {
    double center_sigma = 2.0;
    double surround_sigma = 10.0;
};

/// Opponent channels: intensity, red-green, blue-yellow.
inline std::array<RealGrid, 3> opponent_channels(const RgbImage& image) {
    std::array<RealGrid, 3> ch{RealGrid(image.height(), image.width(), 0.0),
                               RealGrid(image.height(), image.width(), 0.0),
                               RealGrid(image.height(), image.width(), 0.0)};
    for (int y = 0; y < image.height(); ++y)
        for (int x = 0; x < image.width(); ++x) {
            const double r = image(x, y)[0];
            const double g = image(x, y)[1];
            const double b = image(x, y)[2];
            ch[0](x, y) = (r + g + b) / 3.0;
            ch[1](x, y) = r - g;
            ch[2](x, y) = b - (r + g) / 2.0;
        }
    return ch;
}

/// Two-scale center-surround color contrast, summed over opponent channels, normalized.
inline ObjectPrior saliency_prior(const RgbImage& image, SaliencyParams p = {}) {
    if (image.empty()) throw DimensionError("empty image");
    if (!(p.center_sigma > 0.0 && p.surround_sigma > p.center_sigma))
        throw PreconditionError("saliency needs surround sigma > center sigma > 0");
    RealGrid contrast(image.height(), image.width(), 0.0);
    for (const auto& ch : opponent_channels(image)) {
        const RealGrid c = filters::gaussian_blur(ch, p.center_sigma);
        const RealGrid s = filters::gaussian_blur(ch, p.surround_sigma);
        auto dst = contrast.values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += std::abs(c.values()[i] - s.values()[i]);
    }
    // Blurring a flat area leaves rounding residue; treat it as no contrast.
    const auto vals = contrast.values();
    const double floor = kSaliencyFloor * *std::max_element(vals.begin(), vals.end());
    for (double& v : vals)
        if (v <= floor) v = 0.0;
    return normalize_prior(contrast);
}

/// Rounded centroid of each annotation mask on the image (empty masks skipped).
inline PromptSet gt_centroid_prompts(const AnnotationSet& annotations, ImageId image_id) {
    if (!annotations.images.contains(image_id))
        throw PreconditionError("image id " + std::to_string(image_id) + " not in annotation set");
    PromptSet out{image_id, {}};
    for (const auto* a : annotations.for_image(image_id))
        if (const auto p = mask_stats(a->mask).prompt()) out.points.push_back(*p);
    return out;
}

}  // namespace sos
