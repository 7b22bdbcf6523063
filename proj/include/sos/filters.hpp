#pragma once

// Small separable filters over real-valued grids. Borders clamp to the nearest edge pixel.

#include <algorithm>
#include <cmath>
#include <vector>

#include "sos/error.hpp"
#include "sos/grid.hpp"
#include "sos/image.hpp"

namespace sos::filters {

/// Normalized 1-D Gaussian taps for offsets -r..r with r = ceil(3 sigma). sigma == 0 gives {1}.
inline std::vector<double> gaussian_kernel(double sigma) {
    if (sigma < 0.0) throw PreconditionError("sigma must be non-negative");
    if (sigma == 0.0) return {1.0};
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        taps[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (double& t : taps) t /= sum;
    return taps;
}

/// Correlates rows then columns with an odd-length kernel centered at index size/2.
inline RealGrid separable(const RealGrid& in, const std::vector<double>& taps) {
    const int h = in.height();
    const int w = in.width();
    const int r = static_cast<int>(taps.size() / 2);
    RealGrid tmp(h, w, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -r; k <= r; ++k)
                acc += taps[static_cast<std::size_t>(k + r)] * in(std::clamp(x + k, 0, w - 1), y);
            tmp(x, y) = acc;
        }
    RealGrid out(h, w, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -r; k <= r; ++k)
                acc += taps[static_cast<std::size_t>(k + r)] * tmp(x, std::clamp(y + k, 0, h - 1));
            out(x, y) = acc;
        }
    return out;
}

inline RealGrid gaussian_blur(const RealGrid& in, double sigma) {
    if (sigma == 0.0) return in;
    return separable(in, gaussian_kernel(sigma));
}

/// Sum over a square window of side `window`; offsets span [-(window/2), (window-1)/2].
inline RealGrid box_sum(const RealGrid& in, int window) {
    if (window < 1) throw PreconditionError("window must be >= 1");
    const int h = in.height();
    const int w = in.width();
    const int lo = -(window / 2);
    const int hi = (window - 1) / 2;
    RealGrid tmp(h, w, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = lo; k <= hi; ++k) acc += in(std::clamp(x + k, 0, w - 1), y);
            tmp(x, y) = acc;
        }
    RealGrid out(h, w, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = lo; k <= hi; ++k) acc += tmp(x, std::clamp(y + k, 0, h - 1));
            out(x, y) = acc;
        }
    return out;
}

/// Sobel gradient magnitude.
inline RealGrid sobel_magnitude(const RealGrid& in) {
    const int h = in.height();
    const int w = in.width();
    RealGrid out(h, w, 0.0);
    auto at = [&](int x, int y) { return in(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1)); };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1)) -
                              (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            const double gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1)) -
                              (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            out(x, y) = std::sqrt(gx * gx + gy * gy);
        }
    return out;
}

/// Rec. 601 luma in [0, 255].
inline RealGrid luminance(const RgbImage& img) {
    RealGrid out(img.height(), img.width(), 0.0);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            const auto& p = img(x, y);
            out(x, y) = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
        }
    return out;
}

}  // namespace sos::filters
