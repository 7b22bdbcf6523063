#pragma once

// Object-focused prompt sampling: repeated categorical draws from a normalized
// prior, zeroing a (2N+1)^2 Chebyshev window around each draw.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "sos/error.hpp"
#include "sos/prior.hpp"
#include "sos/prompts.hpp"
#include "sos/rng.hpp"

namespace sos {

struct SamplerConfig {
    int S = 50;  // prompts per image
    int N = 20;  // pruning half-window in pixels
    std::uint64_t seed = 0;

    void validate() const {
        if (S < 1) throw PreconditionError("sampler S must be >= 1");
        if (N < 0) throw PreconditionError("sampler N must be >= 0");
    }
};

namespace detail {

inline void zero_window(RealGrid& map, Point at, int n) {
    const int x0 = std::max(at.x - n, 0);
    const int x1 = std::min(at.x + n, map.width() - 1);
    const int y0 = std::max(at.y - n, 0);
    const int y1 = std::min(at.y + n, map.height() - 1);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) map(x, y) = 0.0;
}

}  // namespace detail

/// Zeroes every value with |x - at.x| <= n and |y - at.y| <= n. Not renormalized.
inline ObjectPrior prune_window(const ObjectPrior& prior, Point at, int n) {
    if (!prior.values().contains(at)) throw PreconditionError("prune point outside the prior");
    if (n < 0) throw PreconditionError("prune half-window must be >= 0");
    RealGrid values = prior.values();
    detail::zero_window(values, at, n);
    return ObjectPrior(std::move(values));
}

/// Draws up to cfg.S prompts. Stops early once no mass remains.
/// Also accepts the uniform PMF used as the fallback for degenerate priors.
/// The stream is seeded with image_seed(cfg.seed, image_id).
inline PromptSet sample_prompts(const ObjectPrior& prior, const SamplerConfig& cfg, ImageId image_id = 0) {
    cfg.validate();
    if (!prior.is_normalized() && !prior.is_uniform_pmf())
        throw PreconditionError("sample_prompts requires a normalized prior");

    const int h = prior.height();
    const int w = prior.width();
    RealGrid work = prior.values();
    std::vector<double> row_mass(static_cast<std::size_t>(h));
    const auto refresh_row = [&](int y) {
        const auto row = work.row(y);
        row_mass[static_cast<std::size_t>(y)] = std::accumulate(row.begin(), row.end(), 0.0);
    };
    for (int y = 0; y < h; ++y) refresh_row(y);

    SplitMix64 rng(image_seed(cfg.seed, image_id));
    PromptSet out{image_id, {}};
    while (static_cast<int>(out.points.size()) < cfg.S) {
        const double mass = std::accumulate(row_mass.begin(), row_mass.end(), 0.0);
        if (!(mass > 0.0)) break;
        // Renormalizing the pruned map by its remaining mass and drawing u is the
        // same categorical draw as drawing u * mass on the unnormalized map.
        const double target = rng.uniform() * mass;

        int row = -1;
        double before = 0.0;
        for (int y = 0; y < h; ++y) {
            const double m = row_mass[static_cast<std::size_t>(y)];
            if (m <= 0.0) continue;
            row = y;
            if (target < before + m) break;
            before += m;
        }
        const auto vals = work.row(row);
        const double in_row = target - before;
        int col = -1;
        double acc = 0.0;
        for (int x = 0; x < w; ++x) {
            const double v = vals[static_cast<std::size_t>(x)];
            if (v <= 0.0) continue;
            col = x;
            acc += v;
            if (in_row < acc) break;
        }
        const Point p{col, row};
        out.points.push_back(p);
        detail::zero_window(work, p, cfg.N);
        for (int y = std::max(p.y - cfg.N, 0); y <= std::min(p.y + cfg.N, h - 1); ++y) refresh_row(y);
    }
    return out;
}

}  // namespace sos
