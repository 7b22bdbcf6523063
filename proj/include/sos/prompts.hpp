#pragma once

#include <cstdint>
#include <vector>

#include "sos/grid.hpp"

namespace sos {

using ImageId = std::int64_t;

/// Ordered point prompts for one image.
struct PromptSet {
    ImageId image_id = 0;
    std::vector<Point> points;

    std::size_t size() const noexcept { return points.size(); }
    bool empty() const noexcept { return points.empty(); }

    friend bool operator==(const PromptSet&, const PromptSet&) = default;
};

}  // namespace sos
