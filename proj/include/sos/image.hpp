#pragma once

#include <array>
#include <cstdint>

#include "sos/grid.hpp"

namespace sos {

using Rgb = std::array<std::uint8_t, 3>;

/// 8-bit RGB raster, row-major.
using RgbImage = Grid<Rgb>;

}  // namespace sos
