#pragma once

#include <cstdint>

namespace sos {

/// SplitMix64 (Steele, Lea, Flood 2014). Stateless mixing plus a Weyl-sequence counter,
/// so per-image streams are derived by seeding with seed ^ image_id.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next() noexcept {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    /// Uniform double in [0, 1) with 53 random mantissa bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

/// Seed of the per-image stream.
inline constexpr std::uint64_t image_seed(std::uint64_t seed, std::int64_t image_id) noexcept {
    return SplitMix64::mix(seed ^ static_cast<std::uint64_t>(image_id));
}

}  // namespace sos
