#ifndef VGM_TSDF_MORTON_HPP
#define VGM_TSDF_MORTON_HPP

#include <cstdint>
#include <sstream>
#include <stdexcept>

#include <Eigen/Core>

namespace vgm {

using MortonCode = std::uint64_t;

namespace morton {

inline constexpr int bits_per_axis = 21;
inline constexpr std::uint32_t max_index = (1u << bits_per_axis) - 1u;

/// Spreads the low 21 bits of v so that bit i lands on bit 3i.
constexpr std::uint64_t spread_bits(std::uint64_t v)
{
    v &= 0x1fffffull;
    v = (v | v << 32) & 0x1f00000000ffffull;
    v = (v | v << 16) & 0x1f0000ff0000ffull;
    v = (v | v << 8) & 0x100f00f00f00f00full;
    v = (v | v << 4) & 0x10c30c30c30c30c3ull;
    v = (v | v << 2) & 0x1249249249249249ull;
    return v;
}

constexpr std::uint32_t compact_bits(std::uint64_t v)
{
    v &= 0x1249249249249249ull;
    v = (v ^ (v >> 2)) & 0x10c30c30c30c30c3ull;
    v = (v ^ (v >> 4)) & 0x100f00f00f00f00full;
    v = (v ^ (v >> 8)) & 0x1f0000ff0000ffull;
    v = (v ^ (v >> 16)) & 0x1f00000000ffffull;
    v = (v ^ (v >> 32)) & 0x1fffffull;
    return static_cast<std::uint32_t>(v);
}

/// Interleaves without range checks; x occupies the lowest interleave position.
constexpr MortonCode encode_unchecked(std::uint32_t x, std::uint32_t y, std::uint32_t z)
{
    return spread_bits(x) | (spread_bits(y) << 1) | (spread_bits(z) << 2);
}

inline bool in_range(std::int64_t i)
{
    return i >= 0 && i <= static_cast<std::int64_t>(max_index);
}

inline MortonCode encode(std::int64_t x, std::int64_t y, std::int64_t z)
{
    if (!in_range(x) || !in_range(y) || !in_range(z)) {
        std::ostringstream oss;
        oss << "morton: index (" << x << ", " << y << ", " << z << ") outside [0, 2^21)";
        throw std::out_of_range(oss.str());
    }
    return encode_unchecked(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y), static_cast<std::uint32_t>(z));
}

inline MortonCode encode(const Eigen::Vector3i& idx)
{
    return encode(idx.x(), idx.y(), idx.z());
}

inline Eigen::Vector3i decode(MortonCode code)
{
    if (code >> (3 * bits_per_axis)) {
        throw std::out_of_range("morton: code uses more than 63 bits");
    }
    return Eigen::Vector3i(static_cast<int>(compact_bits(code)), static_cast<int>(compact_bits(code >> 1)),
                           static_cast<int>(compact_bits(code >> 2)));
}

} // namespace morton
} // namespace vgm

#endif // VGM_TSDF_MORTON_HPP
