#pragma once

// Counter-based random numbers: every (seed, stream, path, step) tuple maps to
// a fixed block of four normals, so results do not depend on how paths are
// split across threads.

#include <array>
#include <cstdint>

namespace cclv {

/// Philox4x32-10 block cipher (Salmon et al., Random123).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

enum class Stream : std::uint32_t {
    Calibration = 1,
    Pricing = 2,
    Simulation = 3,
    Test = 99,
};

/// Four independent standard normals for one (path, step) cell.
std::array<double, 4> normal_block(std::uint64_t seed, Stream stream, std::uint64_t path, std::uint32_t step);

}  // namespace cclv
