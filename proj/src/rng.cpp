#include "cclv/rng.hpp"

#include <cmath>
#include <numbers>

namespace cclv {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

inline double to_open_unit(std::uint32_t u) { return (static_cast<double>(u) + 0.5) * 0x1p-32; }

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

std::array<double, 4> normal_block(std::uint64_t seed, Stream stream, std::uint64_t path, std::uint32_t step) {
    const auto bits = philox4x32(
        {step, static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32), static_cast<std::uint32_t>(stream)},
        {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
    std::array<double, 4> z{};
    for (int pair = 0; pair < 2; ++pair) {
        const double r = std::sqrt(-2.0 * std::log(to_open_unit(bits[2 * pair])));
        const double angle = 2.0 * std::numbers::pi * to_open_unit(bits[2 * pair + 1]);
        z[2 * pair] = r * std::cos(angle);
        z[2 * pair + 1] = r * std::sin(angle);
    }
    return z;
}

}  // namespace cclv
