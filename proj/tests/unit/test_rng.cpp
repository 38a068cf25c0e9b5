#include "cclv/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace cclv {
namespace {

using Block = std::array<std::uint32_t, 4>;

TEST(Philox, KnownAnswerZero) {
    EXPECT_EQ(philox4x32({0, 0, 0, 0}, {0, 0}), (Block{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
}

TEST(Philox, KnownAnswerAllOnes) {
    EXPECT_EQ(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}),
              (Block{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
}

TEST(Philox, KnownAnswerPiDigits) {
    EXPECT_EQ(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}),
              (Block{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(NormalBlock, Deterministic) {
    EXPECT_EQ(normal_block(7, Stream::Pricing, 123, 45), normal_block(7, Stream::Pricing, 123, 45));
    EXPECT_NE(normal_block(7, Stream::Pricing, 123, 45), normal_block(7, Stream::Calibration, 123, 45));
    EXPECT_NE(normal_block(7, Stream::Pricing, 123, 45), normal_block(8, Stream::Pricing, 123, 45));
    EXPECT_NE(normal_block(7, Stream::Pricing, 123, 45), normal_block(7, Stream::Pricing, 124, 45));
    EXPECT_NE(normal_block(7, Stream::Pricing, 123, 45), normal_block(7, Stream::Pricing, 123, 46));
    // Path indices above 2^32 still map to distinct counters.
    EXPECT_NE(normal_block(7, Stream::Pricing, 1, 0), normal_block(7, Stream::Pricing, (1ull << 32) + 1, 0));
}

TEST(NormalBlock, Moments) {
    const int n = 200000;
    double s[4] = {}, s2[4] = {}, s4[4] = {}, cross = 0;
    for (int p = 0; p < n; ++p) {
        const auto z = normal_block(1, Stream::Test, p, 3);
        for (int k = 0; k < 4; ++k) {
            ASSERT_TRUE(std::isfinite(z[k]));
            s[k] += z[k];
            s2[k] += z[k] * z[k];
            s4[k] += z[k] * z[k] * z[k] * z[k];
        }
        cross += z[0] * z[1];
    }
    const double tol = 4.0 / std::sqrt(n);
    for (int k = 0; k < 4; ++k) {
        EXPECT_NEAR(s[k] / n, 0.0, tol);
        EXPECT_NEAR(s2[k] / n, 1.0, tol * std::sqrt(2.0));
        EXPECT_NEAR(s4[k] / n, 3.0, tol * std::sqrt(96.0));
    }
    EXPECT_NEAR(cross / n, 0.0, tol);
}

TEST(NormalBlock, TailFractionMatchesGaussian) {
    const int n = 400000;
    int beyond = 0;
    for (int p = 0; p < n / 4; ++p) {
        for (double z : normal_block(2, Stream::Test, p, 0)) beyond += std::abs(z) > 3.0;
    }
    // P(|Z| > 3) = 0.0026998
    EXPECT_NEAR(static_cast<double>(beyond) / n, 0.0026998, 4.0 * std::sqrt(0.0027 / n));
}

}  // namespace
}  // namespace cclv
