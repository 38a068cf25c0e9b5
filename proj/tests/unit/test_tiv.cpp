#include "cclv/errors.hpp"
#include "cclv/synthetic.hpp"
#include "cclv/tiv.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace cclv {
namespace {

VolSlice flat_slice(double vol, double T) {
    VolSlice s;
    s.expiry = T;
    s.quotes = {{-0.5, vol}, {-0.2, vol}, {0.0, vol}, {0.2, vol}, {0.5, vol}};
    return s;
}

VolSlice smile_slice(double atm, double T) {
    VolSlice s;
    s.expiry = T;
    for (int i = 0; i <= 10; ++i) {
        const double y = -0.7 + 0.12 * i;
        s.quotes.push_back({y, atm * (1.0 - 0.25 * y + 0.35 * y * y)});
    }
    return s;
}

TEST(TerminalTiv, FlatSlice) {
    const auto w = terminal_tiv(flat_slice(0.2, 1.0));
    for (double y : {-1.0, -0.3, 0.0, 0.4, 2.0}) {
        const auto p = w.eval(y);
        EXPECT_NEAR(p.value, 0.04, 1e-15);
        EXPECT_NEAR(p.d2, 0.0, 1e-14);
    }
}

TEST(TerminalTiv, InterpolatesQuotes) {
    VolSlice s;
    s.expiry = 1.0;
    s.quotes = {{-0.2, 0.25}, {0.0, 0.20}, {0.2, 0.22}};
    const auto w = terminal_tiv(s);
    EXPECT_NEAR(w(-0.2), 0.0625, 1e-15);
    EXPECT_NEAR(w(0.0), 0.04, 1e-15);
    EXPECT_NEAR(w(0.2), 0.0484, 1e-15);
}

TEST(TerminalTiv, ExactAtElevenSmileQuotes) {
    const auto s = smile_slice(0.4, 0.75);
    const auto w = terminal_tiv(s);
    for (const auto& q : s.quotes) EXPECT_NEAR(w(q.log_moneyness), q.implied_vol * q.implied_vol * 0.75, 1e-15);
}

TEST(TerminalTiv, ExtrapolationSlopesBounded) {
    VolSlice s;
    s.expiry = 2.0;
    s.quotes = {{-0.1, 1.5}, {0.0, 0.5}, {0.1, 1.5}};
    const auto w = terminal_tiv(s);
    EXPECT_GE(w.left_slope(), -2.0);
    EXPECT_LE(w.left_slope(), 0.0);
    EXPECT_LE(w.right_slope(), 2.0);
    EXPECT_GE(w.right_slope(), 0.0);
}

TEST(Accumulate, Linear) {
    const auto tiv = TivSurface::linear(0, 1.0, terminal_tiv(flat_slice(0.2, 1.0)));
    const auto p = tiv.accumulate(0.1, 0.5);
    EXPECT_NEAR(p.w, 0.02, 1e-15);
    EXPECT_NEAR(p.dwdt, 0.04, 1e-15);
}

TEST(Accumulate, Quadratic) {
    const auto tiv = TivSurface::quadratic(0, 1.0, terminal_tiv(flat_slice(0.2, 1.0)));
    const auto p = tiv.accumulate(0.1, 0.5);
    EXPECT_NEAR(p.w, 0.01, 1e-15);
    EXPECT_NEAR(p.dwdt, 0.04, 1e-15);
}

TEST(Accumulate, TtmIvHandExample) {
    std::vector<CubicSpline> terminals{terminal_tiv(flat_slice(0.2, 1.0)), terminal_tiv(flat_slice(std::sqrt(0.05), 2.0))};
    const auto tiv = TivSurface::ttm_iv(1, {1.0, 2.0}, terminals);
    EXPECT_NEAR(tiv.value(0.0, 1.0), 0.06, 1e-15);
    EXPECT_NEAR(tiv.value(0.0, 1.5), 0.08, 1e-15);
    EXPECT_NEAR(tiv.value(0.0, 2.0), 0.10, 1e-15);
    EXPECT_NEAR(tiv.value(0.0, 0.5), 0.03, 1e-15);
    // Right derivative at the breakpoint t = T_2 - T_1.
    EXPECT_NEAR(tiv.accumulate(0.0, 1.0).dwdt, 0.04, 1e-14);
    EXPECT_NEAR(tiv.accumulate(0.0, 0.999).dwdt, 0.06, 1e-14);
    ASSERT_EQ(tiv.kinks().size(), 1u);
    EXPECT_DOUBLE_EQ(tiv.kinks()[0], 1.0);
}

TEST(Accumulate, WeightedExponentialBoundary) {
    const auto w = terminal_tiv(smile_slice(0.3, 0.5));
    const auto tiv = TivSurface::weighted(0, 0.5, w, WeightFunction::exponential());
    for (double y : {-0.6, 0.0, 0.3}) EXPECT_NEAR(tiv.value(y, 0.5), w(y), 1e-15);
    EXPECT_NEAR(tiv.value(0.0, 0.25), w(0.0) * std::expm1(0.5) / std::expm1(1.0), 1e-15);
}

TEST(Accumulate, RejectsBadTimes) {
    const auto tiv = TivSurface::linear(0, 1.0, terminal_tiv(flat_slice(0.2, 1.0)));
    EXPECT_THROW(tiv.accumulate(0.0, 0.0), std::invalid_argument);
    EXPECT_THROW(tiv.accumulate(0.0, -1.0), std::invalid_argument);
    EXPECT_THROW(tiv.accumulate(0.0, 1.5), std::invalid_argument);
}

TEST(Accumulate, ParseNames) {
    EXPECT_EQ(parse_accumulator("ttm-iv"), Accumulator::TtmIv);
    EXPECT_EQ(parse_accumulator("exp-weighted"), Accumulator::Weighted);
    EXPECT_EQ(to_string(Accumulator::Quadratic), "quadratic");
    EXPECT_THROW(parse_accumulator("cubic"), std::invalid_argument);
}

class AllAccumulators : public ::testing::TestWithParam<Accumulator> {
protected:
    MarketBundle bundle = synthetic_market(SyntheticSpec{});
    std::vector<TivSurface> surfaces = build_tiv_surfaces(bundle, GetParam());
};

TEST_P(AllAccumulators, TerminalConsistency) {
    for (std::size_t j = 0; j < surfaces.size(); ++j) {
        const double T = bundle.futures[j].delivery;
        for (const auto& q : bundle.slices[j].quotes) {
            EXPECT_NEAR(surfaces[j].value(q.log_moneyness, T), q.implied_vol * q.implied_vol * T, 1e-12);
        }
    }
}

TEST_P(AllAccumulators, MonotoneInTime) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uy(-1.2, 1.0);
    for (std::size_t j = 0; j < surfaces.size(); ++j) {
        const double T = bundle.futures[j].delivery;
        for (int k = 0; k < 20; ++k) {
            const double y = uy(rng);
            double prev = 0.0;
            for (int i = 1; i <= 200; ++i) {
                const double w = surfaces[j].value(y, T * i / 200.0);
                EXPECT_GE(w, prev);
                EXPECT_GT(w, 0.0);
                prev = w;
            }
        }
    }
}

TEST_P(AllAccumulators, TimeDerivativeMatchesFiniteDifference) {
    for (std::size_t j = 0; j < surfaces.size(); ++j) {
        const double T = bundle.futures[j].delivery;
        const auto kinks = surfaces[j].kinks();
        for (double frac : {0.13, 0.37, 0.52, 0.81, 0.97}) {
            const double t = frac * T;
            const double h = 1e-6 * T;
            bool near_kink = false;
            for (double k : kinks) near_kink = near_kink || std::abs(k - t) < 2 * h;
            if (near_kink) continue;
            for (double y : {-0.5, 0.0, 0.3}) {
                const double fd = (surfaces[j].value(y, t + h) - surfaces[j].value(y, t - h)) / (2 * h);
                EXPECT_NEAR(surfaces[j].accumulate(y, t).dwdt, fd, 1e-6);
            }
        }
    }
}

TEST_P(AllAccumulators, StrikeDerivativesMatchFiniteDifference) {
    for (std::size_t j = 0; j < surfaces.size(); j += 3) {
        const double T = bundle.futures[j].delivery;
        for (double t : {0.3 * T, 0.77 * T, T}) {
            for (double y = -0.63; y < 0.45; y += 0.1) {
                const double h = 1e-4;
                const double up = surfaces[j].value(y + h, t);
                const double mid = surfaces[j].value(y, t);
                const double dn = surfaces[j].value(y - h, t);
                const auto p = surfaces[j].accumulate(y, t);
                EXPECT_NEAR(p.dwdy, (up - dn) / (2 * h), 1e-6);
                EXPECT_NEAR(p.d2wdy2, (up - 2 * mid + dn) / (h * h), 1e-5);
            }
        }
    }
}

INSTANTIATE_TEST_SUITE_P(Tiv, AllAccumulators,
                         ::testing::Values(Accumulator::Linear, Accumulator::Quadratic, Accumulator::TtmIv,
                                           Accumulator::Weighted));

TEST(Accumulate, AllAgreeAtDelivery) {
    const auto bundle = synthetic_market(SyntheticSpec{});
    const auto lin = build_tiv_surfaces(bundle, Accumulator::Linear);
    const auto quad = build_tiv_surfaces(bundle, Accumulator::Quadratic);
    const auto ttm = build_tiv_surfaces(bundle, Accumulator::TtmIv);
    const auto wgt = build_tiv_surfaces(bundle, Accumulator::Weighted);
    for (std::size_t j = 0; j < lin.size(); ++j) {
        const double T = bundle.futures[j].delivery;
        for (double y = -1.0; y <= 1.0; y += 0.05) {
            const double ref = lin[j].value(y, T);
            EXPECT_NEAR(quad[j].value(y, T), ref, 1e-12);
            EXPECT_NEAR(ttm[j].value(y, T), ref, 1e-12);
            EXPECT_NEAR(wgt[j].value(y, T), ref, 1e-12);
        }
    }
}

TEST(TtmIvRepair, NonMonotoneTerminalsAreRepaired) {
    // w~_2 < w~_1 at the wings: the raw increment would be negative there.
    std::vector<CubicSpline> terminals{terminal_tiv(smile_slice(0.6, 0.5)), terminal_tiv(flat_slice(0.3, 1.0))};
    const auto tiv = TivSurface::ttm_iv(1, {0.5, 1.0}, terminals);
    EXPECT_TRUE(tiv.repaired_at(-0.6));
    for (double y : {-0.6, -0.2, 0.3}) {
        double prev = 0.0;
        for (int i = 1; i <= 100; ++i) {
            const double w = tiv.value(y, i / 100.0);
            EXPECT_GE(w, prev + 0.0);
            prev = w;
        }
        EXPECT_NEAR(tiv.value(y, 1.0), terminals[1](y), 1e-12);
        EXPECT_GE(tiv.accumulate(y, 0.25).dwdt, 0.0);
    }
}

TEST(TtmIvRepair, BorrowedSliceScalesWithDelivery) {
    SyntheticSpec spec;
    spec.quoted_slices = 8;
    const auto bundle = synthetic_market(spec);
    const auto w_donor = terminal_tiv(bundle.slices[7]);
    const auto w_borrow = terminal_tiv(bundle.slices[11]);
    const double ratio = bundle.futures[11].delivery / bundle.futures[7].delivery;
    for (double y : {-0.5, 0.0, 0.4}) EXPECT_NEAR(w_borrow(y), w_donor(y) * ratio, 1e-14);
}

TEST(WeightFunction, ValidationRejectsBadShapes) {
    WeightFunction f{[](double x) { return x * x * x; }, [](double x) { return 3 * x * x; }};
    EXPECT_NO_THROW(f.validate());
    WeightFunction g{[](double x) { return 0.5 * x; }, [](double) { return 0.5; }};
    EXPECT_THROW(g.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace cclv
