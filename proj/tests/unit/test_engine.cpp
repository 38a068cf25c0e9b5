#include "cclv/black.hpp"
#include "cclv/engine.hpp"
#include "cclv/synthetic.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cclv {
namespace {

FuturesModel two_contracts() {
    FuturesModel m;
    m.params = wti_params();
    m.deliveries = {0.5, 1.0};
    m.initial_prices = {80.0, 78.0};
    return m;
}

G1ppModel flat_rates(double rate = 0.03) { return G1ppModel(G1ppParams{}, DiscountCurve::flat(rate, 5.0)); }

G1ppParams reference_rates() {
    G1ppParams p;
    p.a = 0.02;
    p.sigma = 0.01;
    p.rho_1r = -0.2;
    p.rho_2r = -0.2;
    return p;
}

TEST(LeverageSurface, LinearInYFlatOutside) {
    LeverageSurface s(0, 1.0, UniformGrid::covering(-1.0, 1.0, 3));
    s.commit_slice(0.25, {2.0, 1.0, 3.0});
    EXPECT_DOUBLE_EQ(s(-0.5, 0.3), 1.5);
    EXPECT_DOUBLE_EQ(s(0.25, 0.3), 1.5);
    EXPECT_DOUBLE_EQ(s(-4.0, 0.3), 2.0);
    EXPECT_DOUBLE_EQ(s(9.0, 0.3), 3.0);
    EXPECT_DOUBLE_EQ(s(1.0, 0.3), 3.0);
}

TEST(LeverageSurface, PiecewiseConstantInTime) {
    LeverageSurface s(0, 1.0, UniformGrid::covering(-1.0, 1.0, 2));
    s.commit_slice(0.25, {1.0, 1.0});
    s.commit_slice(0.5, {2.0, 2.0});
    EXPECT_EQ(s(0.0, 0.0), 1.0);  // first slice also covers [0, t_1)
    EXPECT_EQ(s(0.0, 0.49), 1.0);
    EXPECT_EQ(s(0.0, 0.5), 2.0);
    EXPECT_EQ(s(0.0, 0.9), 2.0);
    EXPECT_EQ(s.slice_index(0.5 - 1e-14), 1u);
}

TEST(LeverageSurface, RejectsBadSlices) {
    LeverageSurface s(0, 1.0, UniformGrid::covering(-1.0, 1.0, 2));
    EXPECT_THROW(s.commit_slice(0.25, {1.0}), std::invalid_argument);
    EXPECT_THROW(s.commit_slice(0.25, {1.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(s.commit_slice(0.25, {1.0, NAN}), std::invalid_argument);
    s.commit_slice(0.25, {1.0, 1.0});
    EXPECT_THROW(s.commit_slice(0.25, {1.0, 1.0}), std::invalid_argument);
}

TEST(TimeGrid, ContainsRequiredTimesWithBoundedSteps) {
    const auto g = make_time_grid({0.5, 0.1, 0.5, 1.0 / 3.0}, 0.07);
    double prev = 0.0;
    for (double t : g) {
        EXPECT_GT(t, prev);
        EXPECT_LE(t - prev, 0.07 + 1e-15);
        prev = t;
    }
    for (double t : {0.1, 1.0 / 3.0, 0.5}) EXPECT_NE(std::find(g.begin(), g.end(), t), g.end());
    EXPECT_EQ(g.back(), 0.5);
    EXPECT_THROW(make_time_grid({0.0}, 0.1), std::invalid_argument);
}

TEST(McEstimate, HandValues) {
    const std::vector<double> x{1.0, 2.0, 3.0, 6.0};
    const auto plain = mc_estimate(x, false);
    EXPECT_DOUBLE_EQ(plain.mean, 3.0);
    EXPECT_NEAR(plain.se, std::sqrt(14.0 / 3.0 / 4.0), 1e-15);
    const auto pairs = mc_estimate(x, true);  // pair means 1.5 and 4.5
    EXPECT_DOUBLE_EQ(pairs.mean, 3.0);
    EXPECT_NEAR(pairs.se, 1.5, 1e-15);
    EXPECT_THROW(mc_estimate(std::vector<double>{1.0}, false), std::invalid_argument);
}

TEST(StepSystem, ZeroNormalsGiveConvexityDrift) {
    const auto model = two_contracts();
    const auto rates = flat_rates();
    const auto ctx = StepContext::make(model, rates, {}, 0.2, 0.01, 0);
    std::vector<double> x(2, 0.0), rv(2, 0.0);
    RateState r;
    r.t = 0.2;
    step_system(x, rv, r, ctx, rates, {}, {0.0, 0.0, 0.0, 0.0});
    for (std::size_t j = 0; j < 2; ++j) {
        const double s2 = sigma_sq(model.params, 0.205, model.deliveries[j]);
        EXPECT_NEAR(x[j], -0.5 * s2 * 0.01, 1e-17);
        EXPECT_NEAR(rv[j], x[j] * x[j], 1e-20);
    }
    EXPECT_NEAR(r.discount(), std::exp(-0.03 * 0.01), 1e-15);
}

TEST(StepSystem, StepStraddlingDeliveryIsTruncated) {
    const auto model = two_contracts();
    const auto rates = flat_rates();
    const auto ctx = StepContext::make(model, rates, {}, 0.45, 0.1, 0);
    std::vector<double> x(2, 0.0), rv(2, 0.0);
    RateState r;
    r.t = 0.45;
    step_system(x, rv, r, ctx, rates, {}, {0.0, 0.0, 0.0, 0.0});
    EXPECT_NEAR(x[0], -0.5 * sigma_sq(model.params, 0.475, 0.5) * 0.05, 1e-17);
    const auto after = StepContext::make(model, rates, {}, 0.55, 0.1, 1);
    EXPECT_FALSE(after.active[0]);
    EXPECT_TRUE(after.active[1]);
}

TEST(StepSystem, LeverageScalesIncrement) {
    const auto model = two_contracts();
    const auto rates = flat_rates();
    std::vector<LeverageSurface> lev;
    for (std::size_t j = 0; j < 2; ++j) {
        lev.emplace_back(j, model.deliveries[j], UniformGrid::covering(-1.0, 1.0, 2));
        lev.back().commit_slice(0.1, {2.0, 2.0});
    }
    const auto base = StepContext::make(model, rates, {}, 0.2, 0.01, 0);
    const auto scaled = StepContext::make(model, rates, lev, 0.2, 0.01, 0);
    const std::array<double, 4> z{0.3, -1.1, 0.7, 0.2};
    std::vector<double> x1(2, 0.0), x2(2, 0.0), rv(2, 0.0);
    RateState r1, r2;
    step_system(x1, rv, r1, base, rates, {}, z);
    step_system(x2, rv, r2, scaled, rates, {}, z);
    for (std::size_t j = 0; j < 2; ++j) {
        const double diffusion = std::sqrt(0.01) * (base.s1[j] * z[0] + base.s2[j] * z[1]);
        EXPECT_NEAR(x2[j], -2.0 * base.s_sq[j] * 0.01 + 2.0 * diffusion, 1e-16);
    }
}

// int_0^t sigma^2(u, T) du by the midpoint rule.
double backbone_variance(const AndersenParams& p, double t, double T) {
    const int n = 20000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += sigma_sq(p, (i + 0.5) * t / n, T);
    return s * t / n;
}

SimConfig config_for(const FuturesModel& m, std::size_t paths, double max_dt = 1.0 / 52.0) {
    SimConfig c;
    c.n_paths = paths;
    c.time_grid = make_time_grid(m.deliveries, max_dt);
    c.record_times = m.deliveries;
    c.seed = 2024;
    return c;
}

TEST(Simulate, FuturesAreMartingales) {
    const auto m = two_contracts();
    for (bool stochastic : {false, true}) {
        const G1ppModel rates = stochastic ? G1ppModel(reference_rates(), DiscountCurve::flat(0.03, 5.0)) : flat_rates();
        const CorrelationStructure corr = stochastic ? CorrelationStructure{-0.2, -0.2} : CorrelationStructure{};
        const auto block = simulate(m, rates, corr, {}, config_for(m, 20000));
        for (std::size_t j = 0; j < 2; ++j) {
            const auto est = mc_estimate(block.futures_at(block.node(m.deliveries[j]), j), true);
            EXPECT_NEAR(est.mean, m.initial_prices[j], 3.0 * est.se) << j;
        }
        const auto d = mc_estimate(block.discount_at(block.node(1.0)), true);
        EXPECT_NEAR(d.mean, std::exp(-0.03), std::max(3.0 * d.se, 1e-15));
    }
}

TEST(Simulate, UnitLeverageRecoversBackboneVariance) {
    const auto m = two_contracts();
    const auto block = simulate(m, flat_rates(), {}, {}, config_for(m, 20000, 1.0 / 365.0));
    for (std::size_t j = 0; j < 2; ++j) {
        const double T = m.deliveries[j];
        const auto F = block.futures_at(block.node(T), j);
        std::vector<double> logf(F.size());
        for (std::size_t p = 0; p < F.size(); ++p) logf[p] = std::log(F[p] / m.initial_prices[j]);
        const double mean = std::accumulate(logf.begin(), logf.end(), 0.0) / logf.size();
        double var = 0.0;
        for (double v : logf) var += (v - mean) * (v - mean) / (logf.size() - 1);
        const double target = atm_vol(m.params, T) * atm_vol(m.params, T) * T;
        // Antithetic pairs make logf symmetric, so var is driven by 20000 independent draws.
        EXPECT_NEAR(var, target, 4.0 * target * std::sqrt(2.0 / 20000));
        EXPECT_NEAR(mean, -0.5 * target, 1e-7);
    }
}

TEST(Simulate, AtTheMoneyPriceMatchesBlack) {
    const auto m = two_contracts();
    const auto curve = DiscountCurve::flat(0.03, 5.0);
    const auto block = simulate(m, flat_rates(), {}, {}, config_for(m, 20000, 1.0 / 365.0));
    const std::vector<VanillaRequest> req{{0, 0.5, 0.0}, {1, 1.0, 0.0}, {1, 0.5, -0.2}};
    const auto res = price_vanillas(block, curve, req);
    for (const auto& r : res) {
        const double T = m.deliveries[r.request.delivery];
        const double t = r.request.expiry;
        const double w = backbone_variance(m.params, t, T);
        const double black = black_call({m.initial_prices[r.request.delivery], curve.discount(t), r.request.log_moneyness, w});
        EXPECT_NEAR(r.price, black, 3.0 * r.se) << r.request.delivery << " " << t;
        ASSERT_TRUE(r.implied_vol.has_value());
    }
}

TEST(Simulate, DeepInTheMoneyIsForwardValue) {
    const auto m = two_contracts();
    const auto curve = DiscountCurve::flat(0.03, 5.0);
    const auto block = simulate(m, flat_rates(), {}, {}, config_for(m, 5000));
    const std::vector<VanillaRequest> req{{1, 1.0, -3.0}};
    const auto r = price_vanillas(block, curve, req)[0];
    const double intrinsic = std::exp(-0.03) * 78.0 * (1.0 - std::exp(-3.0));
    EXPECT_NEAR(r.price, intrinsic, 3.0 * r.se + 1e-12);
}

TEST(Simulate, StepsSplitAtLeverageSlices) {
    const auto m = two_contracts();
    std::vector<LeverageSurface> lev;
    for (std::size_t j = 0; j < 2; ++j) {
        lev.emplace_back(j, m.deliveries[j], UniformGrid::covering(-1.0, 1.0, 3));
        const std::vector<double> level{1.0, 2.0, 0.5, 1.5};
        for (std::size_t i = 0; i < level.size(); ++i) lev.back().commit_slice(0.1 * (i + 1), std::vector<double>(3, level[i]));
    }
    // L is flat in y, so the antithetic mean log return is the drift sum whatever the normals.
    auto mean_log = [&](std::vector<double> grid) {
        auto c = config_for(m, 200);
        c.time_grid = std::move(grid);
        const auto block = simulate(m, flat_rates(), {}, lev, c);
        const auto F = block.futures_at(block.node(0.5), 0);
        double s = 0.0;
        for (double f : F) s += std::log(f / m.initial_prices[0]);
        return s / F.size();
    };
    const auto coarse = make_time_grid(m.deliveries, 0.13);
    auto split = coarse;
    for (double t : {0.1, 0.2, 0.3, 0.4}) split.push_back(t);
    std::sort(split.begin(), split.end());
    EXPECT_NEAR(mean_log(coarse), mean_log(split), 1e-12);
}

TEST(Simulate, DeliveriesFreezeAfterMaturity) {
    const auto m = two_contracts();
    const auto block = simulate(m, flat_rates(), {}, {}, config_for(m, 200));
    const auto at_T = block.futures_at(block.node(0.5), 0);
    const auto later = block.futures_at(block.node(1.0), 0);
    for (std::size_t p = 0; p < at_T.size(); ++p) EXPECT_EQ(at_T[p], later[p]);
}

TEST(Simulate, AntitheticPairsMirror) {
    const auto m = two_contracts();
    const auto block = simulate(m, flat_rates(), {}, {}, config_for(m, 100));
    const auto F = block.futures_at(block.node(1.0), 1);
    const double drift = -atm_vol(m.params, 1.0) * atm_vol(m.params, 1.0);
    for (std::size_t p = 0; p < F.size(); p += 2) {
        EXPECT_NEAR(std::log(F[p] / 78.0) + std::log(F[p + 1] / 78.0), drift, 1e-4);
    }
}

TEST(Simulate, AntitheticsReduceForwardVariance) {
    const auto m = two_contracts();
    auto anti = config_for(m, 4000);
    auto plain = config_for(m, 8000);
    plain.antithetic = false;
    const auto a = simulate(m, flat_rates(), {}, {}, anti);
    const auto b = simulate(m, flat_rates(), {}, {}, plain);
    const auto ea = mc_estimate(a.futures_at(a.node(1.0), 1), true);
    const auto eb = mc_estimate(b.futures_at(b.node(1.0), 1), false);
    EXPECT_LT(ea.se, 0.5 * eb.se);
}

TEST(Simulate, ReproducibleAndThreadInvariant) {
    const auto m = two_contracts();
    const G1ppModel rates(reference_rates(), DiscountCurve::flat(0.03, 5.0));
    const CorrelationStructure corr{-0.2, -0.2};
    auto c = config_for(m, 777);
    c.threads = 1;
    const auto one = simulate(m, rates, corr, {}, c);
    c.threads = 5;
    const auto five = simulate(m, rates, corr, {}, c);
    const auto again = simulate(m, rates, corr, {}, c);
    EXPECT_EQ(one.futures, five.futures);
    EXPECT_EQ(one.discount, five.discount);
    EXPECT_EQ(five.realized_var, again.realized_var);
    c.seed += 1;
    EXPECT_NE(simulate(m, rates, corr, {}, c).futures, one.futures);
}

TEST(Simulate, RateFuturesCorrelation) {
    const auto m = two_contracts();
    const G1ppModel rates(reference_rates(), DiscountCurve::flat(0.03, 5.0));
    const CorrelationStructure corr{-0.2, -0.2};
    const auto block = simulate(m, rates, corr, {}, config_for(m, 20000));
    const auto node = block.node(0.5);
    const auto F = block.futures_at(node, 1);
    const auto x = std::span<const double>(block.rate_factor.data() + node * block.n_paths, block.n_paths);
    double sf = 0, sx = 0, sff = 0, sxx = 0, sfx = 0;
    const double n = static_cast<double>(F.size());
    for (std::size_t p = 0; p < F.size(); ++p) {
        const double lf = std::log(F[p]);
        sf += lf;
        sx += x[p];
        sff += lf * lf;
        sxx += x[p] * x[p];
        sfx += lf * x[p];
    }
    const double c = (sfx / n - sf * sx / (n * n)) / std::sqrt((sff / n - sf * sf / (n * n)) * (sxx / n - sx * sx / (n * n)));
    // corr(int s1 dW1 + s2 dW2, x) with slowly varying vols is close to
    // (rho_1r s1 + rho_2r s2) / sqrt(s1^2 + s2^2) at the midpoint.
    const double s1 = sigma1(m.params, 0.25, 1.0), s2 = sigma2(m.params, 0.25, 1.0);
    EXPECT_NEAR(c, -0.2 * (s1 + s2) / std::hypot(s1, s2), 0.03);
}

TEST(RealizedVariance, MatchesStepOracle) {
    const auto m = two_contracts();
    const auto rates = flat_rates();
    const auto c = config_for(m, 20000, 1.0 / 52.0);
    const auto block = simulate(m, rates, {}, {}, c);
    for (std::size_t j = 0; j < 2; ++j) {
        const double T = m.deliveries[j];
        double expected = 0.0, prev = 0.0;
        for (double t : c.time_grid) {
            if (t > T + 1e-12) break;
            const auto ctx = StepContext::make(m, rates, {}, prev, t - prev, 0);
            const double v = ctx.s_sq[j] * ctx.dt;
            expected += v + 0.25 * v * v;
            prev = t;
        }
        const auto rv = realized_variance(block, j, T);
        EXPECT_NEAR(rv.estimate.mean, expected, 3.0 * rv.estimate.se) << j;
        EXPECT_NEAR(rv.estimate.mean / (atm_vol(m.params, T) * atm_vol(m.params, T) * T), 1.0, 0.02);
    }
    EXPECT_THROW(realized_variance(block, 0, 0.3), std::invalid_argument);
    EXPECT_THROW(realized_variance(block, 5, 0.5), std::out_of_range);
}

TEST(Simulate, RejectsBadConfig) {
    const auto m = two_contracts();
    auto c = config_for(m, 10);
    c.record_times = {0.3};
    EXPECT_THROW(simulate(m, flat_rates(), {}, {}, c), std::invalid_argument);
    EXPECT_THROW((CorrelationStructure{0.8, 0.8}.validate()), std::invalid_argument);
}

}  // namespace
}  // namespace cclv
