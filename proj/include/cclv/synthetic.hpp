#pragma once

// Synthetic desk-scale markets for tests, examples and the acceptance suite.

#include "cclv/andersen.hpp"
#include "cclv/market_data.hpp"

#include <cstdint>

namespace cclv {

/// kappa = 0.2657, h1 = 0.2365, h2 = 0.2970, h_inf = 0.0546, a = 0.
AndersenParams wti_params();
/// kappa = 2.3562, h1 = -0.0634, h2 = 0.5854, h_inf = 0.1829, a = 0.
AndersenParams ng_params();

struct SyntheticSpec {
    std::size_t deliveries = 12;
    double spacing = 1.0 / 12.0;      // T_j = (j + 1) spacing
    double front_price = 75.0;
    double price_step = -0.4;         // backwardated curve
    AndersenParams backbone = wti_params();
    // Sigma(y) = Sigma_ATM (1 + skew y + curvature y^2); zero for flat smiles.
    double skew = -0.25;
    double curvature = 0.35;
    double y_min = -0.7;
    double y_max = 0.5;
    std::size_t quotes = 11;
    std::size_t quoted_slices = 0;    // 0: every delivery quoted
    double rate = 0.03;               // flat continuously compounded
};

SyntheticSpec flat_smile_spec();

MarketBundle synthetic_market(const SyntheticSpec& spec);

/// Daily log-returns of constant-time-to-delivery futures simulated from the
/// backbone (calendar days starting 2010-01-01).
ReturnSeries synthetic_returns(const AndersenParams& params, std::size_t days, std::uint64_t seed,
                               double short_tenor = 1.0 / 12.0, double long_tenor = 4.0);

}  // namespace cclv
