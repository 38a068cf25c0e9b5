#include "cclv/synthetic.hpp"

#include "cclv/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cclv {

AndersenParams wti_params() {
    AndersenParams p;
    p.kappa = 0.2657;
    p.h1 = 0.2365;
    p.h2 = 0.2970;
    p.h_inf = 0.0546;
    return p;
}

AndersenParams ng_params() {
    AndersenParams p;
    p.kappa = 2.3562;
    p.h1 = -0.0634;
    p.h2 = 0.5854;
    p.h_inf = 0.1829;
    return p;
}

SyntheticSpec flat_smile_spec() {
    SyntheticSpec s;
    s.skew = 0.0;
    s.curvature = 0.0;
    return s;
}

MarketBundle synthetic_market(const SyntheticSpec& spec) {
    if (spec.deliveries == 0 || spec.quotes < 3) throw std::invalid_argument("synthetic market needs deliveries and 3+ quotes");
    std::vector<FuturesEntry> entries;
    std::vector<std::pair<std::string, std::vector<VolQuote>>> quoted;
    const std::size_t n_quoted = spec.quoted_slices == 0 ? spec.deliveries : spec.quoted_slices;
    for (std::size_t j = 0; j < spec.deliveries; ++j) {
        const double T = static_cast<double>(j + 1) * spec.spacing;
        const std::string label = "M" + std::to_string(j + 1);
        entries.push_back({T, spec.front_price + spec.price_step * static_cast<double>(j), label});
        if (j >= n_quoted) continue;
        const double atm = atm_vol(spec.backbone, T);
        std::vector<VolQuote> quotes;
        for (std::size_t i = 0; i < spec.quotes; ++i) {
            const double y = spec.y_min + (spec.y_max - spec.y_min) * static_cast<double>(i) / static_cast<double>(spec.quotes - 1);
            quotes.push_back({y, atm * (1.0 + spec.skew * y + spec.curvature * y * y)});
        }
        quoted.emplace_back(label, std::move(quotes));
    }
    const double horizon = static_cast<double>(spec.deliveries) * spec.spacing + 1.0;
    return make_bundle(FuturesCurve(std::move(entries)), std::move(quoted), DiscountCurve::flat(spec.rate, horizon));
}

ReturnSeries synthetic_returns(const AndersenParams& params, std::size_t days, std::uint64_t seed, double short_tenor,
                               double long_tenor) {
    using namespace std::chrono;
    const double dt = 1.0 / 365.25;
    const double sq = std::sqrt(dt);
    // Constant time to delivery: volatilities depend only on the tenor.
    const double s1s = sigma1(params, 0.0, short_tenor), s2s = sigma2(params, 0.0, short_tenor);
    const double s1l = sigma1(params, 0.0, long_tenor), s2l = sigma2(params, 0.0, long_tenor);
    ReturnSeries out;
    sys_days day = year{2010} / January / 1;
    for (std::size_t d = 0; d < days; ++d) {
        const auto z = normal_block(seed, Stream::Test, d, 0);
        out.dates.push_back(day);
        out.short_tenor.push_back(-0.5 * (s1s * s1s + s2s * s2s) * dt + sq * (s1s * z[0] + s2s * z[1]));
        out.long_tenor.push_back(-0.5 * (s1l * s1l + s2l * s2l) * dt + sq * (s1l * z[0] + s2l * z[1]));
        day += std::chrono::days{1};
    }
    return out;
}

}  // namespace cclv
