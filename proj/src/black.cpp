#include "cclv/black.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace cclv {

double norm_pdf(double x) { return std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2); }

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

namespace {

// Undiscounted price of the out-of-the-money option per unit forward:
// a put for y < 0, a call otherwise.
double otm_value(double y, double w) {
    if (w <= 0.0) return 0.0;
    const double s = std::sqrt(w);
    const double d1 = -y / s + 0.5 * s;
    const double d2 = d1 - s;
    if (y < 0.0) return std::exp(y) * norm_cdf(-d2) - norm_cdf(-d1);
    return norm_cdf(d1) - std::exp(y) * norm_cdf(d2);
}

void check_inputs(const BlackInputs& in) {
    if (!(in.forward > 0.0) || !(in.discount > 0.0) || !std::isfinite(in.log_moneyness) ||
        !(in.total_variance >= 0.0) || !std::isfinite(in.total_variance)) {
        throw std::invalid_argument("black: invalid inputs");
    }
}

}  // namespace

double black_call(const BlackInputs& in) {
    check_inputs(in);
    const double scale = in.discount * in.forward;
    const double intrinsic = std::max(-std::expm1(in.log_moneyness), 0.0);
    return scale * (intrinsic + otm_value(in.log_moneyness, in.total_variance));
}

double dC_dw(const BlackInputs& in) {
    check_inputs(in);
    if (!(in.total_variance > 0.0)) throw std::domain_error("dC/dw needs positive total variance");
    const double s = std::sqrt(in.total_variance);
    const double d2 = -in.log_moneyness / s - 0.5 * s;
    return 0.5 * in.discount * in.forward * std::exp(in.log_moneyness) * norm_pdf(d2) / s;
}

double dupire_denominator(double w, double dwdy, double d2wdy2, double y) {
    if (!(w > 0.0)) throw std::domain_error("dupire denominator needs positive total variance");
    return 1.0 - y / w * dwdy + 0.5 * d2wdy2 + 0.25 * dwdy * dwdy * (-0.25 - 1.0 / w + y * y / (w * w));
}

double implied_vol(double price, double forward, double discount, double log_moneyness, double expiry) {
    if (!(forward > 0.0) || !(discount > 0.0) || !(expiry > 0.0) || !std::isfinite(log_moneyness)) {
        throw std::invalid_argument("implied_vol: invalid inputs");
    }
    const double scale = discount * forward;
    const double intrinsic = scale * std::max(-std::expm1(log_moneyness), 0.0);
    // A price within rounding of intrinsic carries no vol.
    if (!(price > intrinsic * (1.0 + 8.0 * std::numeric_limits<double>::epsilon()))) throw ArbitrageBoundError("price below arbitrage bound (intrinsic value)");
    if (!(price < scale)) throw ArbitrageBoundError("price above arbitrage bound (discounted forward)");

    const double y = log_moneyness;
    const double target = (price - intrinsic) / scale;
    const double root_t = std::sqrt(expiry);
    auto f = [&](double sigma) { return otm_value(y, sigma * sigma * expiry) - target; };

    double lo = 0.0;
    double hi = 1.0;
    while (f(hi) < 0.0) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e4) throw ArbitrageBoundError("implied vol not bracketed");
    }

    for (int i = 0; i < 20; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < 0.0 ? lo : hi) = mid;
    }

    double sigma = 0.5 * (lo + hi);
    for (int i = 0; i < 200; ++i) {
        const double fx = f(sigma);
        if (fx == 0.0) break;
        (fx < 0.0 ? lo : hi) = sigma;
        const double s = sigma * root_t;
        const double vega = std::exp(y) * norm_pdf(-y / s - 0.5 * s) * root_t;
        double next = vega > 0.0 ? sigma - fx / vega : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - sigma) <= 1e-16 * sigma || hi - lo <= 1e-16 * hi) {
            sigma = next;
            break;
        }
        sigma = next;
    }
    return sigma;
}

}  // namespace cclv
