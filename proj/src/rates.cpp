#include "cclv/rates.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cclv {

namespace {

// S(u) = u - 2 (1 - e^{-u}) + (1 - e^{-2u}) / 2 = int_0^u (1 - e^{-v})^2 dv.
// Cancels to O(u^3) for small u, so use its Taylor series there.
double squared_decay_integral(double u) {
    if (u < 0.1) {
        // sum_{n>=3} (-1)^{n+1} (2^{n-1} - 2) u^n / n!
        double sum = 0.0;
        double power = u * u;   // u^n / n! built incrementally
        double two_pow = 2.0;   // 2^{n-1}
        power /= 2.0;
        for (int n = 3; n < 30; ++n) {
            power *= u / n;
            two_pow *= 2.0;
            const double term = (n % 2 == 1 ? 1.0 : -1.0) * (two_pow - 2.0) * power;
            sum += term;
            if (std::abs(term) < 1e-18 * std::abs(sum)) break;
        }
        return sum;
    }
    return u + 2.0 * std::expm1(-u) - 0.5 * std::expm1(-2.0 * u);
}

}  // namespace

void G1ppParams::validate() const {
    if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("G1++ mean reversion must be positive");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("G1++ volatility must be >= 0");
    if (!(std::abs(rho_1r) <= 1.0) || !(std::abs(rho_2r) <= 1.0) || rho_1r * rho_1r + rho_2r * rho_2r > 1.0) {
        throw std::invalid_argument("rate correlations need rho_1r^2 + rho_2r^2 <= 1");
    }
}

double RateState::discount() const { return std::exp(-int_r); }

ShiftFunction::ShiftFunction(const G1ppParams& params, DiscountCurve curve)
    : a_(params.a), sigma_(params.sigma), curve_(std::move(curve)) {
    params.validate();
}

double ShiftFunction::operator()(double t) const {
    const double e = -std::expm1(-a_ * t);
    return curve_.instantaneous_forward(t) + sigma_ * sigma_ / (2.0 * a_ * a_) * e * e;
}

double ShiftFunction::integral(double t1, double t2) const {
    const double curve_part = curve_.log_discount(t1) - curve_.log_discount(t2);
    if (sigma_ == 0.0) return curve_part;
    const double c = sigma_ * sigma_ / (2.0 * a_ * a_ * a_);
    return curve_part + c * (squared_decay_integral(a_ * t2) - squared_decay_integral(a_ * t1));
}

ShiftFunction fit_shift(const G1ppParams& params, const DiscountCurve& curve) { return ShiftFunction(params, curve); }

StepMoments step_moments(const G1ppParams& params, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("rate step needs dt > 0");
    const double a = params.a;
    const double s2 = params.sigma * params.sigma;
    const double e = -std::expm1(-a * dt);
    StepMoments m{};
    m.dt = dt;
    m.decay = 1.0 - e;
    m.int_factor = e / a;
    m.var_x = s2 * -std::expm1(-2.0 * a * dt) / (2.0 * a);
    m.var_int = s2 / (a * a * a) * squared_decay_integral(a * dt);
    m.cov = s2 / (2.0 * a * a) * e * e;
    m.l11 = std::sqrt(m.var_x);
    m.l21 = m.l11 > 0.0 ? m.cov / m.l11 : 0.0;
    m.l22 = std::sqrt(std::max(0.0, m.var_int - m.l21 * m.l21));
    return m;
}

G1ppModel::G1ppModel(G1ppParams params, const DiscountCurve& curve, RateIntegration scheme)
    : params_(params), shift_(params, curve), scheme_(scheme) {}

RateState G1ppModel::step(const RateState& s, double dt, double z_x, double z_int) const {
    return step(s, step_moments(params_, dt), shift_.integral(s.t, s.t + dt), z_x, z_int);
}

RateState G1ppModel::step(const RateState& s, const StepMoments& m, double shift_integral, double z_x,
                          double z_int) const {
    RateState next;
    next.t = s.t + m.dt;
    next.x = s.x * m.decay + m.l11 * z_x;
    double int_x = 0.0;
    if (scheme_ == RateIntegration::Exact) {
        int_x = s.x * m.int_factor + m.l21 * z_x + m.l22 * z_int;
    } else {
        int_x = 0.5 * (s.x + next.x) * m.dt;
    }
    next.int_r = s.int_r + int_x + shift_integral;
    return next;
}

}  // namespace cclv
