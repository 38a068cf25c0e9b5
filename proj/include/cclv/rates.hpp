#pragma once

/**
 * @file rates.hpp
 * @brief G1++ short rate r(t) = x(t) + phi(t), dx = -a x dt + sigma dW_r.
 *
 * The shift phi is fitted analytically to the discount curve so that
 * E[D(t)] = P(0,t). sigma = 0 is the deterministic-rate limit r(t) = f(0,t).
 */

#include "cclv/market_data.hpp"

namespace cclv {

struct G1ppParams {
    double a = 0.02;
    double sigma = 0.0;
    double rho_1r = 0.0;  // d<W1, Wr> = rho_1r dt
    double rho_2r = 0.0;  // d<W2, Wr> = rho_2r dt

    /// a > 0, sigma >= 0, rho_1r^2 + rho_2r^2 <= 1.
    void validate() const;
};

enum class RateIntegration {
    Exact,      // joint Gaussian sampling of (x, int x)
    Trapezoid,  // exact x, trapezoidal int x; kept for cross-checks
};

struct RateState {
    double x = 0.0;
    double int_r = 0.0;  // int_0^t r(u) du
    double t = 0.0;

    double discount() const;
};

/// phi(t) = f(0,t) + sigma^2 / (2 a^2) (1 - e^{-a t})^2 and its integral.
class ShiftFunction {
public:
    ShiftFunction(const G1ppParams& params, DiscountCurve curve);

    double operator()(double t) const;
    double integral(double t1, double t2) const;
    const DiscountCurve& curve() const { return curve_; }

private:
    double a_;
    double sigma_;
    DiscountCurve curve_;
};

ShiftFunction fit_shift(const G1ppParams& params, const DiscountCurve& curve);

/// Moments of the exact one-step update over dt (independent of the state).
struct StepMoments {
    double dt;
    double decay;         // e^{-a dt}
    double int_factor;    // (1 - e^{-a dt}) / a
    double var_x;
    double var_int;
    double cov;
    // Cholesky factor of [[var_x, cov], [cov, var_int]].
    double l11, l21, l22;
};

StepMoments step_moments(const G1ppParams& params, double dt);

class G1ppModel {
public:
    G1ppModel(G1ppParams params, const DiscountCurve& curve, RateIntegration scheme = RateIntegration::Exact);

    const G1ppParams& params() const { return params_; }
    const ShiftFunction& shift() const { return shift_; }
    RateIntegration scheme() const { return scheme_; }
    bool deterministic() const { return params_.sigma == 0.0; }

    double short_rate(const RateState& s) const { return s.x + shift_(s.t); }

    /// One exact step; z_x drives x, z_int the part of int x independent of it.
    RateState step(const RateState& s, double dt, double z_x, double z_int) const;
    /// Same with precomputed moments and shift integral (hot loop).
    RateState step(const RateState& s, const StepMoments& m, double shift_integral, double z_x, double z_int) const;

private:
    G1ppParams params_;
    ShiftFunction shift_;
    RateIntegration scheme_;
};

}  // namespace cclv
