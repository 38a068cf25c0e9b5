#pragma once

/**
 * @file andersen.hpp
 * @brief Two-factor lognormal futures-curve backbone.
 *
 * Each futures price follows dF/F = s1(t,T) dW1 + s2(t,T) dW2 with W1, W2
 * independent and
 *
 *     s1(t,T) = exp(b(T) - kappa (T - t)) h1 + exp(a(T)) h_inf
 *     s2(t,T) = exp(b(T) - kappa (T - t)) h2
 *
 * The seasonality is time-stationary throughout, so b = a.
 */

#include "cclv/market_data.hpp"

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace cclv {

/// Seasonality adjustment a(T): pillar values, piecewise linear, flat outside.
class Seasonality {
public:
    struct Pillar {
        double maturity;
        double value;
    };

    Seasonality() = default;
    explicit Seasonality(std::vector<Pillar> pillars);

    double operator()(double maturity) const;
    const std::vector<Pillar>& pillars() const { return pillars_; }
    bool empty() const { return pillars_.empty(); }

private:
    std::vector<Pillar> pillars_;
};

struct AndersenParams {
    double kappa = 0.0;
    double h1 = 0.0;
    double h2 = 0.0;
    double h_inf = 0.0;
    Seasonality seasonality;  // a(T) = b(T)

    /// Throws ModelError on kappa < 0 or a degenerate sigma_0.
    void validate() const;
    /// Soft checks (a(T) pillars should oscillate around zero).
    std::vector<std::string> warnings() const;
};

/// sigma_0 = sqrt((h1 + h_inf)^2 + h2^2), sigma_inf = h_inf, rho_inf = (h1 + h_inf) / sigma_0.
struct DerivedParams {
    double sigma_0;
    double sigma_inf;
    double rho_inf;
};

DerivedParams derive(const AndersenParams& params);
/// Inverse of derive() with h2 >= 0.
AndersenParams from_derived(double kappa, const DerivedParams& derived);

double sigma1(const AndersenParams& params, double t, double maturity);
double sigma2(const AndersenParams& params, double t, double maturity);
/// s1^2 + s2^2.
double sigma_sq(const AndersenParams& params, double t, double maturity);

/// ATM implied vol of an option expiring at the delivery date T.
double atm_vol(const AndersenParams& params, double maturity);
/// The seasonality-free factor g(T): atm_vol = exp(a(T)) g(T).
double atm_vol_unseasonal(const AndersenParams& params, double maturity);

/// Instantaneous correlation of d log F(t, T1) and d log F(t, T2).
double model_correlation(const AndersenParams& params, double t, double maturity1, double maturity2);

struct MonthCorrelation {
    unsigned month;       // 1..12
    std::size_t samples;
    double correlation;   // NaN when the bucket is empty
    double p_value;       // two-sided, Fisher z against rho = 0
    bool low_sample;      // fewer than 24 observations
};

struct CorrelationEstimate {
    std::array<MonthCorrelation, 12> months;
    std::size_t samples;
    double rho_inf;       // pooled Pearson correlation
    double p_value;
};

/// Per-calendar-month and pooled Pearson correlation of short vs long tenor returns.
CorrelationEstimate estimate_rho_inf(const ReturnSeries& series);

struct AtmQuote {
    double maturity;
    double vol;
};

struct BackboneFit {
    AndersenParams params;
    double stage1_rms;         // vol-space RMS of the seasonality-free fit
    int iterations;
    std::vector<double> g;     // seasonality-free ATM vol at each quote
};

/// Fits (kappa, h1, h2, h_inf) to an ATM term structure under the rho_inf
/// constraint, then sets a(T_j) so every quote is repriced exactly.
BackboneFit calibrate_backbone(const std::vector<AtmQuote>& quotes, double rho_inf);

}  // namespace cclv
