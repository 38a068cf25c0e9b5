#pragma once

// Black-76 call prices in log-moneyness / total-variance coordinates.
//
//   C = P F (N(d1) - e^y N(d2)),  d1 = -y / sqrt(w) + sqrt(w) / 2,  d2 = d1 - sqrt(w)
//
// with y = log(K / F) and w = Sigma^2 t.

#include <stdexcept>

namespace cclv {

class ArbitrageBoundError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct BlackInputs {
    double forward;
    double discount;
    double log_moneyness;
    double total_variance;
};

double norm_pdf(double x);
double norm_cdf(double x);

/// Discounted call price; w = 0 gives the intrinsic value P F max(1 - e^y, 0).
double black_call(const BlackInputs& in);

/// dC/dw = P F e^y N'(d2) / (2 sqrt(w)); requires w > 0.
double dC_dw(const BlackInputs& in);

/// The bracket B with (1/2) K^2 d2C/dK2 = dC/dw * B, for a smile w(y):
///
///   B = 1 - (y/w) w_y + w_yy / 2 + (w_y^2 / 4)(-1/4 - 1/w + y^2/w^2)
double dupire_denominator(double w, double dwdy, double d2wdy2, double y);

/// Implied vol Sigma with black_call(F, P, y, Sigma^2 t) = price.
/// Throws ArbitrageBoundError unless intrinsic < price < P F.
double implied_vol(double price, double forward, double discount, double log_moneyness, double expiry);

}  // namespace cclv
