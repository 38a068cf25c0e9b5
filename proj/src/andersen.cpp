#include "cclv/andersen.hpp"

#include "cclv/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace cclv {

namespace {

// (1 - exp(-x)) / x with the x -> 0 limit.
double decay_factor(double x) {
    if (std::abs(x) < 1e-10) return 1.0 - 0.5 * x;
    return -std::expm1(-x) / x;
}

double unseasonal_variance(double kappa, double h1, double h2, double h_inf, double maturity) {
    return (h1 * h1 + h2 * h2) * decay_factor(2.0 * kappa * maturity) +
           2.0 * h_inf * h1 * decay_factor(kappa * maturity) + h_inf * h_inf;
}

}  // namespace

Seasonality::Seasonality(std::vector<Pillar> pillars) : pillars_(std::move(pillars)) {
    for (std::size_t i = 0; i < pillars_.size(); ++i) {
        if (!std::isfinite(pillars_[i].maturity) || !std::isfinite(pillars_[i].value)) {
            throw ModelError("non-finite seasonality pillar");
        }
        if (i > 0 && !(pillars_[i].maturity > pillars_[i - 1].maturity)) {
            throw ModelError("seasonality pillars must be strictly increasing");
        }
    }
}

double Seasonality::operator()(double maturity) const {
    if (pillars_.empty()) return 0.0;
    if (maturity <= pillars_.front().maturity) return pillars_.front().value;
    if (maturity >= pillars_.back().maturity) return pillars_.back().value;
    auto hi = std::upper_bound(pillars_.begin(), pillars_.end(), maturity,
                               [](double m, const Pillar& p) { return m < p.maturity; });
    auto lo = hi - 1;
    const double w = (maturity - lo->maturity) / (hi->maturity - lo->maturity);
    return lo->value + w * (hi->value - lo->value);
}

void AndersenParams::validate() const {
    if (!std::isfinite(kappa) || kappa < 0.0) throw ModelError("kappa must be >= 0");
    if (!std::isfinite(h1) || !std::isfinite(h2) || !std::isfinite(h_inf)) throw ModelError("non-finite h parameter");
    if ((h1 + h_inf) * (h1 + h_inf) + h2 * h2 <= 0.0) throw ModelError("sigma_0 must be positive");
}

std::vector<std::string> AndersenParams::warnings() const {
    std::vector<std::string> out;
    const auto& p = seasonality.pillars();
    if (!p.empty()) {
        double mean = 0.0;
        for (const auto& x : p) mean += x.value;
        mean /= static_cast<double>(p.size());
        if (std::abs(mean) > 0.25) out.push_back("seasonality pillars do not oscillate around zero (mean " +
                                                 std::to_string(mean) + ")");
    }
    return out;
}

DerivedParams derive(const AndersenParams& params) {
    const double s = params.h1 + params.h_inf;
    const double sigma_0 = std::sqrt(s * s + params.h2 * params.h2);
    return {sigma_0, params.h_inf, sigma_0 > 0.0 ? s / sigma_0 : 0.0};
}

AndersenParams from_derived(double kappa, const DerivedParams& derived) {
    AndersenParams p;
    p.kappa = kappa;
    p.h_inf = derived.sigma_inf;
    p.h1 = derived.sigma_0 * derived.rho_inf - derived.sigma_inf;
    p.h2 = derived.sigma_0 * std::sqrt(std::max(0.0, 1.0 - derived.rho_inf * derived.rho_inf));
    return p;
}

double sigma1(const AndersenParams& params, double t, double maturity) {
    const double a = params.seasonality(maturity);
    return std::exp(a - params.kappa * (maturity - t)) * params.h1 + std::exp(a) * params.h_inf;
}

double sigma2(const AndersenParams& params, double t, double maturity) {
    const double a = params.seasonality(maturity);
    return std::exp(a - params.kappa * (maturity - t)) * params.h2;
}

double sigma_sq(const AndersenParams& params, double t, double maturity) {
    const double s1 = sigma1(params, t, maturity);
    const double s2 = sigma2(params, t, maturity);
    return s1 * s1 + s2 * s2;
}

double atm_vol_unseasonal(const AndersenParams& params, double maturity) {
    if (!(maturity > 0.0)) throw std::invalid_argument("atm_vol needs a positive maturity");
    const double v = unseasonal_variance(params.kappa, params.h1, params.h2, params.h_inf, maturity);
    if (v < 0.0) throw ModelError("invalid parameter region: negative ATM variance");
    return std::sqrt(v);
}

double atm_vol(const AndersenParams& params, double maturity) {
    return std::exp(params.seasonality(maturity)) * atm_vol_unseasonal(params, maturity);
}

double model_correlation(const AndersenParams& params, double t, double maturity1, double maturity2) {
    const double a1 = sigma1(params, t, maturity1);
    const double a2 = sigma2(params, t, maturity1);
    const double b1 = sigma1(params, t, maturity2);
    const double b2 = sigma2(params, t, maturity2);
    return (a1 * b1 + a2 * b2) / std::sqrt((a1 * a1 + a2 * a2) * (b1 * b1 + b2 * b2));
}

// ---------------------------------------------------------------------------
// Historical correlation

namespace {

struct Moments {
    std::size_t n = 0;
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;

    void add(double x, double y) {
        ++n;
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    double var_x() const { return sxx - sx * sx / static_cast<double>(n); }
    double var_y() const { return syy - sy * sy / static_cast<double>(n); }
    double correlation() const {
        if (n < 2) return std::numeric_limits<double>::quiet_NaN();
        const double vx = var_x();
        const double vy = var_y();
        if (vx <= 0.0 || vy <= 0.0) return std::numeric_limits<double>::quiet_NaN();
        return std::clamp((sxy - sx * sy / static_cast<double>(n)) / std::sqrt(vx * vy), -1.0, 1.0);
    }
};

double fisher_p_value(double r, std::size_t n) {
    if (!std::isfinite(r) || n < 4) return std::numeric_limits<double>::quiet_NaN();
    if (std::abs(r) >= 1.0) return 0.0;
    const double z = std::atanh(r) * std::sqrt(static_cast<double>(n) - 3.0);
    return std::erfc(std::abs(z) / std::sqrt(2.0));
}

}  // namespace

CorrelationEstimate estimate_rho_inf(const ReturnSeries& series) {
    series.validate();
    std::array<Moments, 12> buckets{};
    Moments pooled;
    for (std::size_t i = 0; i < series.dates.size(); ++i) {
        const std::chrono::year_month_day ymd{series.dates[i]};
        const auto m = static_cast<unsigned>(ymd.month());
        buckets[m - 1].add(series.short_tenor[i], series.long_tenor[i]);
        pooled.add(series.short_tenor[i], series.long_tenor[i]);
    }
    const double scale = std::max(pooled.sxx, pooled.syy);
    if (pooled.n < 2 || pooled.var_x() <= 1e-14 * scale || pooled.var_y() <= 1e-14 * scale) {
        throw ModelError("degenerate returns");
    }

    CorrelationEstimate est{};
    for (unsigned m = 0; m < 12; ++m) {
        const auto& b = buckets[m];
        const double r = b.correlation();
        est.months[m] = {m + 1, b.n, r, fisher_p_value(r, b.n), b.n < 24};
    }
    est.samples = pooled.n;
    est.rho_inf = pooled.correlation();
    est.p_value = fisher_p_value(est.rho_inf, pooled.n);
    return est;
}

// ---------------------------------------------------------------------------
// Backbone calibration

namespace {

// Free coordinates: (log kappa, log sigma_0, h_inf); rho_inf is held fixed.
struct Coordinates {
    double rho;

    AndersenParams params(const Eigen::Vector3d& theta) const {
        return from_derived(std::exp(theta[0]), {std::exp(theta[1]), theta[2], rho});
    }
};

// Sign-preserving square root: a negative radicand gives a large residual.
double signed_root(double v) { return v >= 0.0 ? std::sqrt(v) : -std::sqrt(-v); }

Eigen::VectorXd residuals(const Coordinates& c, const Eigen::Vector3d& theta, const std::vector<AtmQuote>& q) {
    const auto p = c.params(theta);
    Eigen::VectorXd r(static_cast<Eigen::Index>(q.size()));
    for (std::size_t i = 0; i < q.size(); ++i) {
        r[static_cast<Eigen::Index>(i)] =
            signed_root(unseasonal_variance(p.kappa, p.h1, p.h2, p.h_inf, q[i].maturity)) - q[i].vol;
    }
    return r;
}

struct LmResult {
    Eigen::Vector3d theta;
    double cost;
    int iterations;
};

LmResult levenberg_marquardt(const Coordinates& c, Eigen::Vector3d theta, const std::vector<AtmQuote>& q) {
    constexpr double log_kappa_min = -13.8;  // kappa >= 1e-6
    constexpr double log_kappa_max = 4.6;    // kappa <= 100
    const auto n = static_cast<Eigen::Index>(q.size());
    Eigen::VectorXd r = residuals(c, theta, q);
    double cost = r.squaredNorm();
    double lambda = 1e-3;
    int it = 0;
    for (; it < 500 && cost > 1e-30; ++it) {
        Eigen::MatrixXd jac(n, 3);
        for (int k = 0; k < 3; ++k) {
            const double h = 1e-6 * std::max(1.0, std::abs(theta[k]));
            Eigen::Vector3d up = theta;
            Eigen::Vector3d dn = theta;
            up[k] += h;
            dn[k] -= h;
            jac.col(k) = (residuals(c, up, q) - residuals(c, dn, q)) / (2.0 * h);
        }
        const Eigen::Matrix3d jtj = jac.transpose() * jac;
        const Eigen::Vector3d grad = jac.transpose() * r;
        if (grad.lpNorm<Eigen::Infinity>() < 1e-18) break;

        bool improved = false;
        Eigen::Vector3d step = Eigen::Vector3d::Zero();
        while (lambda < 1e12) {
            Eigen::Matrix3d a = jtj;
            a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
            step = a.ldlt().solve(-grad);
            Eigen::Vector3d trial = theta + step;
            trial[0] = std::clamp(trial[0], log_kappa_min, log_kappa_max);
            const Eigen::VectorXd rt = residuals(c, trial, q);
            const double ct = rt.squaredNorm();
            if (std::isfinite(ct) && ct < cost) {
                theta = trial;
                r = rt;
                cost = ct;
                lambda = std::max(lambda * 0.3, 1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!improved || step.norm() < 1e-15 * (1.0 + theta.norm())) break;
    }
    return {theta, cost, it};
}

}  // namespace

BackboneFit calibrate_backbone(const std::vector<AtmQuote>& quotes, double rho_inf) {
    if (quotes.size() < 4) throw CalibrationError("insufficient quotes: need at least 4 ATM quotes");
    if (!(rho_inf > -1.0 && rho_inf < 1.0)) throw std::invalid_argument("rho_inf must lie in (-1, 1)");
    for (std::size_t i = 0; i < quotes.size(); ++i) {
        if (!(quotes[i].maturity > 0.0) || !(quotes[i].vol > 0.0)) {
            throw CalibrationError("ATM quotes need positive maturity and vol");
        }
        if (i > 0 && !(quotes[i].maturity > quotes[i - 1].maturity)) {
            throw CalibrationError("ATM quote maturities must be strictly increasing");
        }
    }

    const std::size_t tail = std::max<std::size_t>(1, quotes.size() / 3);
    double long_end = 0.0;
    for (std::size_t i = quotes.size() - tail; i < quotes.size(); ++i) long_end += quotes[i].vol;
    long_end /= static_cast<double>(tail);

    const Coordinates coords{rho_inf};
    LmResult best{Eigen::Vector3d::Zero(), std::numeric_limits<double>::infinity(), 0};
    for (double kappa0 : {1.0, 0.25, 4.0}) {
        const Eigen::Vector3d theta0(std::log(kappa0), std::log(quotes.front().vol), long_end);
        auto res = levenberg_marquardt(coords, theta0, quotes);
        if (res.cost < best.cost) best = res;
    }
    if (!std::isfinite(best.cost)) throw CalibrationError("backbone fit did not converge");

    BackboneFit fit;
    fit.params = coords.params(best.theta);
    fit.iterations = best.iterations;
    fit.stage1_rms = std::sqrt(best.cost / static_cast<double>(quotes.size()));

    std::vector<Seasonality::Pillar> pillars;
    for (const auto& q : quotes) {
        const auto& p = fit.params;
        const double g2 = unseasonal_variance(p.kappa, p.h1, p.h2, p.h_inf, q.maturity);
        if (!(g2 > 0.0)) throw CalibrationError("non-positive seasonality-free ATM variance at a pillar");
        const double g = std::sqrt(g2);
        fit.g.push_back(g);
        pillars.push_back({q.maturity, std::log(q.vol / g)});
    }
    fit.params.seasonality = Seasonality(std::move(pillars));
    return fit;
}

}  // namespace cclv
