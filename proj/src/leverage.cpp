#include "cclv/leverage.hpp"

#include "cclv/black.hpp"
#include "cclv/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace cclv {

namespace {

constexpr double kKinkNudge = 1e-9;

// Slices landing on a TTM-IV breakpoint are evaluated just to its right.
double nudge_off_kinks(const TivSurface& tiv, double t) {
    for (double k : tiv.kinks()) {
        if (std::abs(t - k) < kKinkNudge) return std::min(k + kKinkNudge, tiv.delivery());
    }
    return t;
}

LeverageValue clamp(double raw, const LeverageClamps& c) {
    LeverageValue v;
    v.raw = raw;
    const double lo = c.l_min * c.l_min;
    const double hi = c.l_max * c.l_max;
    if (!std::isfinite(raw) || raw > hi) {
        v.l2 = hi;
        v.clamped = true;
    } else if (raw < lo) {
        v.l2 = lo;
        v.clamped = true;
    } else {
        v.l2 = raw;
    }
    return v;
}

}  // namespace

SliceEvaluation parse_slice_evaluation(const std::string& name) {
    if (name == "left") return SliceEvaluation::Left;
    if (name == "midpoint") return SliceEvaluation::Midpoint;
    throw std::invalid_argument("unknown slice evaluation '" + name + "' (expected left or midpoint)");
}

std::string to_string(SliceEvaluation e) { return e == SliceEvaluation::Left ? "left" : "midpoint"; }

std::vector<double> evaluation_times(const std::vector<double>& times, double delivery, SliceEvaluation rule) {
    if (rule == SliceEvaluation::Left) return times;
    std::vector<double> out(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
        // Slice i is used on [t_i, t_{i+1}); the first one also on [0, t_1).
        const double lo = i == 0 ? 0.0 : times[i];
        const double hi = i + 1 < times.size() ? times[i + 1] : delivery;
        out[i] = hi > lo ? 0.5 * (lo + hi) : times[i];
    }
    return out;
}

void CalibrationConfig::validate() const {
    if (y_nodes < 2) throw std::invalid_argument("y-grid needs at least 2 nodes");
    if (!(y_margin >= 0.0)) throw std::invalid_argument("y-grid margin must be >= 0");
    if (slice_times.empty() && !(slices_per_year > 0.0)) throw std::invalid_argument("slices_per_year must be positive");
    for (std::size_t i = 0; i < slice_times.size(); ++i) {
        if (!(slice_times[i] > (i == 0 ? 0.0 : slice_times[i - 1]))) {
            throw std::invalid_argument("slice times must be positive and increasing");
        }
    }
    if (!(clamps.l_min > 0.0) || !(clamps.l_max > clamps.l_min)) throw std::invalid_argument("need 0 < L_min < L_max");
    if (!(clamps.denominator_floor > 0.0)) throw std::invalid_argument("denominator floor must be positive");
    if (!(max_clamp_fraction >= 0.0 && max_clamp_fraction <= 1.0)) throw std::invalid_argument("clamp fraction must be in [0, 1]");
    if (mc_paths == 0) throw std::invalid_argument("calibration needs at least one path");
    if (!(max_dt > 0.0)) throw std::invalid_argument("max_dt must be positive");
}

std::vector<double> slice_grid(const CalibrationConfig& config, double horizon) {
    std::vector<double> out;
    if (!config.slice_times.empty()) {
        for (double t : config.slice_times) {
            if (t <= horizon * (1.0 + 1e-12)) out.push_back(t);
        }
        return out;
    }
    for (std::size_t k = 1;; ++k) {
        const double t = static_cast<double>(k) / config.slices_per_year;
        if (t > horizon * (1.0 + 1e-12)) break;
        out.push_back(t);
    }
    return out;
}

UniformGrid leverage_grid(const VolSlice& slice, std::size_t nodes, double margin) {
    const double lo = slice.quotes.front().log_moneyness;
    const double hi = slice.quotes.back().log_moneyness;
    const double pad = margin * (hi - lo);
    return UniformGrid::covering(lo - pad, hi + pad, nodes);
}

LeverageValue leverage_det(const TivSurface& tiv, const AndersenParams& params, double y, double t,
                           const LeverageClamps& clamps) {
    const auto p = tiv.accumulate(y, t);
    const double bracket = dupire_denominator(p.w, p.dwdy, p.d2wdy2, y);
    const double s2 = sigma_sq(params, t, tiv.delivery());
    const bool arbitrage = bracket <= clamps.denominator_floor;
    auto v = clamp(p.dwdt / (std::max(bracket, clamps.denominator_floor) * s2), clamps);
    v.arbitrage = arbitrage;
    v.clamped = v.clamped || arbitrage;
    return v;
}

std::vector<McEstimate> rate_correction_mc(std::span<const double> futures, std::span<const double> discount,
                                           std::span<const double> short_rate, bool antithetic, double f0,
                                           std::span<const double> y_grid) {
    const std::size_t n = futures.size();
    if (n == 0) throw std::invalid_argument("rate correction needs paths");
    if (discount.size() != n || short_rate.size() != n) throw std::invalid_argument("path arrays differ in length");
    std::vector<double> weight(n);
    for (std::size_t p = 0; p < n; ++p) weight[p] = discount[p] * short_rate[p];
    std::vector<double> sample(n);
    std::vector<McEstimate> out;
    out.reserve(y_grid.size());
    for (double y : y_grid) {
        const double K = f0 * std::exp(y);
        for (std::size_t p = 0; p < n; ++p) sample[p] = weight[p] * std::max(futures[p] - K, 0.0);
        out.push_back(mc_estimate(sample, antithetic));
    }
    return out;
}

LeverageValue leverage_sto(const TivSurface& tiv, const AndersenParams& params, const DiscountCurve& curve,
                           double f0, const McEstimate& rate_correction, double y, double t,
                           const LeverageClamps& clamps, double density_floor, std::optional<double> t_local) {
    const double tl = t_local.value_or(t);
    const auto p = tiv.accumulate(y, tl);
    const double P = curve.discount(tl);
    const BlackInputs in{f0, P, y, p.w};
    const double cw = dC_dw(in);
    const double bracket = dupire_denominator(p.w, p.dwdy, p.d2wdy2, y);
    if (cw * bracket / (P * f0) < density_floor) {
        auto v = leverage_det(tiv, params, y, tl, clamps);
        v.fallback = true;
        return v;
    }
    const double C = tl == t ? black_call(in)
                             : black_call({f0, curve.discount(t), y, tiv.accumulate(y, t).w});
    const double s2 = sigma_sq(params, tl, tiv.delivery());
    const double f = curve.instantaneous_forward(t);
    const double denom = cw * std::max(bracket, clamps.denominator_floor) * s2;
    const bool arbitrage = bracket <= clamps.denominator_floor;
    auto v = clamp((cw * p.dwdt - f * C + rate_correction.mean) / denom, clamps);
    v.l2_se = rate_correction.se / denom;
    v.arbitrage = arbitrage;
    v.clamped = v.clamped || arbitrage;
    return v;
}

CalibrationResult calibrate_all(const MarketBundle& bundle, const AndersenParams& params,
                                const std::vector<TivSurface>& tiv, const CalibrationConfig& config,
                                const std::optional<G1ppParams>& rates) {
    config.validate();
    params.validate();
    const std::size_t J = bundle.futures.size();
    if (tiv.size() != J || bundle.slices.size() != J) throw std::invalid_argument("need one TIV surface per delivery");

    CalibrationResult result;
    std::vector<std::vector<double>> times(J);
    std::vector<std::vector<double>> eval(J);
    std::set<double> all_times;
    for (std::size_t j = 0; j < J; ++j) {
        const double T = bundle.futures[j].delivery;
        times[j] = slice_grid(config, T);
        if (times[j].empty()) times[j].push_back(T);
        eval[j] = evaluation_times(times[j], T, config.evaluation);
        for (double& te : eval[j]) te = nudge_off_kinks(tiv[j], te);
        all_times.insert(times[j].begin(), times[j].end());
        result.surfaces.emplace_back(j, T, leverage_grid(bundle.slices[j], config.y_nodes, config.y_margin));
        result.l2_se.emplace_back();
        result.itm_paths.emplace_back();
    }

    std::optional<PathSimulator> sim;
    std::vector<double> sim_grid;
    if (rates) {
        rates->validate();
        std::vector<double> required(all_times.begin(), all_times.end());
        for (const auto& e : bundle.futures.entries()) required.push_back(e.delivery);
        sim_grid = make_time_grid(required, config.max_dt);
        sim.emplace(FuturesModel::from(params, bundle.futures), G1ppModel(*rates, bundle.discount),
                    CorrelationStructure{rates->rho_1r, rates->rho_2r}, config.mc_paths, config.antithetic, config.seed,
                    Stream::Calibration, config.threads);
    }

    std::vector<double> F, D, r;
    bool first = true;
    for (double t : all_times) {
        if (sim && !first) {
            sim->advance(sim_grid, t, result.surfaces);
            sim->discount(D);
            sim->short_rate(r);
        }
        for (std::size_t j = 0; j < J; ++j) {
            const auto it = std::lower_bound(times[j].begin(), times[j].end(), t);
            if (it == times[j].end() || *it != t) continue;
            auto& surface = result.surfaces[j];
            const auto ys = surface.grid().nodes();
            const double t_eval = eval[j][static_cast<std::size_t>(it - times[j].begin())];
            const bool bootstrap = sim && surface.slice_count() > 0;

            std::vector<McEstimate> correction;
            std::vector<std::size_t> itm(ys.size(), 0);
            if (bootstrap) {
                sim->futures(j, F);
                correction = rate_correction_mc(F, D, r, sim->antithetic(), bundle.futures[j].price, ys);
                for (std::size_t i = 0; i < ys.size(); ++i) {
                    const double K = bundle.futures[j].price * std::exp(ys[i]);
                    itm[i] = static_cast<std::size_t>(std::count_if(F.begin(), F.end(), [K](double f) { return f > K; }));
                }
            }
            SliceDiagnostics diag{j, t, ys.size(), 0, 0, 0};
            std::vector<double> values(ys.size());
            std::vector<double> se(ys.size(), 0.0);
            for (std::size_t i = 0; i < ys.size(); ++i) {
                const bool unreached = bootstrap && itm[i] < config.min_itm_paths;
                auto v = bootstrap && !unreached
                             ? leverage_sto(tiv[j], params, bundle.discount, bundle.futures[j].price, correction[i],
                                            ys[i], t, config.clamps, config.density_floor, t_eval)
                             : leverage_det(tiv[j], params, ys[i], t_eval, config.clamps);
                v.fallback = v.fallback || unreached;
                values[i] = std::sqrt(v.l2);
                se[i] = v.l2_se;
                diag.clamped += v.clamped;
                diag.arbitrage += v.arbitrage;
                diag.fallback += v.fallback;
            }
            result.diagnostics.push_back(diag);
            if (static_cast<double>(diag.clamped) > config.max_clamp_fraction * static_cast<double>(diag.nodes)) {
                throw CalibrationError("leverage calibration aborted: " + std::to_string(diag.clamped) + " of " +
                                       std::to_string(diag.nodes) + " nodes clamped for delivery " +
                                       bundle.futures[j].label + " at t=" + std::to_string(t));
            }
            if (diag.arbitrage > 0) {
                result.warnings.push_back("arbitrage: " + std::to_string(diag.arbitrage) + " nodes with Dupire bracket below floor for delivery " +
                                          bundle.futures[j].label + " at t=" + std::to_string(t));
            }
            surface.commit_slice(t, std::move(values));
            result.l2_se[j].push_back(std::move(se));
            result.itm_paths[j].push_back(std::move(itm));
        }
        first = false;
    }
    return result;
}

}  // namespace cclv
