#pragma once

/**
 * @file tiv.hpp
 * @brief Per-delivery total implied variance w_j(y, t) = Sigma_j(y, t)^2 t.
 *
 * Only the terminal slice w_j(y, T_j) is observed. An accumulator decides how
 * the variance builds up over (0, T_j]:
 *
 *  - Linear:    w = w~(y) t / T_j
 *  - Quadratic: w = w~(y) (t / T_j)^2
 *  - TtmIv:     piecewise linear in t; from T_j - T_k to T_j the contract
 *               accumulates what the T_k contract accumulates over [0, T_k]
 *  - Weighted:  w = w~(y) f(t / T_j) for a monotone f with f(0) = 0, f(1) = 1
 *
 * In y the terminal slice is a natural cubic spline through the quotes,
 * continued linearly outside the quotes with slope in [-2, 0] on the left
 * and [0, 2] on the right.
 */

#include "cclv/market_data.hpp"
#include "cclv/spline.hpp"

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace cclv {

enum class Accumulator { Linear, Quadratic, TtmIv, Weighted };

Accumulator parse_accumulator(std::string_view name);  // linear|quadratic|ttm-iv|exp-weighted
std::string to_string(Accumulator acc);

/// Time-weighting f on [0, 1] with its derivative.
struct WeightFunction {
    std::function<double(double)> f;
    std::function<double(double)> df;

    /// f(x) = (e^x - 1) / (e - 1).
    static WeightFunction exponential();
    /// Checks f(0) = 0, f(1) = 1 and monotonicity on a dense grid.
    void validate() const;
};

/// Increments below this are clamped by the TTM-IV monotonicity repair.
inline constexpr double kMinTivIncrement = 1e-8;

/// w~_j(y) = Sigma_j(y, T_j)^2 T_j as a spline over the quoted log-moneyness.
CubicSpline terminal_tiv(const VolSlice& slice);

struct TivPoint {
    double w;
    double dwdt;
    double dwdy;
    double d2wdy2;
};

class TivSurface {
public:
    static TivSurface linear(std::size_t index, double delivery, CubicSpline terminal);
    static TivSurface quadratic(std::size_t index, double delivery, CubicSpline terminal);
    static TivSurface weighted(std::size_t index, double delivery, CubicSpline terminal, WeightFunction f);
    /// `deliveries` and `terminals` hold T_1..T_j and w~_1..w~_j; the last is the target.
    static TivSurface ttm_iv(std::size_t index, std::vector<double> deliveries,
                             std::vector<CubicSpline> terminals);

    /// w and its partials at 0 < t <= T_j. At TTM-IV breakpoints dw/dt is the right derivative.
    TivPoint accumulate(double y, double t) const;
    double value(double y, double t) const { return accumulate(y, t).w; }

    std::size_t index() const { return index_; }
    double delivery() const { return delivery_; }
    Accumulator kind() const { return kind_; }
    const CubicSpline& terminal() const { return terminals_->back(); }

    /// Times in (0, T_j) where dw/dt jumps (TTM-IV only).
    std::vector<double> kinks() const;
    /// Whether the TTM-IV repair alters the increments at y.
    bool repaired_at(double y) const;

private:
    TivSurface(std::size_t index, double delivery, Accumulator kind,
               std::shared_ptr<const std::vector<CubicSpline>> terminals, std::vector<double> deliveries,
               WeightFunction weight);

    double ttm_value(double y, double t) const;
    TivPoint ttm_accumulate(double y, double t) const;
    // Repaired increments w~_k - w~_{k-1}, k = 1..j; returns true if any was clamped.
    bool increments(double y, std::vector<double>& out) const;

    std::size_t index_;
    double delivery_;
    Accumulator kind_;
    std::shared_ptr<const std::vector<CubicSpline>> terminals_;
    std::vector<double> deliveries_;
    WeightFunction weight_;
};

/// One surface per delivery of the bundle with the chosen accumulator.
std::vector<TivSurface> build_tiv_surfaces(const MarketBundle& bundle, Accumulator acc,
                                           const WeightFunction& weight = WeightFunction::exponential());

}  // namespace cclv
