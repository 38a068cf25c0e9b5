#pragma once

/**
 * @file leverage.hpp
 * @brief Leverage functions from total implied variance.
 *
 * Deterministic rates:
 *
 *     L^2 = w_t / (B (s1^2 + s2^2))
 *
 * Stochastic rates:
 *
 *     L^2 = (C_w w_t - f(0,t) C + E[D(t) (F_j(t) - K)^+ r(t)]) / (C_w B (s1^2 + s2^2))
 *
 * with C the Black call on P(0,t) F_j(0), C_w = dC/dw and B the Dupire bracket
 * (see black.hpp). The expectation is estimated on paths driven by the slices
 * calibrated so far, so stochastic mode bootstraps one slice at a time.
 */

#include "cclv/andersen.hpp"
#include "cclv/engine.hpp"
#include "cclv/leverage_surface.hpp"
#include "cclv/market_data.hpp"
#include "cclv/rates.hpp"
#include "cclv/tiv.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cclv {

struct LeverageClamps {
    double l_min = 0.01;
    double l_max = 10.0;
    double denominator_floor = 1e-8;
};

/// Time at which a slice's local-volatility part is evaluated.
enum class SliceEvaluation {
    Left,      // at t_i itself
    Midpoint,  // at the middle of the interval where the slice is used
};

SliceEvaluation parse_slice_evaluation(const std::string& name);  // left|midpoint
std::string to_string(SliceEvaluation e);

struct CalibrationConfig {
    std::vector<double> slice_times;   // shared grid; empty: uniform at slices_per_year
    double slices_per_year = 24.0;
    std::size_t y_nodes = 61;
    double y_margin = 0.25;            // quote range widened by this fraction on each side
    SliceEvaluation evaluation = SliceEvaluation::Midpoint;
    LeverageClamps clamps;
    double max_clamp_fraction = 0.2;   // abort when a slice clamps more nodes than this

    // Stochastic-rate bootstrap only.
    std::size_t mc_paths = 1000;       // before antithetics
    bool antithetic = true;
    std::uint64_t seed = 12345;
    double max_dt = 1.0 / 365.0;
    double density_floor = 1e-3;       // below this C_w B / (P F0) the deterministic value is used
    std::size_t min_itm_paths = 10;    // fewer calibration paths in the money: deterministic value
    unsigned threads = 0;

    void validate() const;
};

/// Slice times t_i <= horizon: config.slice_times, or k / slices_per_year.
std::vector<double> slice_grid(const CalibrationConfig& config, double horizon);

/// y-grid for a slice: quote range widened by margin on each side.
UniformGrid leverage_grid(const VolSlice& slice, std::size_t nodes, double margin);

struct LeverageValue {
    double l2 = 0.0;          // after clamping
    double raw = 0.0;         // before clamping
    double l2_se = 0.0;       // MC standard error of raw (stochastic mode)
    bool clamped = false;
    bool arbitrage = false;   // Dupire bracket at or below the floor
    bool fallback = false;    // stochastic node replaced by the deterministic value
};

LeverageValue leverage_det(const TivSurface& tiv, const AndersenParams& params, double y, double t,
                           const LeverageClamps& clamps = {});

/// Per-strike E[D(t) (F(t) - K)^+ r(t)] with K = f0 e^y.
std::vector<McEstimate> rate_correction_mc(std::span<const double> futures, std::span<const double> discount,
                                           std::span<const double> short_rate, bool antithetic, double f0,
                                           std::span<const double> y_grid);

/// The rate terms -f(0,t) C + E[...] are taken at t; the remaining terms at
/// t_local (defaults to t).
LeverageValue leverage_sto(const TivSurface& tiv, const AndersenParams& params, const DiscountCurve& curve,
                           double f0, const McEstimate& rate_correction, double y, double t,
                           const LeverageClamps& clamps = {}, double density_floor = 0.0,
                           std::optional<double> t_local = std::nullopt);

/// Evaluation time of each slice in `times` (slices used up to `delivery`).
std::vector<double> evaluation_times(const std::vector<double>& times, double delivery, SliceEvaluation rule);

struct SliceDiagnostics {
    std::size_t delivery;
    double t;
    std::size_t nodes;
    std::size_t clamped;
    std::size_t arbitrage;
    std::size_t fallback;
};

struct CalibrationResult {
    std::vector<LeverageSurface> surfaces;
    std::vector<SliceDiagnostics> diagnostics;
    /// Standard error of L^2 per delivery, slice and node (zero in deterministic mode).
    std::vector<std::vector<std::vector<double>>> l2_se;
    /// Calibration paths ending in the money, per delivery, slice and node (stochastic mode).
    std::vector<std::vector<std::vector<std::size_t>>> itm_paths;
    std::vector<std::string> warnings;
};

/// Calibrates every delivery slice by slice. Without `rates` the deterministic
/// formula is used throughout; with it the first slice is deterministic and
/// later ones are bootstrapped by simulation.
CalibrationResult calibrate_all(const MarketBundle& bundle, const AndersenParams& params,
                                const std::vector<TivSurface>& tiv, const CalibrationConfig& config,
                                const std::optional<G1ppParams>& rates = std::nullopt);

}  // namespace cclv
