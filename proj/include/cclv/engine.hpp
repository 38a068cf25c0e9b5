#pragma once

/**
 * @file engine.hpp
 * @brief Joint Monte-Carlo simulation of all futures deliveries and the short rate.
 *
 * Each delivery is stepped in log space,
 *
 *     log F_j += -1/2 L^2 (s1^2 + s2^2) dt + L (s1 dW1 + s2 dW2),
 *
 * with L = L_j(log(F_j / F_j(0)), t) frozen at the start of the step and the
 * backbone vols taken at the step midpoint. W1 and W2 are independent; the
 * rate Brownian is W_r = rho_1r W1 + rho_2r W2 + sqrt(1 - rho_1r^2 - rho_2r^2) W3.
 * Deliveries stop evolving at their delivery date.
 *
 * Normals come from counter-based streams keyed by (seed, stream, path, step),
 * so any thread split produces the same paths. With antithetics, paths 2p and
 * 2p+1 share draws with opposite signs.
 */

#include "cclv/andersen.hpp"
#include "cclv/leverage_surface.hpp"
#include "cclv/market_data.hpp"
#include "cclv/rates.hpp"
#include "cclv/rng.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace cclv {

struct CorrelationStructure {
    double rho_1r = 0.0;
    double rho_2r = 0.0;

    /// PSD iff rho_1r^2 + rho_2r^2 <= 1.
    void validate() const;
    double residual() const;
};

/// Backbone plus initial curve: what the engine needs about the futures.
struct FuturesModel {
    AndersenParams params;
    std::vector<double> deliveries;
    std::vector<double> initial_prices;

    static FuturesModel from(const AndersenParams& params, const FuturesCurve& curve);
    std::size_t size() const { return deliveries.size(); }
};

/// Shared, per-step inputs (identical for every path).
struct StepContext {
    double t = 0.0;
    double dt = 0.0;
    std::uint32_t step = 0;
    StepMoments rate_moments{};
    double shift_integral = 0.0;
    std::vector<double> s1, s2, s_sq;              // per delivery at t + dt/2
    std::vector<char> active;                      // t < T_j
    std::vector<const LeverageSurface*> surface;   // null: L = 1
    std::vector<const double*> slice;              // leverage values for this step

    static StepContext make(const FuturesModel& model, const G1ppModel& rates,
                            std::span<const LeverageSurface> leverage, double t, double dt, std::uint32_t step);
};

/// One step for one path. `log_moneyness` and `realized_var` are per delivery.
void step_system(std::span<double> log_moneyness, std::span<double> realized_var, RateState& rate,
                 const StepContext& ctx, const G1ppModel& rates, const CorrelationStructure& corr,
                 const std::array<double, 4>& z);

struct SimConfig {
    std::size_t n_paths = 10000;      // before antithetics
    std::vector<double> time_grid;    // increasing, > 0
    std::uint64_t seed = 42;
    bool antithetic = true;
    Stream stream = Stream::Pricing;
    unsigned threads = 0;             // 0: hardware concurrency
    std::vector<double> record_times; // subset of the grid; empty records every node

    std::size_t total_paths() const { return antithetic ? 2 * n_paths : n_paths; }
};

/// Increasing grid containing every `required` time, with steps <= max_dt.
std::vector<double> make_time_grid(std::vector<double> required, double max_dt);

/// Recorded simulation output. Node 0 is t = 0.
struct PathBlock {
    std::vector<double> times;
    std::size_t n_paths = 0;
    std::size_t n_deliveries = 0;
    bool antithetic = false;
    std::vector<double> initial_prices;
    std::vector<double> futures;       // [node][delivery][path]
    std::vector<double> realized_var;  // [node][delivery][path]
    std::vector<double> rate_factor;   // [node][path]
    std::vector<double> int_r;         // [node][path]
    std::vector<double> discount;      // [node][path]
    std::vector<double> short_rate;    // [node][path]

    /// Node index of t; throws if t is not a recorded time.
    std::size_t node(double t) const;
    std::span<const double> futures_at(std::size_t node, std::size_t j) const;
    std::span<const double> realized_var_at(std::size_t node, std::size_t j) const;
    std::span<const double> discount_at(std::size_t node) const;
    std::span<const double> short_rate_at(std::size_t node) const;
    /// Antithetic pair id of a path (the path itself without antithetics).
    std::size_t pair_id(std::size_t path) const { return antithetic ? path / 2 : path; }
};

struct McEstimate {
    double mean = 0.0;
    double se = 0.0;
};

/// Sample mean and standard error; antithetic pairs are averaged first.
McEstimate mc_estimate(std::span<const double> samples, bool antithetic);

/// Incremental simulator used by the bootstrap calibration and by simulate().
class PathSimulator {
public:
    PathSimulator(FuturesModel model, G1ppModel rates, CorrelationStructure corr, std::size_t n_paths,
                  bool antithetic, std::uint64_t seed, Stream stream, unsigned threads = 0);

    /// Steps along `grid` nodes in (time(), t_target] using the given leverage.
    void advance(std::span<const double> grid, double t_target, std::span<const LeverageSurface> leverage);

    double time() const { return time_; }
    std::size_t n_paths() const { return n_total_; }
    bool antithetic() const { return antithetic_; }
    const FuturesModel& model() const { return model_; }
    const G1ppModel& rates() const { return rates_; }

    /// Gathers per-path values (length n_paths()).
    void futures(std::size_t j, std::vector<double>& out) const;
    void realized_var(std::size_t j, std::vector<double>& out) const;
    void discount(std::vector<double>& out) const;
    void short_rate(std::vector<double>& out) const;
    void rate_factor(std::vector<double>& out) const;
    void int_r(std::vector<double>& out) const;

private:
    void run_steps(std::span<const StepContext> steps);

    FuturesModel model_;
    G1ppModel rates_;
    CorrelationStructure corr_;
    std::size_t n_base_;
    std::size_t n_total_;
    bool antithetic_;
    std::uint64_t seed_;
    Stream stream_;
    unsigned threads_;
    double time_ = 0.0;
    std::uint32_t step_ = 0;
    std::vector<double> x_;    // [path][delivery] log-moneyness
    std::vector<double> rv_;   // [path][delivery]
    std::vector<RateState> rate_;
};

/// Full simulation recording config.record_times (or every grid node). Leverage
/// slice times are added to the stepping grid.
PathBlock simulate(const FuturesModel& model, const G1ppModel& rates, const CorrelationStructure& corr,
                   std::span<const LeverageSurface> leverage, const SimConfig& config);

struct RealizedVariance {
    std::vector<double> per_path;
    McEstimate estimate;
};

RealizedVariance realized_variance(const PathBlock& block, std::size_t j, double t);

struct VanillaRequest {
    std::size_t delivery;
    double expiry;
    double log_moneyness;  // relative to F_j(0)
};

struct VanillaResult {
    VanillaRequest request;
    double strike;
    double price;
    double se;
    std::optional<double> implied_vol;  // empty when the price has no implied vol
};

/// Discounted call prices E[D(t) (F_j(t) - K)^+] with SE and Black implied vol
/// (using P(0,t) from `curve`).
std::vector<VanillaResult> price_vanillas(const PathBlock& block, const DiscountCurve& curve,
                                          std::span<const VanillaRequest> requests);

}  // namespace cclv
