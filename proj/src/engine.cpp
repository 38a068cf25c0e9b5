#include "cclv/engine.hpp"

#include "cclv/black.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace cclv {

namespace {

constexpr double kTimeTol = 1e-12;

unsigned resolve_threads(unsigned requested, std::size_t work) {
    unsigned n = requested == 0 ? std::max(1u, std::thread::hardware_concurrency()) : requested;
    return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(1, work)));
}

}  // namespace

void CorrelationStructure::validate() const {
    if (!(std::abs(rho_1r) <= 1.0) || !(std::abs(rho_2r) <= 1.0) || rho_1r * rho_1r + rho_2r * rho_2r > 1.0) {
        throw std::invalid_argument("correlation matrix not positive semi-definite: rho_1r^2 + rho_2r^2 > 1");
    }
}

double CorrelationStructure::residual() const {
    return std::sqrt(std::max(0.0, 1.0 - rho_1r * rho_1r - rho_2r * rho_2r));
}

FuturesModel FuturesModel::from(const AndersenParams& params, const FuturesCurve& curve) {
    params.validate();
    FuturesModel m{params, {}, {}};
    for (const auto& e : curve.entries()) {
        m.deliveries.push_back(e.delivery);
        m.initial_prices.push_back(e.price);
    }
    return m;
}

StepContext StepContext::make(const FuturesModel& model, const G1ppModel& rates,
                              std::span<const LeverageSurface> leverage, double t, double dt, std::uint32_t step) {
    if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
    if (!leverage.empty() && leverage.size() != model.size()) {
        throw std::invalid_argument("need one leverage surface per delivery");
    }
    StepContext c;
    c.t = t;
    c.dt = dt;
    c.step = step;
    c.rate_moments = step_moments(rates.params(), dt);
    c.shift_integral = rates.shift().integral(t, t + dt);
    const std::size_t n = model.size();
    c.s1.assign(n, 0.0);
    c.s2.assign(n, 0.0);
    c.s_sq.assign(n, 0.0);
    c.active.assign(n, 0);
    c.surface.assign(n, nullptr);
    c.slice.assign(n, nullptr);
    for (std::size_t j = 0; j < n; ++j) {
        const double T = model.deliveries[j];
        if (!(t < T - kTimeTol)) continue;
        c.active[j] = 1;
        // A step straddling T_j only evolves F_j up to T_j.
        const double dt_j = std::min(dt, T - t);
        const double mid = t + 0.5 * dt_j;
        const double scale = std::sqrt(dt_j / dt);
        c.s1[j] = sigma1(model.params, mid, T) * scale;
        c.s2[j] = sigma2(model.params, mid, T) * scale;
        c.s_sq[j] = c.s1[j] * c.s1[j] + c.s2[j] * c.s2[j];
        if (!leverage.empty() && !leverage[j].empty()) {
            c.surface[j] = &leverage[j];
            c.slice[j] = leverage[j].slice(leverage[j].slice_index(t)).data();
        }
    }
    return c;
}

void step_system(std::span<double> log_moneyness, std::span<double> realized_var, RateState& rate,
                 const StepContext& ctx, const G1ppModel& rates, const CorrelationStructure& corr,
                 const std::array<double, 4>& z) {
    const double z_r = corr.rho_1r * z[0] + corr.rho_2r * z[1] + corr.residual() * z[2];
    rate = rates.step(rate, ctx.rate_moments, ctx.shift_integral, z_r, z[3]);
    const double sqdt = std::sqrt(ctx.dt);
    const std::size_t n = log_moneyness.size();
    for (std::size_t j = 0; j < n; ++j) {
        if (!ctx.active[j]) continue;
        const double L = ctx.surface[j] ? ctx.surface[j]->interpolate(ctx.slice[j], log_moneyness[j]) : 1.0;
        const double incr = -0.5 * L * L * ctx.s_sq[j] * ctx.dt + L * sqdt * (ctx.s1[j] * z[0] + ctx.s2[j] * z[1]);
        log_moneyness[j] += incr;
        realized_var[j] += incr * incr;
    }
}

std::vector<double> make_time_grid(std::vector<double> required, double max_dt) {
    if (!(max_dt > 0.0)) throw std::invalid_argument("max_dt must be positive");
    for (double t : required) {
        if (!(t > 0.0) || !std::isfinite(t)) throw std::invalid_argument("grid times must be positive");
    }
    std::sort(required.begin(), required.end());
    std::vector<double> knots;
    for (double t : required) {
        if (knots.empty() || t - knots.back() > kTimeTol) knots.push_back(t);
    }
    std::vector<double> grid;
    double prev = 0.0;
    for (double t : knots) {
        const auto pieces = static_cast<std::size_t>(std::ceil((t - prev) / max_dt - 1e-9));
        for (std::size_t k = 1; k < pieces; ++k) grid.push_back(prev + (t - prev) * static_cast<double>(k) / pieces);
        grid.push_back(t);
        prev = t;
    }
    return grid;
}

std::size_t PathBlock::node(double t) const {
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (std::abs(times[i] - t) <= 1e-9) return i;
    }
    throw std::invalid_argument("time " + std::to_string(t) + " is not a recorded node");
}

std::span<const double> PathBlock::futures_at(std::size_t node, std::size_t j) const {
    return {futures.data() + (node * n_deliveries + j) * n_paths, n_paths};
}

std::span<const double> PathBlock::realized_var_at(std::size_t node, std::size_t j) const {
    return {realized_var.data() + (node * n_deliveries + j) * n_paths, n_paths};
}

std::span<const double> PathBlock::discount_at(std::size_t node) const {
    return {discount.data() + node * n_paths, n_paths};
}

std::span<const double> PathBlock::short_rate_at(std::size_t node) const {
    return {short_rate.data() + node * n_paths, n_paths};
}

McEstimate mc_estimate(std::span<const double> samples, bool antithetic) {
    const std::size_t group = antithetic ? 2 : 1;
    if (samples.size() < 2 * group || samples.size() % group != 0) {
        throw std::invalid_argument("not enough samples for a standard error");
    }
    const std::size_t n = samples.size() / group;
    double mean = 0.0;
    double m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = antithetic ? 0.5 * (samples[2 * i] + samples[2 * i + 1]) : samples[i];
        const double delta = v - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta * (v - mean);
    }
    const double var = m2 / static_cast<double>(n - 1);
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

PathSimulator::PathSimulator(FuturesModel model, G1ppModel rates, CorrelationStructure corr, std::size_t n_paths,
                             bool antithetic, std::uint64_t seed, Stream stream, unsigned threads)
    : model_(std::move(model)),
      rates_(std::move(rates)),
      corr_(corr),
      n_base_(n_paths),
      n_total_(antithetic ? 2 * n_paths : n_paths),
      antithetic_(antithetic),
      seed_(seed),
      stream_(stream),
      threads_(threads) {
    corr_.validate();
    if (n_paths == 0) throw std::invalid_argument("need at least one path");
    if (model_.deliveries.size() != model_.initial_prices.size()) throw std::invalid_argument("futures model size mismatch");
    x_.assign(n_total_ * model_.size(), 0.0);
    rv_.assign(n_total_ * model_.size(), 0.0);
    rate_.assign(n_total_, RateState{});
}

void PathSimulator::advance(std::span<const double> grid, double t_target, std::span<const LeverageSurface> leverage) {
    if (t_target < time_ - kTimeTol) throw std::invalid_argument("cannot advance backwards in time");
    std::vector<StepContext> steps;
    double t = time_;
    for (double node : grid) {
        if (node <= t + kTimeTol) continue;
        if (node > t_target + kTimeTol) break;
        steps.push_back(StepContext::make(model_, rates_, leverage, t, node - t, step_++));
        t = node;
    }
    if (std::abs(t - t_target) > 1e-9) throw std::invalid_argument("target time is not on the simulation grid");
    run_steps(steps);
    time_ = t;
}

void PathSimulator::run_steps(std::span<const StepContext> steps) {
    if (steps.empty()) return;
    const std::size_t J = model_.size();
    auto work = [&](std::size_t b0, std::size_t b1) {
        for (std::size_t b = b0; b < b1; ++b) {
            for (const auto& ctx : steps) {
                auto z = normal_block(seed_, stream_, b, ctx.step);
                const std::size_t p = antithetic_ ? 2 * b : b;
                step_system({x_.data() + p * J, J}, {rv_.data() + p * J, J}, rate_[p], ctx, rates_, corr_, z);
                if (antithetic_) {
                    for (double& v : z) v = -v;
                    step_system({x_.data() + (p + 1) * J, J}, {rv_.data() + (p + 1) * J, J}, rate_[p + 1], ctx,
                                rates_, corr_, z);
                }
            }
        }
    };
    const unsigned n_threads = resolve_threads(threads_, n_base_);
    if (n_threads == 1) {
        work(0, n_base_);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n_base_ + n_threads - 1) / n_threads;
    for (unsigned k = 0; k < n_threads; ++k) {
        const std::size_t b0 = k * chunk;
        const std::size_t b1 = std::min(n_base_, b0 + chunk);
        if (b0 >= b1) break;
        pool.emplace_back(work, b0, b1);
    }
    for (auto& th : pool) th.join();
}

void PathSimulator::futures(std::size_t j, std::vector<double>& out) const {
    const std::size_t J = model_.size();
    const double f0 = model_.initial_prices.at(j);
    out.resize(n_total_);
    for (std::size_t p = 0; p < n_total_; ++p) out[p] = f0 * std::exp(x_[p * J + j]);
}

void PathSimulator::realized_var(std::size_t j, std::vector<double>& out) const {
    const std::size_t J = model_.size();
    out.resize(n_total_);
    for (std::size_t p = 0; p < n_total_; ++p) out[p] = rv_[p * J + j];
}

void PathSimulator::discount(std::vector<double>& out) const {
    out.resize(n_total_);
    for (std::size_t p = 0; p < n_total_; ++p) out[p] = rate_[p].discount();
}

void PathSimulator::short_rate(std::vector<double>& out) const {
    out.resize(n_total_);
    for (std::size_t p = 0; p < n_total_; ++p) out[p] = rates_.short_rate(rate_[p]);
}

void PathSimulator::rate_factor(std::vector<double>& out) const {
    out.resize(n_total_);
    for (std::size_t p = 0; p < n_total_; ++p) out[p] = rate_[p].x;
}

void PathSimulator::int_r(std::vector<double>& out) const {
    out.resize(n_total_);
    for (std::size_t p = 0; p < n_total_; ++p) out[p] = rate_[p].int_r;
}

PathBlock simulate(const FuturesModel& model, const G1ppModel& rates, const CorrelationStructure& corr,
                   std::span<const LeverageSurface> leverage, const SimConfig& config) {
    if (config.time_grid.empty()) throw std::invalid_argument("empty simulation grid");
    for (std::size_t i = 0; i < config.time_grid.size(); ++i) {
        if (!(config.time_grid[i] > (i == 0 ? 0.0 : config.time_grid[i - 1]))) {
            throw std::invalid_argument("time grid must be increasing and positive");
        }
    }
    // Steps must not straddle a leverage slice boundary.
    std::vector<double> grid = config.time_grid;
    const double horizon = grid.back();
    for (const auto& surface : leverage) {
        for (double t : surface.times()) {
            if (t < horizon) grid.push_back(t);
        }
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end(), [](double a, double b) { return b - a <= 1e-9; }), grid.end());
    std::vector<double> records = config.record_times.empty() ? grid : config.record_times;
    std::sort(records.begin(), records.end());
    for (double t : records) {
        const bool on_grid = std::any_of(grid.begin(), grid.end(), [t](double g) { return std::abs(g - t) <= 1e-9; });
        if (!on_grid) throw std::invalid_argument("record time " + std::to_string(t) + " is not on the grid");
    }

    PathSimulator sim(model, rates, corr, config.n_paths, config.antithetic, config.seed, config.stream, config.threads);
    PathBlock block;
    block.n_paths = sim.n_paths();
    block.n_deliveries = model.size();
    block.antithetic = config.antithetic;
    block.initial_prices = model.initial_prices;
    block.times.push_back(0.0);
    for (double t : records) {
        if (t - block.times.back() > 1e-9) block.times.push_back(t);
    }
    const std::size_t nodes = block.times.size();
    const std::size_t P = block.n_paths;
    const std::size_t J = block.n_deliveries;
    block.futures.resize(nodes * J * P);
    block.realized_var.resize(nodes * J * P);
    block.rate_factor.resize(nodes * P);
    block.int_r.resize(nodes * P);
    block.discount.resize(nodes * P);
    block.short_rate.resize(nodes * P);

    std::vector<double> buf;
    for (std::size_t i = 0; i < nodes; ++i) {
        if (i > 0) sim.advance(grid, block.times[i], leverage);
        for (std::size_t j = 0; j < J; ++j) {
            sim.futures(j, buf);
            std::copy(buf.begin(), buf.end(), block.futures.begin() + static_cast<std::ptrdiff_t>((i * J + j) * P));
            sim.realized_var(j, buf);
            std::copy(buf.begin(), buf.end(), block.realized_var.begin() + static_cast<std::ptrdiff_t>((i * J + j) * P));
        }
        const auto at = static_cast<std::ptrdiff_t>(i * P);
        sim.rate_factor(buf);
        std::copy(buf.begin(), buf.end(), block.rate_factor.begin() + at);
        sim.int_r(buf);
        std::copy(buf.begin(), buf.end(), block.int_r.begin() + at);
        sim.discount(buf);
        std::copy(buf.begin(), buf.end(), block.discount.begin() + at);
        sim.short_rate(buf);
        std::copy(buf.begin(), buf.end(), block.short_rate.begin() + at);
    }
    return block;
}

RealizedVariance realized_variance(const PathBlock& block, std::size_t j, double t) {
    if (j >= block.n_deliveries) throw std::out_of_range("delivery index out of range");
    const auto rv = block.realized_var_at(block.node(t), j);
    RealizedVariance out;
    out.per_path.assign(rv.begin(), rv.end());
    out.estimate = mc_estimate(rv, block.antithetic);
    return out;
}

std::vector<VanillaResult> price_vanillas(const PathBlock& block, const DiscountCurve& curve,
                                          std::span<const VanillaRequest> requests) {
    std::vector<VanillaResult> out;
    std::vector<double> payoff(block.n_paths);
    for (const auto& req : requests) {
        if (req.delivery >= block.n_deliveries) throw std::out_of_range("delivery index out of range");
        if (!(req.expiry > 0.0)) throw std::invalid_argument("option expiry must be positive");
        const std::size_t node = block.node(req.expiry);
        const auto F = block.futures_at(node, req.delivery);
        const auto D = block.discount_at(node);
        const double f0 = block.initial_prices[req.delivery];
        const double K = f0 * std::exp(req.log_moneyness);
        for (std::size_t p = 0; p < block.n_paths; ++p) payoff[p] = D[p] * std::max(F[p] - K, 0.0);
        const auto est = mc_estimate(payoff, block.antithetic);
        VanillaResult r{req, K, est.mean, est.se, std::nullopt};
        try {
            r.implied_vol = implied_vol(est.mean, f0, curve.discount(req.expiry), req.log_moneyness, req.expiry);
        } catch (const ArbitrageBoundError&) {
        }
        out.push_back(r);
    }
    return out;
}

}  // namespace cclv
