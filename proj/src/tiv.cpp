#include "cclv/tiv.hpp"

#include "cclv/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cclv {

Accumulator parse_accumulator(std::string_view name) {
    if (name == "linear") return Accumulator::Linear;
    if (name == "quadratic") return Accumulator::Quadratic;
    if (name == "ttm-iv") return Accumulator::TtmIv;
    if (name == "exp-weighted") return Accumulator::Weighted;
    throw std::invalid_argument("unknown accumulator '" + std::string(name) + "'");
}

std::string to_string(Accumulator acc) {
    switch (acc) {
        case Accumulator::Linear: return "linear";
        case Accumulator::Quadratic: return "quadratic";
        case Accumulator::TtmIv: return "ttm-iv";
        case Accumulator::Weighted: return "exp-weighted";
    }
    return "unknown";
}

WeightFunction WeightFunction::exponential() {
    constexpr double denom = std::numbers::e - 1.0;
    return {[](double x) { return std::expm1(x) / denom; }, [](double x) { return std::exp(x) / denom; }};
}

void WeightFunction::validate() const {
    if (!f || !df) throw std::invalid_argument("weight function not set");
    if (std::abs(f(0.0)) > 1e-12 || std::abs(f(1.0) - 1.0) > 1e-12) {
        throw std::invalid_argument("weight function must satisfy f(0) = 0 and f(1) = 1");
    }
    double prev = f(0.0);
    for (int i = 1; i <= 1000; ++i) {
        const double cur = f(i / 1000.0);
        if (cur < prev) throw std::invalid_argument("weight function must be nondecreasing");
        prev = cur;
    }
}

CubicSpline terminal_tiv(const VolSlice& slice) {
    slice.validate();
    std::vector<double> y;
    std::vector<double> w;
    for (const auto& q : slice.quotes) {
        y.push_back(q.log_moneyness);
        w.push_back(q.implied_vol * q.implied_vol * slice.expiry);
    }
    CubicSpline spline(y, w);
    spline.set_extrapolation_slopes(std::clamp(spline.end_slope_left(), -2.0, 0.0),
                                    std::clamp(spline.end_slope_right(), 0.0, 2.0));

    // The spline may undershoot between knots; total variance must stay positive.
    const double lo = spline.front();
    const double hi = spline.back();
    for (int i = 0; i <= 2000; ++i) {
        if (!(spline(lo + (hi - lo) * i / 2000.0) > 0.0)) {
            throw ModelError("terminal total implied variance is not positive inside the quote range");
        }
    }
    return spline;
}

TivSurface::TivSurface(std::size_t index, double delivery, Accumulator kind,
                       std::shared_ptr<const std::vector<CubicSpline>> terminals, std::vector<double> deliveries,
                       WeightFunction weight)
    : index_(index),
      delivery_(delivery),
      kind_(kind),
      terminals_(std::move(terminals)),
      deliveries_(std::move(deliveries)),
      weight_(std::move(weight)) {
    if (!(delivery_ > 0.0)) throw std::invalid_argument("delivery must be positive");
}

TivSurface TivSurface::linear(std::size_t index, double delivery, CubicSpline terminal) {
    auto t = std::make_shared<const std::vector<CubicSpline>>(std::vector<CubicSpline>{std::move(terminal)});
    return TivSurface(index, delivery, Accumulator::Linear, std::move(t), {delivery}, {});
}

TivSurface TivSurface::quadratic(std::size_t index, double delivery, CubicSpline terminal) {
    auto t = std::make_shared<const std::vector<CubicSpline>>(std::vector<CubicSpline>{std::move(terminal)});
    return TivSurface(index, delivery, Accumulator::Quadratic, std::move(t), {delivery}, {});
}

TivSurface TivSurface::weighted(std::size_t index, double delivery, CubicSpline terminal, WeightFunction f) {
    f.validate();
    auto t = std::make_shared<const std::vector<CubicSpline>>(std::vector<CubicSpline>{std::move(terminal)});
    return TivSurface(index, delivery, Accumulator::Weighted, std::move(t), {delivery}, std::move(f));
}

TivSurface TivSurface::ttm_iv(std::size_t index, std::vector<double> deliveries, std::vector<CubicSpline> terminals) {
    if (deliveries.empty() || deliveries.size() != terminals.size()) {
        throw std::invalid_argument("TTM-IV needs one terminal slice per delivery T_1..T_j");
    }
    for (std::size_t k = 0; k < deliveries.size(); ++k) {
        if (!(deliveries[k] > (k == 0 ? 0.0 : deliveries[k - 1]))) {
            throw std::invalid_argument("TTM-IV deliveries must be positive and increasing");
        }
    }
    const double delivery = deliveries.back();
    auto t = std::make_shared<const std::vector<CubicSpline>>(std::move(terminals));
    return TivSurface(index, delivery, Accumulator::TtmIv, std::move(t), std::move(deliveries), {});
}

std::vector<double> TivSurface::kinks() const {
    std::vector<double> out;
    if (kind_ != Accumulator::TtmIv) return out;
    for (std::size_t k = deliveries_.size() - 1; k-- > 0;) out.push_back(delivery_ - deliveries_[k]);
    return out;
}

bool TivSurface::increments(double y, std::vector<double>& out) const {
    const auto& w = *terminals_;
    const std::size_t j = w.size();
    out.resize(j);
    double prev = 0.0;
    for (std::size_t k = 0; k < j; ++k) {
        const double cur = w[k](y);
        out[k] = cur - prev;
        prev = cur;
    }
    const double target = prev;
    if (std::all_of(out.begin(), out.end(), [](double d) { return d >= kMinTivIncrement; })) return false;

    // Clamp small/negative increments to the floor and shrink the others
    // proportionally so the increments still sum to w~_j(y).
    std::vector<bool> clamped(j, false);
    for (int pass = 0; pass < static_cast<int>(j) + 1; ++pass) {
        std::size_t n_clamped = 0;
        double free_sum = 0.0;
        for (std::size_t k = 0; k < j; ++k) {
            if (out[k] < kMinTivIncrement) clamped[k] = true;
            if (clamped[k]) {
                ++n_clamped;
            } else {
                free_sum += out[k];
            }
        }
        const double budget = target - kMinTivIncrement * static_cast<double>(n_clamped);
        if (!(free_sum > 0.0) || !(budget > 0.0)) {
            throw ModelError("TTM-IV accumulator cannot be made monotone: no positive increments left");
        }
        const double scale = budget / free_sum;
        bool stable = true;
        for (std::size_t k = 0; k < j; ++k) {
            if (clamped[k]) {
                out[k] = kMinTivIncrement;
            } else {
                out[k] *= scale;
                if (out[k] < kMinTivIncrement) stable = false;
            }
        }
        if (stable) return true;
        // Increments pushed below the floor by the rescale: clamp them too and retry.
    }
    throw ModelError("TTM-IV monotonicity repair did not settle");
}

bool TivSurface::repaired_at(double y) const {
    if (kind_ != Accumulator::TtmIv) return false;
    std::vector<double> d;
    return increments(y, d);
}

double TivSurface::ttm_value(double y, double t) const {
    std::vector<double> d;
    increments(y, d);
    const std::size_t j = deliveries_.size();
    // Smallest k (1-based) with T_j - T_k <= t, i.e. T_k >= T_j - t.
    const double threshold = delivery_ - t;
    std::size_t k = 0;
    while (k < j && deliveries_[k] < threshold) ++k;
    k = std::min(k, j - 1);
    double w = 0.0;
    for (std::size_t i = k + 1; i < j; ++i) w += d[i];
    const double t_prev = k == 0 ? 0.0 : deliveries_[k - 1];
    const double span = deliveries_[k] - t_prev;
    return w + d[k] * (t - (delivery_ - deliveries_[k])) / span;
}

TivPoint TivSurface::ttm_accumulate(double y, double t) const {
    const auto& w = *terminals_;
    const std::size_t j = deliveries_.size();
    std::vector<double> d;
    const bool repaired = increments(y, d);

    const double threshold = delivery_ - t;
    std::size_t k = 0;
    while (k < j && deliveries_[k] < threshold) ++k;
    k = std::min(k, j - 1);
    const double t_prev = k == 0 ? 0.0 : deliveries_[k - 1];
    const double span = deliveries_[k] - t_prev;
    const double frac = (t - (delivery_ - deliveries_[k])) / span;

    TivPoint p{};
    for (std::size_t i = k + 1; i < j; ++i) p.w += d[i];
    p.w += d[k] * frac;
    p.dwdt = d[k] / span;

    if (!repaired) {
        // w = w~_j - w~_k + (w~_k - w~_{k-1}) frac, differentiated spline by spline.
        const auto top = w[j - 1].eval(y);
        const auto cur = w[k].eval(y);
        const CubicSpline::Point prev = k == 0 ? CubicSpline::Point{0.0, 0.0, 0.0} : w[k - 1].eval(y);
        p.dwdy = top.d1 - cur.d1 + (cur.d1 - prev.d1) * frac;
        p.d2wdy2 = top.d2 - cur.d2 + (cur.d2 - prev.d2) * frac;
    } else {
        // The repair rescales increments y by y; differentiate numerically.
        constexpr double h = 1e-4;
        const double up = ttm_value(y + h, t);
        const double dn = ttm_value(y - h, t);
        p.dwdy = (up - dn) / (2.0 * h);
        p.d2wdy2 = (up - 2.0 * p.w + dn) / (h * h);
    }
    return p;
}

TivPoint TivSurface::accumulate(double y, double t) const {
    if (!(t > 0.0)) throw std::invalid_argument("total implied variance needs t > 0");
    if (t > delivery_ * (1.0 + 1e-12)) throw std::invalid_argument("total implied variance queried beyond delivery");
    t = std::min(t, delivery_);

    if (kind_ == Accumulator::TtmIv) return ttm_accumulate(y, t);

    const auto s = terminal().eval(y);
    const double x = t / delivery_;
    double factor = 0.0;
    double dfactor = 0.0;  // d factor / dt
    switch (kind_) {
        case Accumulator::Linear:
            factor = x;
            dfactor = 1.0 / delivery_;
            break;
        case Accumulator::Quadratic:
            factor = x * x;
            dfactor = 2.0 * t / (delivery_ * delivery_);
            break;
        case Accumulator::Weighted:
            factor = weight_.f(x);
            dfactor = weight_.df(x) / delivery_;
            break;
        case Accumulator::TtmIv: break;
    }
    return {s.value * factor, s.value * dfactor, s.d1 * factor, s.d2 * factor};
}

std::vector<TivSurface> build_tiv_surfaces(const MarketBundle& bundle, Accumulator acc, const WeightFunction& weight) {
    std::vector<CubicSpline> terminals;
    terminals.reserve(bundle.slices.size());
    for (const auto& slice : bundle.slices) terminals.push_back(terminal_tiv(slice));

    std::vector<TivSurface> out;
    for (std::size_t j = 0; j < bundle.futures.size(); ++j) {
        const double delivery = bundle.futures[j].delivery;
        switch (acc) {
            case Accumulator::Linear: out.push_back(TivSurface::linear(j, delivery, terminals[j])); break;
            case Accumulator::Quadratic: out.push_back(TivSurface::quadratic(j, delivery, terminals[j])); break;
            case Accumulator::Weighted: out.push_back(TivSurface::weighted(j, delivery, terminals[j], weight)); break;
            case Accumulator::TtmIv: {
                std::vector<double> deliveries;
                for (std::size_t k = 0; k <= j; ++k) deliveries.push_back(bundle.futures[k].delivery);
                std::vector<CubicSpline> slices(terminals.begin(), terminals.begin() + static_cast<std::ptrdiff_t>(j + 1));
                out.push_back(TivSurface::ttm_iv(j, std::move(deliveries), std::move(slices)));
                break;
            }
        }
    }
    return out;
}

}  // namespace cclv
