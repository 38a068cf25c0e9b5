#pragma once

/**
 * @file market_data.hpp
 * @brief Futures curve, implied-vol slices and discount curve.
 *
 * All times are year fractions (ACT/365.25). Dates only appear at the load
 * boundary (valuation date, return-series dates) and are converted once.
 * Everything here is immutable after load.
 */

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cclv {

/// Raised on malformed or inconsistent market input.
class MarketDataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Days between two dates divided by 365.25.
double year_fraction(std::chrono::sys_days from, std::chrono::sys_days to);

/// Parses an ISO `YYYY-MM-DD` date.
std::chrono::sys_days parse_date(const std::string& iso);

struct FuturesEntry {
    double delivery;   // T_j in years
    double price;      // F_j(0)
    std::string label;
};

/// Futures curve F_j(0), T_j with strictly increasing delivery times.
class FuturesCurve {
public:
    FuturesCurve() = default;
    explicit FuturesCurve(std::vector<FuturesEntry> entries,
                          std::optional<std::chrono::sys_days> valuation_date = std::nullopt);

    std::size_t size() const { return entries_.size(); }
    const FuturesEntry& operator[](std::size_t j) const { return entries_[j]; }
    const std::vector<FuturesEntry>& entries() const { return entries_; }
    std::optional<std::chrono::sys_days> valuation_date() const { return valuation_date_; }

    /// Index of the contract with the given label, if any.
    std::optional<std::size_t> find(const std::string& label) const;

private:
    std::vector<FuturesEntry> entries_;
    std::optional<std::chrono::sys_days> valuation_date_;
};

struct VolQuote {
    double log_moneyness;  // y = log(K / F_j(0))
    double implied_vol;
};

/// Where a slice came from: quoted for this contract or borrowed from another.
struct SliceProvenance {
    bool borrowed = false;
    std::size_t donor = 0;  // delivery index of the quoted slice when borrowed
};

/// The single implied-vol slice available for one futures contract.
struct VolSlice {
    std::size_t delivery_index = 0;
    double expiry = 0.0;
    std::vector<VolQuote> quotes;
    SliceProvenance provenance;

    /// Throws MarketDataError when the slice breaks its invariants.
    void validate() const;
};

/// Discount curve with log-linear interpolation of P(0,t).
///
/// (0, 1) is an implicit anchor; pillars are kept exactly as supplied so the
/// curve serializes back to its input. Forwards are piecewise constant and
/// extrapolate flat beyond the last pillar.
class DiscountCurve {
public:
    struct Pillar {
        double time;
        double df;
    };

    DiscountCurve() : DiscountCurve(std::vector<Pillar>{}) {}
    explicit DiscountCurve(std::vector<Pillar> pillars);

    /// Flat continuously-compounded curve, pillars every quarter up to `horizon`.
    static DiscountCurve flat(double rate, double horizon = 30.0);

    double discount(double t) const;
    double log_discount(double t) const;
    /// f(0,t) = -d log P(0,t)/dt; at a pillar returns the forward to its right.
    double instantaneous_forward(double t) const;

    const std::vector<Pillar>& pillars() const { return pillars_; }

private:
    std::size_t segment(double t) const;

    std::vector<Pillar> pillars_;
    std::vector<double> knot_times_;  // 0 followed by pillar times
    std::vector<double> knot_logs_;   // matching log discount factors
    std::vector<double> forwards_;    // forward on [knot_i, knot_{i+1}); last repeats
};

/// Daily log-returns of constant-time-to-delivery futures (short and long tenor).
struct ReturnSeries {
    std::vector<std::chrono::sys_days> dates;
    std::vector<double> short_tenor;
    std::vector<double> long_tenor;

    void validate() const;
};

/// Validated market inputs. Slices are aligned with the futures curve: one per delivery.
struct MarketBundle {
    FuturesCurve futures;
    std::vector<VolSlice> slices;
    DiscountCurve discount;
    std::vector<std::string> warnings;
};

struct MarketFiles {
    std::filesystem::path futures;
    std::filesystem::path vols;
    std::filesystem::path discount;
    std::optional<std::chrono::sys_days> valuation_date;
};

/// Reads and validates futures.csv, vols.csv and discount.csv.
///
/// Contracts without a quoted slice borrow the next longer quoted slice, or
/// the last quoted one when no longer slice exists; this is recorded in the
/// slice provenance and as a warning.
MarketBundle load_market(const MarketFiles& files);

/// Builds a bundle from in-memory pieces with the same validation and
/// slice-borrowing rule as load_market. Quotes are keyed by contract label.
MarketBundle make_bundle(FuturesCurve futures,
                         std::vector<std::pair<std::string, std::vector<VolQuote>>> quoted,
                         DiscountCurve discount);

FuturesCurve read_futures_csv(const std::filesystem::path& path);
DiscountCurve read_discount_csv(const std::filesystem::path& path);
ReturnSeries read_returns_csv(const std::filesystem::path& path);

void write_futures_csv(const std::filesystem::path& path, const FuturesCurve& curve);
void write_discount_csv(const std::filesystem::path& path, const DiscountCurve& curve);
/// Writes quoted (non-borrowed) slices in log-moneyness form.
void write_vols_csv(const std::filesystem::path& path, const MarketBundle& bundle);
void write_returns_csv(const std::filesystem::path& path, const ReturnSeries& series);

}  // namespace cclv
