#include "cclv/market_data.hpp"

#include "cclv/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace cclv {

double year_fraction(std::chrono::sys_days from, std::chrono::sys_days to) {
    return static_cast<double>((to - from).count()) / 365.25;
}

std::chrono::sys_days parse_date(const std::string& iso) {
    int y = 0;
    unsigned m = 0;
    unsigned d = 0;
    char dash1 = 0;
    char dash2 = 0;
    std::istringstream in(iso);
    in >> y >> dash1 >> m >> dash2 >> d;
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!in || dash1 != '-' || dash2 != '-' || !ymd.ok() || !in.eof()) {
        throw MarketDataError("invalid date '" + iso + "' (expected YYYY-MM-DD)");
    }
    return std::chrono::sys_days{ymd};
}

// ---------------------------------------------------------------------------
// FuturesCurve

FuturesCurve::FuturesCurve(std::vector<FuturesEntry> entries,
                           std::optional<std::chrono::sys_days> valuation_date)
    : entries_(std::move(entries)), valuation_date_(valuation_date) {
    if (entries_.empty()) throw MarketDataError("empty futures curve");
    for (std::size_t j = 0; j < entries_.size(); ++j) {
        const auto& e = entries_[j];
        if (!std::isfinite(e.delivery) || e.delivery <= 0.0) {
            throw MarketDataError("delivery time must be positive for '" + e.label + "'");
        }
        if (!std::isfinite(e.price) || e.price <= 0.0) {
            throw MarketDataError("futures price must be positive for '" + e.label + "'");
        }
        if (j > 0 && !(e.delivery > entries_[j - 1].delivery)) {
            throw MarketDataError("non-increasing deliveries at '" + e.label + "'");
        }
        for (std::size_t k = 0; k < j; ++k) {
            if (entries_[k].label == e.label) throw MarketDataError("duplicate contract label '" + e.label + "'");
        }
    }
}

std::optional<std::size_t> FuturesCurve::find(const std::string& label) const {
    for (std::size_t j = 0; j < entries_.size(); ++j) {
        if (entries_[j].label == label) return j;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// VolSlice

void VolSlice::validate() const {
    if (!(expiry > 0.0) || !std::isfinite(expiry)) throw MarketDataError("vol slice expiry must be positive");
    if (quotes.size() < 3) throw MarketDataError("vol slice needs at least 3 quotes");
    for (std::size_t i = 0; i < quotes.size(); ++i) {
        const auto& q = quotes[i];
        if (!std::isfinite(q.log_moneyness)) throw MarketDataError("non-finite log-moneyness");
        if (!(q.implied_vol > 0.0 && q.implied_vol < 5.0)) {
            throw MarketDataError("implied vol outside (0, 5)");
        }
        if (i > 0 && !(q.log_moneyness > quotes[i - 1].log_moneyness)) {
            throw MarketDataError("log-moneyness must be strictly increasing within a slice");
        }
    }
}

// ---------------------------------------------------------------------------
// DiscountCurve

DiscountCurve::DiscountCurve(std::vector<Pillar> pillars) : pillars_(std::move(pillars)) {
    knot_times_.push_back(0.0);
    knot_logs_.push_back(0.0);
    for (std::size_t i = 0; i < pillars_.size(); ++i) {
        const auto& p = pillars_[i];
        if (!std::isfinite(p.time) || p.time < 0.0) throw MarketDataError("discount pillar time must be >= 0");
        if (!std::isfinite(p.df) || p.df <= 0.0) throw MarketDataError("discount factor must be positive");
        if (i > 0 && !(p.time > pillars_[i - 1].time)) {
            throw MarketDataError("discount pillar times must be strictly increasing");
        }
        if (p.time == 0.0) {
            if (p.df != 1.0) throw MarketDataError("P(0,0) must equal 1");
            continue;
        }
        knot_times_.push_back(p.time);
        knot_logs_.push_back(std::log(p.df));
    }
    for (std::size_t i = 0; i + 1 < knot_times_.size(); ++i) {
        forwards_.push_back(-(knot_logs_[i + 1] - knot_logs_[i]) / (knot_times_[i + 1] - knot_times_[i]));
    }
    forwards_.push_back(forwards_.empty() ? 0.0 : forwards_.back());
}

DiscountCurve DiscountCurve::flat(double rate, double horizon) {
    std::vector<Pillar> pillars{{0.0, 1.0}};
    const int n = static_cast<int>(std::ceil(horizon * 4.0));
    for (int i = 1; i <= n; ++i) {
        const double t = 0.25 * i;
        pillars.push_back({t, std::exp(-rate * t)});
    }
    return DiscountCurve(std::move(pillars));
}

std::size_t DiscountCurve::segment(double t) const {
    auto it = std::upper_bound(knot_times_.begin(), knot_times_.end(), t);
    return static_cast<std::size_t>(std::distance(knot_times_.begin(), it)) - 1;
}

double DiscountCurve::log_discount(double t) const {
    if (t < 0.0) throw std::invalid_argument("discount curve queried at negative time");
    const std::size_t i = segment(t);
    return knot_logs_[i] - forwards_[i] * (t - knot_times_[i]);
}

double DiscountCurve::discount(double t) const { return std::exp(log_discount(t)); }

double DiscountCurve::instantaneous_forward(double t) const {
    if (t < 0.0) throw std::invalid_argument("forward rate queried at negative time");
    return forwards_[segment(t)];
}

// ---------------------------------------------------------------------------
// ReturnSeries

void ReturnSeries::validate() const {
    if (dates.size() != short_tenor.size() || dates.size() != long_tenor.size()) {
        throw MarketDataError("return series columns have different lengths");
    }
    for (std::size_t i = 0; i < dates.size(); ++i) {
        if (!std::isfinite(short_tenor[i]) || !std::isfinite(long_tenor[i])) {
            throw MarketDataError("non-finite return");
        }
    }
}

// ---------------------------------------------------------------------------
// Loading

namespace {

template <class F>
auto with_context(const std::filesystem::path& path, F&& body) {
    try {
        return body();
    } catch (const MarketDataError&) {
        throw;
    } catch (const std::exception& e) {
        throw MarketDataError(path.string() + ": " + e.what());
    }
}

}  // namespace

FuturesCurve read_futures_csv(const std::filesystem::path& path) {
    return with_context(path, [&] {
        const auto table = csv::read(path);
        const auto c_label = table.column("label");
        const auto c_delivery = table.column("delivery_years");
        const auto c_price = table.column("price");
        std::vector<FuturesEntry> entries;
        for (const auto& row : table.rows) {
            entries.push_back({csv::to_double(row[c_delivery]), csv::to_double(row[c_price]), row[c_label]});
        }
        return FuturesCurve(std::move(entries));
    });
}

DiscountCurve read_discount_csv(const std::filesystem::path& path) {
    return with_context(path, [&] {
        const auto table = csv::read(path);
        const auto c_t = table.column("time_years");
        const auto c_df = table.column("df");
        std::vector<DiscountCurve::Pillar> pillars;
        for (const auto& row : table.rows) {
            pillars.push_back({csv::to_double(row[c_t]), csv::to_double(row[c_df])});
        }
        return DiscountCurve(std::move(pillars));
    });
}

ReturnSeries read_returns_csv(const std::filesystem::path& path) {
    return with_context(path, [&] {
        const auto table = csv::read(path);
        const auto c_date = table.column("date");
        const auto c_short = table.column("short_return");
        const auto c_long = table.column("long_return");
        ReturnSeries series;
        for (const auto& row : table.rows) {
            series.dates.push_back(parse_date(row[c_date]));
            series.short_tenor.push_back(csv::to_double(row[c_short]));
            series.long_tenor.push_back(csv::to_double(row[c_long]));
        }
        series.validate();
        return series;
    });
}

MarketBundle make_bundle(FuturesCurve futures,
                         std::vector<std::pair<std::string, std::vector<VolQuote>>> quoted,
                         DiscountCurve discount) {
    MarketBundle bundle;
    const std::size_t n = futures.size();
    std::vector<std::optional<VolSlice>> by_delivery(n);
    for (auto& [label, quotes] : quoted) {
        auto j = futures.find(label);
        if (!j) throw MarketDataError("vol slice for unknown contract '" + label + "'");
        if (by_delivery[*j]) throw MarketDataError("more than one vol slice for '" + label + "'");
        VolSlice slice;
        slice.delivery_index = *j;
        slice.expiry = futures[*j].delivery;
        slice.quotes = std::move(quotes);
        try {
            slice.validate();
        } catch (const MarketDataError& e) {
            throw MarketDataError("slice '" + label + "': " + e.what());
        }
        by_delivery[*j] = std::move(slice);
    }
    if (std::none_of(by_delivery.begin(), by_delivery.end(), [](const auto& s) { return s.has_value(); })) {
        throw MarketDataError("no implied-vol slices");
    }
    for (std::size_t j = 0; j < n; ++j) {
        if (by_delivery[j]) {
            bundle.slices.push_back(*by_delivery[j]);
            continue;
        }
        std::optional<std::size_t> donor;
        for (std::size_t k = j + 1; k < n && !donor; ++k) {
            if (by_delivery[k]) donor = k;
        }
        for (std::size_t k = j; k-- > 0 && !donor;) {
            if (by_delivery[k]) donor = k;
        }
        VolSlice slice = *by_delivery[*donor];
        slice.delivery_index = j;
        slice.expiry = futures[j].delivery;
        slice.provenance = {true, *donor};
        bundle.warnings.push_back("contract '" + futures[j].label + "' has no vol slice; borrow slice " +
                                  std::to_string(*donor + 1) + " ('" + futures[*donor].label + "')");
        bundle.slices.push_back(std::move(slice));
    }
    bundle.futures = std::move(futures);
    bundle.discount = std::move(discount);
    return bundle;
}

MarketBundle load_market(const MarketFiles& files) {
    auto futures = read_futures_csv(files.futures);
    if (files.valuation_date) futures = FuturesCurve(futures.entries(), files.valuation_date);
    auto discount = read_discount_csv(files.discount);

    std::vector<std::string> warnings;
    auto quoted = with_context(files.vols, [&] {
        const auto table = csv::read(files.vols);
        const auto c_label = table.column("label");
        const auto c_expiry = table.column("expiry_years");
        const auto c_vol = table.column("implied_vol");
        const bool by_strike = !table.has_column("log_moneyness");
        const auto c_coord = by_strike ? table.column("strike") : table.column("log_moneyness");
        std::vector<std::pair<std::string, std::vector<VolQuote>>> out;
        std::map<std::string, std::size_t> index;
        std::map<std::string, double> expiries;
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            const auto& row = table.rows[r];
            const auto& label = row[c_label];
            auto j = futures.find(label);
            if (!j) throw MarketDataError("vol quote for unknown contract '" + label + "'");
            double coord = csv::to_double(row[c_coord]);
            if (by_strike) {
                if (!(coord > 0.0)) throw MarketDataError("strike must be positive");
                coord = std::log(coord / futures[*j].price);
            }
            const double expiry = csv::to_double(row[c_expiry]);
            auto [it, inserted] = index.try_emplace(label, out.size());
            if (inserted) {
                out.push_back({label, {}});
                expiries[label] = expiry;
                if (std::abs(expiry - futures[*j].delivery) > 1e-6) {
                    warnings.push_back("slice '" + label + "' expiry differs from delivery; using delivery time");
                }
            } else if (expiries[label] != expiry) {
                throw MarketDataError("line " + std::to_string(table.line_numbers[r]) +
                                      ": inconsistent expiry within slice '" + label + "'");
            }
            out[it->second].second.push_back({coord, csv::to_double(row[c_vol])});
        }
        return out;
    });

    auto bundle = make_bundle(std::move(futures), std::move(quoted), std::move(discount));
    bundle.warnings.insert(bundle.warnings.begin(), warnings.begin(), warnings.end());
    return bundle;
}

// ---------------------------------------------------------------------------
// Writing

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    return out;
}

std::string format_date(std::chrono::sys_days d) {
    std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

}  // namespace

void write_futures_csv(const std::filesystem::path& path, const FuturesCurve& curve) {
    auto out = open_out(path);
    out << "label,delivery_years,price\n";
    for (const auto& e : curve.entries()) {
        out << e.label << ',' << csv::format(e.delivery) << ',' << csv::format(e.price) << '\n';
    }
}

void write_discount_csv(const std::filesystem::path& path, const DiscountCurve& curve) {
    auto out = open_out(path);
    out << "time_years,df\n";
    for (const auto& p : curve.pillars()) out << csv::format(p.time) << ',' << csv::format(p.df) << '\n';
}

void write_vols_csv(const std::filesystem::path& path, const MarketBundle& bundle) {
    auto out = open_out(path);
    out << "label,expiry_years,log_moneyness,implied_vol\n";
    for (const auto& slice : bundle.slices) {
        if (slice.provenance.borrowed) continue;
        const auto& label = bundle.futures[slice.delivery_index].label;
        for (const auto& q : slice.quotes) {
            out << label << ',' << csv::format(slice.expiry) << ',' << csv::format(q.log_moneyness) << ','
                << csv::format(q.implied_vol) << '\n';
        }
    }
}

void write_returns_csv(const std::filesystem::path& path, const ReturnSeries& series) {
    auto out = open_out(path);
    out << "date,short_return,long_return\n";
    for (std::size_t i = 0; i < series.dates.size(); ++i) {
        out << format_date(series.dates[i]) << ',' << csv::format(series.short_tenor[i]) << ','
            << csv::format(series.long_tenor[i]) << '\n';
    }
}

}  // namespace cclv
