#include "app.hpp"

#include "cclv/black.hpp"
#include "cclv/csv.hpp"
#include "cclv/engine.hpp"
#include "cclv/errors.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace cclv::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kParamsFile = "params.json";
constexpr const char* kLeverageFile = "leverage.csv";

std::string fmt(double v) { return csv::format(v); }

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw std::invalid_argument("expected a boolean, got '" + s + "'");
}

std::uint64_t parse_uint(const std::string& s) {
    std::size_t used = 0;
    if (s.empty() || s[0] == '-') throw std::invalid_argument("expected a non-negative integer, got '" + s + "'");
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument("expected a non-negative integer, got '" + s + "'");
    return v;
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    for (const auto& field : csv::split(s, ',')) {
        std::string f = field;
        f.erase(0, f.find_first_not_of(" \t"));
        f.erase(f.find_last_not_of(" \t") + 1);
        if (!f.empty()) out.push_back(csv::to_double(f));
    }
    return out;
}

std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
    return s;
}

std::string read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class OutputFile {
public:
    OutputFile(const fs::path& path, const std::string& header) : path_(path), out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot write " + path.string());
        out_ << header << '\n';
    }
    template <class... Ts>
    void row(const Ts&... fields) {
        std::size_t i = 0;
        ((out_ << (i++ ? "," : "") << fields), ...);
        out_ << '\n';
    }
    std::ostream& stream() { return out_; }

private:
    fs::path path_;
    std::ofstream out_;
};

// Setters keyed by "section.key".
using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"market.futures", [](RunConfig& c, const std::string& v) { c.futures_file = v; }},
        {"market.vols", [](RunConfig& c, const std::string& v) { c.vols_file = v; }},
        {"market.discount", [](RunConfig& c, const std::string& v) { c.discount_file = v; }},
        {"market.returns", [](RunConfig& c, const std::string& v) { c.returns_file = v; }},
        {"market.valuation_date", [](RunConfig& c, const std::string& v) { c.valuation_date = v; }},
        {"backbone.mode",
         [](RunConfig& c, const std::string& v) {
             if (v != "given" && v != "calibrate") throw std::invalid_argument("backbone.mode must be given or calibrate");
             c.calibrate_backbone = v == "calibrate";
         }},
        {"backbone.kappa", [](RunConfig& c, const std::string& v) { c.backbone.kappa = csv::to_double(v); }},
        {"backbone.h1", [](RunConfig& c, const std::string& v) { c.backbone.h1 = csv::to_double(v); }},
        {"backbone.h2", [](RunConfig& c, const std::string& v) { c.backbone.h2 = csv::to_double(v); }},
        {"backbone.h_inf", [](RunConfig& c, const std::string& v) { c.backbone.h_inf = csv::to_double(v); }},
        {"backbone.rho_inf_source",
         [](RunConfig& c, const std::string& v) {
             if (v != "given" && v != "estimate") throw std::invalid_argument("backbone.rho_inf_source must be given or estimate");
             c.estimate_rho = v == "estimate";
         }},
        {"backbone.rho_inf", [](RunConfig& c, const std::string& v) { c.rho_inf = csv::to_double(v); }},
        {"tiv.accumulator", [](RunConfig& c, const std::string& v) { c.accumulator = parse_accumulator(v); }},
        {"rates.mode", [](RunConfig& c, const std::string& v) { c.rate_mode = parse_rate_mode(v); }},
        {"rates.a", [](RunConfig& c, const std::string& v) { c.rates.a = csv::to_double(v); }},
        {"rates.sigma", [](RunConfig& c, const std::string& v) { c.rates.sigma = csv::to_double(v); }},
        {"rates.rho_1r", [](RunConfig& c, const std::string& v) { c.rates.rho_1r = csv::to_double(v); }},
        {"rates.rho_2r", [](RunConfig& c, const std::string& v) { c.rates.rho_2r = csv::to_double(v); }},
        {"calibration.slices_per_year",
         [](RunConfig& c, const std::string& v) { c.calibration.slices_per_year = csv::to_double(v); }},
        {"calibration.slice_times", [](RunConfig& c, const std::string& v) { c.calibration.slice_times = parse_list(v); }},
        {"calibration.y_nodes", [](RunConfig& c, const std::string& v) { c.calibration.y_nodes = parse_uint(v); }},
        {"calibration.y_margin", [](RunConfig& c, const std::string& v) { c.calibration.y_margin = csv::to_double(v); }},
        {"calibration.evaluation",
         [](RunConfig& c, const std::string& v) { c.calibration.evaluation = parse_slice_evaluation(v); }},
        {"calibration.l_min", [](RunConfig& c, const std::string& v) { c.calibration.clamps.l_min = csv::to_double(v); }},
        {"calibration.l_max", [](RunConfig& c, const std::string& v) { c.calibration.clamps.l_max = csv::to_double(v); }},
        {"calibration.denominator_floor",
         [](RunConfig& c, const std::string& v) { c.calibration.clamps.denominator_floor = csv::to_double(v); }},
        {"calibration.max_clamp_fraction",
         [](RunConfig& c, const std::string& v) { c.calibration.max_clamp_fraction = csv::to_double(v); }},
        {"calibration.mc_paths", [](RunConfig& c, const std::string& v) { c.calibration.mc_paths = parse_uint(v); }},
        {"calibration.antithetic", [](RunConfig& c, const std::string& v) { c.calibration.antithetic = parse_bool(v); }},
        {"calibration.seed", [](RunConfig& c, const std::string& v) { c.calibration.seed = parse_uint(v); }},
        {"calibration.max_dt", [](RunConfig& c, const std::string& v) { c.calibration.max_dt = csv::to_double(v); }},
        {"calibration.density_floor",
         [](RunConfig& c, const std::string& v) { c.calibration.density_floor = csv::to_double(v); }},
        {"calibration.min_itm_paths",
         [](RunConfig& c, const std::string& v) { c.calibration.min_itm_paths = parse_uint(v); }},
        {"calibration.threads",
         [](RunConfig& c, const std::string& v) { c.calibration.threads = static_cast<unsigned>(parse_uint(v)); }},
        {"simulation.paths", [](RunConfig& c, const std::string& v) { c.simulation.paths = parse_uint(v); }},
        {"simulation.antithetic", [](RunConfig& c, const std::string& v) { c.simulation.antithetic = parse_bool(v); }},
        {"simulation.seed", [](RunConfig& c, const std::string& v) { c.simulation.seed = parse_uint(v); }},
        {"simulation.max_dt", [](RunConfig& c, const std::string& v) { c.simulation.max_dt = csv::to_double(v); }},
        {"simulation.threads",
         [](RunConfig& c, const std::string& v) { c.simulation.threads = static_cast<unsigned>(parse_uint(v)); }},
        {"simulation.dump_paths", [](RunConfig& c, const std::string& v) { c.simulation.dump_paths = parse_uint(v); }},
        {"validation.moneyness", [](RunConfig& c, const std::string& v) { c.validation.moneyness = parse_list(v); }},
        {"validation.se_band", [](RunConfig& c, const std::string& v) { c.validation.se_band = csv::to_double(v); }},
        {"validation.pass_rate", [](RunConfig& c, const std::string& v) { c.validation.pass_rate = csv::to_double(v); }},
        {"output.dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
    };
    return table;
}

G1ppParams effective_rates(RateMode mode, const G1ppParams& rates) {
    if (mode == RateMode::G1pp) return rates;
    G1ppParams p;
    p.a = rates.a;
    return p;
}

json to_json(const AndersenParams& p) {
    json season = json::array();
    for (const auto& pillar : p.seasonality.pillars()) season.push_back({pillar.maturity, pillar.value});
    return {{"kappa", p.kappa}, {"h1", p.h1}, {"h2", p.h2}, {"h_inf", p.h_inf}, {"seasonality", season}};
}

AndersenParams andersen_from_json(const json& j) {
    AndersenParams p;
    p.kappa = j.at("kappa").get<double>();
    p.h1 = j.at("h1").get<double>();
    p.h2 = j.at("h2").get<double>();
    p.h_inf = j.at("h_inf").get<double>();
    std::vector<Seasonality::Pillar> pillars;
    for (const auto& e : j.at("seasonality")) pillars.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
    if (!pillars.empty()) p.seasonality = Seasonality(pillars);
    return p;
}

void check_compatible(const RunConfig& config, const Artifacts& a) {
    if (a.market_hash != hex(market_fingerprint(config))) {
        throw std::runtime_error("artifact mismatch: market files differ from the ones used for calibration");
    }
    if (a.accumulator != config.accumulator) {
        throw std::runtime_error("artifact mismatch: calibrated with accumulator " + to_string(a.accumulator) +
                                 ", configured " + to_string(config.accumulator));
    }
    if (a.rate_mode != config.rate_mode) {
        throw std::runtime_error("artifact mismatch: calibrated with rate mode " + to_string(a.rate_mode) +
                                 ", configured " + to_string(config.rate_mode));
    }
}

struct Simulated {
    FuturesModel model;
    G1ppModel rates;
    PathBlock block;
};

Simulated run_simulation(const RunConfig& config, const MarketBundle& bundle, const Artifacts& a,
                         std::vector<double> record_times) {
    if (config.simulation.paths == 0) throw std::invalid_argument("simulation needs at least one path");
    const auto rp = effective_rates(a.rate_mode, a.rates);
    Simulated s{FuturesModel::from(a.backbone, bundle.futures), G1ppModel(rp, bundle.discount), {}};
    SimConfig sc;
    sc.n_paths = config.simulation.paths;
    sc.antithetic = config.simulation.antithetic;
    sc.seed = config.simulation.seed;
    sc.stream = Stream::Pricing;
    sc.threads = config.simulation.threads;
    sc.time_grid = make_time_grid(record_times, config.simulation.max_dt);
    // Record exactly the grid nodes matching the requested times.
    for (double& t : record_times) {
        const auto it = std::min_element(sc.time_grid.begin(), sc.time_grid.end(),
                                         [t](double x, double y) { return std::abs(x - t) < std::abs(y - t); });
        t = *it;
    }
    sc.record_times = record_times;
    s.block = simulate(s.model, s.rates, CorrelationStructure{rp.rho_1r, rp.rho_2r}, a.surfaces, sc);
    return s;
}

}  // namespace

RateMode parse_rate_mode(std::string_view name) {
    if (name == "deterministic") return RateMode::Deterministic;
    if (name == "g1pp") return RateMode::G1pp;
    throw std::invalid_argument("unknown rate mode '" + std::string(name) + "' (expected deterministic or g1pp)");
}

std::string to_string(RateMode mode) { return mode == RateMode::G1pp ? "g1pp" : "deterministic"; }

RunConfig::RunConfig() {
    backbone.kappa = 0.2657;
    backbone.h1 = 0.2365;
    backbone.h2 = 0.2970;
    backbone.h_inf = 0.0546;
    rates.a = 0.02;
    rates.sigma = 0.01;
    rates.rho_1r = -0.2;
    rates.rho_2r = -0.2;
}

RunConfig RunConfig::load(const fs::path& path) {
    if (!fs::exists(path)) throw std::runtime_error("config file not found: " + path.string());
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(path.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw std::runtime_error("config " + path.string() + ": " + e.message() + " at line " + std::to_string(e.line()));
    }
    RunConfig c;
    c.base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw std::runtime_error("config " + path.string() + ": setting '" + section + "' outside a section");
        for (const auto& [key, value] : body) {
            const std::string name = section + "." + key;
            const auto it = setters().find(name);
            if (it == setters().end()) throw std::runtime_error("config " + path.string() + ": unknown key '" + name + "'");
            try {
                it->second(c, value.get_value<std::string>());
            } catch (const std::exception& e) {
                throw std::runtime_error("config " + path.string() + ": " + name + ": " + e.what());
            }
        }
    }
    return c;
}

fs::path RunConfig::resolve(const std::string& file) const {
    const fs::path p(file);
    return p.is_absolute() ? p : base_dir / p;
}

MarketFiles RunConfig::market_files() const {
    if (futures_file.empty() || vols_file.empty() || discount_file.empty()) {
        throw std::runtime_error("config needs market.futures, market.vols and market.discount");
    }
    MarketFiles f{resolve(futures_file), resolve(vols_file), resolve(discount_file), std::nullopt};
    if (valuation_date) f.valuation_date = parse_date(*valuation_date);
    return f;
}

std::string RunConfig::canonical() const {
    std::map<std::string, std::string> kv;
    kv["market.futures"] = futures_file;
    kv["market.vols"] = vols_file;
    kv["market.discount"] = discount_file;
    kv["market.returns"] = returns_file;
    kv["market.valuation_date"] = valuation_date.value_or("");
    kv["backbone.mode"] = calibrate_backbone ? "calibrate" : "given";
    kv["backbone.kappa"] = fmt(backbone.kappa);
    kv["backbone.h1"] = fmt(backbone.h1);
    kv["backbone.h2"] = fmt(backbone.h2);
    kv["backbone.h_inf"] = fmt(backbone.h_inf);
    kv["backbone.rho_inf_source"] = estimate_rho ? "estimate" : "given";
    kv["backbone.rho_inf"] = fmt(rho_inf);
    kv["tiv.accumulator"] = to_string(accumulator);
    kv["rates.mode"] = to_string(rate_mode);
    kv["rates.a"] = fmt(rates.a);
    kv["rates.sigma"] = fmt(rates.sigma);
    kv["rates.rho_1r"] = fmt(rates.rho_1r);
    kv["rates.rho_2r"] = fmt(rates.rho_2r);
    const auto& cal = calibration;
    kv["calibration.slices_per_year"] = fmt(cal.slices_per_year);
    kv["calibration.slice_times"] = join(cal.slice_times);
    kv["calibration.y_nodes"] = std::to_string(cal.y_nodes);
    kv["calibration.y_margin"] = fmt(cal.y_margin);
    kv["calibration.evaluation"] = to_string(cal.evaluation);
    kv["calibration.l_min"] = fmt(cal.clamps.l_min);
    kv["calibration.l_max"] = fmt(cal.clamps.l_max);
    kv["calibration.denominator_floor"] = fmt(cal.clamps.denominator_floor);
    kv["calibration.max_clamp_fraction"] = fmt(cal.max_clamp_fraction);
    kv["calibration.mc_paths"] = std::to_string(cal.mc_paths);
    kv["calibration.antithetic"] = cal.antithetic ? "true" : "false";
    kv["calibration.seed"] = std::to_string(cal.seed);
    kv["calibration.max_dt"] = fmt(cal.max_dt);
    kv["calibration.density_floor"] = fmt(cal.density_floor);
    kv["calibration.min_itm_paths"] = std::to_string(cal.min_itm_paths);
    kv["simulation.paths"] = std::to_string(simulation.paths);
    kv["simulation.antithetic"] = simulation.antithetic ? "true" : "false";
    kv["simulation.seed"] = std::to_string(simulation.seed);
    kv["simulation.max_dt"] = fmt(simulation.max_dt);
    kv["simulation.dump_paths"] = std::to_string(simulation.dump_paths);
    kv["validation.moneyness"] = join(validation.moneyness);
    kv["validation.se_band"] = fmt(validation.se_band);
    kv["validation.pass_rate"] = fmt(validation.pass_rate);
    std::string s;
    for (const auto& [k, v] : kv) s += k + "=" + v + "\n";
    return s;
}

std::uint64_t RunConfig::hash() const { return fnv1a(canonical()); }

void RunConfig::validate() const {
    calibration.validate();
    if (!(simulation.max_dt > 0.0)) throw std::invalid_argument("simulation.max_dt must be positive");
    if (validation.moneyness.empty()) throw std::invalid_argument("validation.moneyness is empty");
    for (double m : validation.moneyness) {
        if (!(m > 0.0)) throw std::invalid_argument("validation.moneyness entries must be positive");
    }
    if (!(validation.pass_rate >= 0.0 && validation.pass_rate <= 1.0)) {
        throw std::invalid_argument("validation.pass_rate must be in [0, 1]");
    }
    if (rate_mode == RateMode::G1pp) rates.validate();
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex(std::uint64_t value) {
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << value;
    return ss.str();
}

std::uint64_t market_fingerprint(const RunConfig& config) {
    const auto files = config.market_files();
    std::uint64_t h = fnv1a(read_bytes(files.futures));
    h = fnv1a(read_bytes(files.vols), h);
    h = fnv1a(read_bytes(files.discount), h);
    return h;
}

std::string header_line(const RunConfig& config, std::string_view command, std::uint64_t seed) {
    std::string s = "# cclv " + std::string(command) + " config=" + hex(config.hash()) + " seed=" + std::to_string(seed);
    if (!config.deterministic) {
        const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
        const auto days = std::chrono::floor<std::chrono::days>(now);
        const std::chrono::year_month_day ymd{days};
        const std::chrono::hh_mm_ss hms{now - days};
        std::ostringstream ts;
        ts << static_cast<int>(ymd.year()) << '-' << std::setw(2) << std::setfill('0') << static_cast<unsigned>(ymd.month())
           << '-' << std::setw(2) << static_cast<unsigned>(ymd.day()) << 'T' << std::setw(2) << hms.hours().count() << ':'
           << std::setw(2) << hms.minutes().count() << ':' << std::setw(2) << hms.seconds().count() << 'Z';
        s += " generated=" + ts.str();
    }
    return s;
}

void write_artifacts(const fs::path& dir, const Artifacts& a, const FuturesCurve& curve, const std::string& header) {
    json lev = json::array();
    for (const auto& s : a.surfaces) {
        lev.push_back({{"j", s.index() + 1},
                       {"label", curve[s.index()].label},
                       {"delivery", s.delivery()},
                       {"grid", {{"start", s.grid().start}, {"step", s.grid().step}, {"size", s.grid().size}}}});
    }
    json doc = {
        {"artifact_version", a.version},
        {"config_hash", a.config_hash},
        {"market_hash", a.market_hash},
        {"accumulator", to_string(a.accumulator)},
        {"rate_mode", to_string(a.rate_mode)},
        {"rates", {{"a", a.rates.a}, {"sigma", a.rates.sigma}, {"rho_1r", a.rates.rho_1r}, {"rho_2r", a.rates.rho_2r}}},
        {"backbone", to_json(a.backbone)},
        {"rho_inf", a.rho_inf},
        {"slice_evaluation", to_string(a.evaluation)},
        {"leverage", lev},
    };
    {
        std::ofstream out(dir / kParamsFile, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (dir / kParamsFile).string());
        out << doc.dump(2) << '\n';
    }
    OutputFile f(dir / kLeverageFile, header);
    f.row("j", "t", "y", "L");
    for (const auto& s : a.surfaces) {
        for (std::size_t i = 0; i < s.slice_count(); ++i) {
            const auto values = s.slice(i);
            for (std::size_t k = 0; k < values.size(); ++k) f.row(s.index() + 1, fmt(s.times()[i]), fmt(s.grid()[k]), fmt(values[k]));
        }
    }
}

Artifacts read_artifacts(const fs::path& dir) {
    const auto params_path = dir / kParamsFile;
    if (!fs::exists(params_path)) throw std::runtime_error("calibration artifacts not found: " + params_path.string());
    json doc;
    try {
        doc = json::parse(read_bytes(params_path));
    } catch (const json::exception& e) {
        throw std::runtime_error(params_path.string() + ": " + e.what());
    }
    Artifacts a;
    a.version = doc.value("artifact_version", 0);
    if (a.version != kArtifactVersion) {
        throw std::runtime_error("artifact version mismatch: " + params_path.string() + " has version " +
                                 std::to_string(a.version) + ", expected " + std::to_string(kArtifactVersion));
    }
    try {
        a.config_hash = doc.at("config_hash").get<std::string>();
        a.market_hash = doc.at("market_hash").get<std::string>();
        a.accumulator = parse_accumulator(doc.at("accumulator").get<std::string>());
        a.rate_mode = parse_rate_mode(doc.at("rate_mode").get<std::string>());
        const auto& r = doc.at("rates");
        a.rates.a = r.at("a").get<double>();
        a.rates.sigma = r.at("sigma").get<double>();
        a.rates.rho_1r = r.at("rho_1r").get<double>();
        a.rates.rho_2r = r.at("rho_2r").get<double>();
        a.backbone = andersen_from_json(doc.at("backbone"));
        a.rho_inf = doc.at("rho_inf").get<double>();
        a.evaluation = parse_slice_evaluation(doc.at("slice_evaluation").get<std::string>());
        for (const auto& l : doc.at("leverage")) {
            const auto& g = l.at("grid");
            a.surfaces.emplace_back(l.at("j").get<std::size_t>() - 1, l.at("delivery").get<double>(),
                                    UniformGrid{g.at("start").get<double>(), g.at("step").get<double>(),
                                                g.at("size").get<std::size_t>()});
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(params_path.string() + ": " + e.what());
    }

    const auto table = csv::read(dir / kLeverageFile);
    const auto cj = table.column("j"), ct = table.column("t"), cy = table.column("y"), cl = table.column("L");
    std::vector<std::vector<std::pair<double, std::vector<double>>>> slices(a.surfaces.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto j = static_cast<std::size_t>(csv::to_double(row[cj]));
        if (j < 1 || j > a.surfaces.size()) throw std::runtime_error("leverage.csv: unknown delivery " + row[cj]);
        const double t = csv::to_double(row[ct]);
        auto& list = slices[j - 1];
        if (list.empty() || list.back().first != t) list.push_back({t, {}});
        auto& values = list.back().second;
        const auto& grid = a.surfaces[j - 1].grid();
        if (values.size() >= grid.size || csv::to_double(row[cy]) != grid[values.size()]) {
            throw std::runtime_error("leverage.csv: line " + std::to_string(table.line_numbers[r]) +
                                     " does not match the y-grid in " + std::string(kParamsFile));
        }
        values.push_back(csv::to_double(row[cl]));
    }
    for (std::size_t j = 0; j < a.surfaces.size(); ++j) {
        for (auto& [t, values] : slices[j]) a.surfaces[j].commit_slice(t, std::move(values));
    }
    return a;
}

double ValidationCell::z() const {
    const double diff = mc_price - market_price;
    return se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff));
}

bool ValidationCell::within(double band) const { return std::abs(z()) <= band; }

ValidationSummary validate_grid(const RunConfig& config, const MarketBundle& bundle, const Artifacts& a) {
    const std::size_t J = bundle.futures.size();
    std::vector<double> deliveries;
    for (const auto& e : bundle.futures.entries()) deliveries.push_back(e.delivery);
    const auto sim = run_simulation(config, bundle, a, deliveries);

    std::vector<VanillaRequest> requests;
    for (std::size_t j = 0; j < J; ++j) {
        for (double m : config.validation.moneyness) requests.push_back({j, sim.block.times[j + 1], std::log(m)});
    }
    const auto priced = price_vanillas(sim.block, bundle.discount, requests);

    ValidationSummary summary;
    for (std::size_t r = 0; r < requests.size(); ++r) {
        const auto& req = requests[r];
        const auto& slice = bundle.slices[req.delivery];
        const double T = bundle.futures[req.delivery].delivery;
        const double F = bundle.futures[req.delivery].price;
        const double y = req.log_moneyness;
        const double w = terminal_tiv(slice)(y);
        ValidationCell cell{req.delivery,
                            T,
                            std::exp(y),
                            y,
                            black_call({F, bundle.discount.discount(T), y, w}),
                            priced[r].price,
                            priced[r].se,
                            std::sqrt(w / T),
                            priced[r].implied_vol,
                            y >= slice.quotes.front().log_moneyness && y <= slice.quotes.back().log_moneyness};
        if (cell.interior) {
            ++summary.interior;
            summary.passed += cell.within(config.validation.se_band);
        }
        summary.cells.push_back(cell);
    }
    return summary;
}

int cmd_calibrate(const RunConfig& config, std::ostream& out, std::ostream& err) {
    config.validate();
    const auto bundle = load_market(config.market_files());
    for (const auto& w : bundle.warnings) err << "warning: " << w << '\n';
    const auto dir = config.out_path();
    fs::create_directories(dir);
    const auto header = header_line(config, "calibrate", config.calibration.seed);

    double rho = config.rho_inf;
    if (config.estimate_rho) {
        if (config.returns_file.empty()) throw std::runtime_error("rho_inf_source = estimate needs market.returns");
        rho = estimate_rho_inf(read_returns_csv(config.resolve(config.returns_file))).rho_inf;
        out << "estimated rho_inf " << fmt(rho) << '\n';
    }

    AndersenParams params = config.backbone;
    if (config.calibrate_backbone) {
        std::vector<AtmQuote> quotes;
        for (std::size_t j = 0; j < bundle.futures.size(); ++j) {
            if (bundle.slices[j].provenance.borrowed) continue;
            const double T = bundle.futures[j].delivery;
            quotes.push_back({T, std::sqrt(terminal_tiv(bundle.slices[j])(0.0) / T)});
        }
        const auto fit = calibrate_backbone(quotes, rho);
        params = fit.params;
        out << "backbone fit: rms " << fmt(fit.stage1_rms) << " after " << fit.iterations << " iterations\n";
    } else {
        rho = derive(params).rho_inf;
    }
    params.validate();
    for (const auto& w : params.warnings()) err << "warning: " << w << '\n';

    const auto tiv = build_tiv_surfaces(bundle, config.accumulator);
    const std::optional<G1ppParams> rates =
        config.rate_mode == RateMode::G1pp ? std::optional<G1ppParams>(config.rates) : std::nullopt;
    auto result = calibrate_all(bundle, params, tiv, config.calibration, rates);
    for (const auto& w : result.warnings) err << "warning: " << w << '\n';

    Artifacts a;
    a.config_hash = hex(config.hash());
    a.market_hash = hex(market_fingerprint(config));
    a.accumulator = config.accumulator;
    a.rate_mode = config.rate_mode;
    a.rates = config.rates;
    a.backbone = params;
    a.rho_inf = rho;
    a.evaluation = config.calibration.evaluation;
    a.surfaces = std::move(result.surfaces);
    write_artifacts(dir, a, bundle.futures, header);

    {
        OutputFile f(dir / "seasonality.csv", header);
        f.row("T", "a");
        for (const auto& p : params.seasonality.pillars()) f.row(fmt(p.maturity), fmt(p.value));
    }
    std::size_t clamped = 0, arbitrage = 0, fallback = 0, nodes = 0;
    {
        OutputFile f(dir / "diagnostics.csv", header);
        f.row("j", "t", "nodes", "clamped", "arbitrage", "fallback");
        for (const auto& d : result.diagnostics) {
            f.row(d.delivery + 1, fmt(d.t), d.nodes, d.clamped, d.arbitrage, d.fallback);
            nodes += d.nodes;
            clamped += d.clamped;
            arbitrage += d.arbitrage;
            fallback += d.fallback;
        }
    }
    {
        OutputFile f(dir / "tiv.csv", header);
        f.row("j", "y", "t", "w", "dwdt", "dwdy", "d2wdy2");
        for (const auto& s : a.surfaces) {
            for (double t : s.times()) {
                for (double y : s.grid().nodes()) {
                    const auto p = tiv[s.index()].accumulate(y, t);
                    f.row(s.index() + 1, fmt(y), fmt(t), fmt(p.w), fmt(p.dwdt), fmt(p.dwdy), fmt(p.d2wdy2));
                }
            }
        }
    }
    {
        const auto d = derive(params);
        OutputFile f(dir / "calibration_report.txt", header);
        auto& s = f.stream();
        s << "accumulator " << to_string(config.accumulator) << "\nrate_mode " << to_string(config.rate_mode) << '\n';
        s << "kappa " << fmt(params.kappa) << "\nh1 " << fmt(params.h1) << "\nh2 " << fmt(params.h2) << "\nh_inf "
          << fmt(params.h_inf) << '\n';
        s << "sigma_0 " << fmt(d.sigma_0) << "\nsigma_inf " << fmt(d.sigma_inf) << "\nrho_inf " << fmt(d.rho_inf) << '\n';
        s << "nodes " << nodes << "\nclamped " << clamped << "\narbitrage " << arbitrage << "\nfallback " << fallback << '\n';
        for (const auto& w : bundle.warnings) s << "warning " << w << '\n';
        for (const auto& w : result.warnings) s << "warning " << w << '\n';
    }
    out << "calibrated " << a.surfaces.size() << " deliveries, " << nodes << " nodes (" << clamped << " clamped, "
        << arbitrage << " arbitrage, " << fallback << " fallback) -> " << dir.string() << '\n';
    return kOk;
}

int cmd_validate(const RunConfig& config, std::ostream& out, std::ostream&) {
    config.validate();
    if (config.simulation.paths == 0) throw std::invalid_argument("simulation needs at least one path");
    const auto bundle = load_market(config.market_files());
    const auto dir = config.out_path();
    const auto a = read_artifacts(dir);
    check_compatible(config, a);
    const auto summary = validate_grid(config, bundle, a);

    OutputFile f(dir / "validation.csv", header_line(config, "validate", config.simulation.seed));
    f.row("j", "label", "expiry", "moneyness", "y", "market_price", "mc_price", "se", "z", "market_vol", "mc_vol",
          "interior", "within");
    for (const auto& c : summary.cells) {
        f.row(c.delivery + 1, bundle.futures[c.delivery].label, fmt(c.expiry), fmt(c.moneyness), fmt(c.log_moneyness),
              fmt(c.market_price), fmt(c.mc_price), fmt(c.se), fmt(c.z()), fmt(c.market_vol),
              c.mc_vol ? fmt(*c.mc_vol) : std::string("NA"), c.interior ? 1 : 0,
              c.within(config.validation.se_band) ? 1 : 0);
    }
    const double rate = summary.pass_rate();
    out << "validation: " << summary.passed << " of " << summary.interior << " interior cells within "
        << fmt(config.validation.se_band) << " SE (pass rate " << fmt(rate) << ", threshold "
        << fmt(config.validation.pass_rate) << ")\n";
    return rate >= config.validation.pass_rate ? kOk : kBelowThreshold;
}

int cmd_simulate(const RunConfig& config, std::ostream& out, std::ostream&) {
    config.validate();
    const auto bundle = load_market(config.market_files());
    const auto dir = config.out_path();
    const auto a = read_artifacts(dir);
    check_compatible(config, a);
    const std::size_t J = bundle.futures.size();

    std::set<double> times;
    for (const auto& e : bundle.futures.entries()) {
        for (int k = 1; k <= 8; ++k) times.insert(e.delivery * k / 8.0);
    }
    std::vector<double> record;
    for (double t : times) {
        if (record.empty() || t - record.back() > 1e-9) record.push_back(t);
    }
    const auto sim = run_simulation(config, bundle, a, record);
    const auto tiv = build_tiv_surfaces(bundle, a.accumulator);
    const auto header = header_line(config, "simulate", config.simulation.seed);

    OutputFile f(dir / "rv.csv", header);
    f.row("j", "label", "t", "t_over_T", "rv", "se", "tiv_atm");
    for (std::size_t j = 0; j < J; ++j) {
        const double T = bundle.futures[j].delivery;
        for (std::size_t i = 1; i < sim.block.times.size(); ++i) {
            const double t = sim.block.times[i];
            if (t > T + 1e-9) break;
            const auto rv = realized_variance(sim.block, j, t);
            f.row(j + 1, bundle.futures[j].label, fmt(t), fmt(t / T), fmt(rv.estimate.mean), fmt(rv.estimate.se),
                  fmt(tiv[j].value(0.0, std::min(t, T))));
        }
    }
    if (config.simulation.dump_paths > 0) {
        OutputFile p(dir / "paths.csv", header);
        p.row("path", "t", "j", "F", "D", "r");
        const std::size_t n = std::min(config.simulation.dump_paths, sim.block.n_paths);
        for (std::size_t path = 0; path < n; ++path) {
            for (std::size_t i = 0; i < sim.block.times.size(); ++i) {
                for (std::size_t j = 0; j < J; ++j) {
                    p.row(path, fmt(sim.block.times[i]), j + 1, fmt(sim.block.futures_at(i, j)[path]),
                          fmt(sim.block.discount_at(i)[path]), fmt(sim.block.short_rate_at(i)[path]));
                }
            }
        }
    }
    out << "simulated " << sim.block.n_paths << " paths over " << sim.block.times.size() - 1
        << " recorded times -> " << (dir / "rv.csv").string() << '\n';
    return kOk;
}

int cmd_estimate_corr(const RunConfig& config, std::ostream& out, std::ostream& err) {
    if (config.returns_file.empty()) throw std::runtime_error("estimate-corr needs market.returns in the config");
    const auto est = estimate_rho_inf(read_returns_csv(config.resolve(config.returns_file)));
    const auto dir = config.out_path();
    fs::create_directories(dir);
    OutputFile f(dir / "corr.csv", header_line(config, "estimate-corr", 0));
    f.row("month", "samples", "correlation", "p_value", "low_sample");
    for (const auto& m : est.months) {
        f.row(m.month, m.samples, std::isnan(m.correlation) ? std::string("NA") : fmt(m.correlation),
              std::isnan(m.p_value) ? std::string("NA") : fmt(m.p_value), m.low_sample ? 1 : 0);
        if (m.low_sample) err << "warning: month " << m.month << " has only " << m.samples << " observations\n";
    }
    f.row("all", est.samples, fmt(est.rho_inf), fmt(est.p_value), 0);
    out << "rho_inf " << fmt(est.rho_inf) << " (p = " << fmt(est.p_value) << ", n = " << est.samples << ")\n";
    return kOk;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Commodity futures leverage calibration and Monte-Carlo engine"};
    app.name("cclv");
    app.require_subcommand(1, 1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<std::string> accumulator, rate_mode, out_dir;
    bool deterministic = false;

    using Command = int (*)(const RunConfig&, std::ostream&, std::ostream&);
    const std::vector<std::tuple<std::string, std::string, Command>> commands = {
        {"calibrate", "Fit the backbone and leverage surfaces", cmd_calibrate},
        {"validate", "Reprice the vanilla grid against the market", cmd_validate},
        {"simulate", "Realized-variance tables from the calibrated model", cmd_simulate},
        {"estimate-corr", "Long-end correlation from historical returns", cmd_estimate_corr},
    };
    for (const auto& [name, help, fn] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "Run configuration (INI)")->required();
        sub->add_option("--seed", seed, "Seed for this command's Monte Carlo");
        sub->add_option("--paths", paths, "Paths (before antithetics) for this command");
        sub->add_option("--accumulator", accumulator, "linear | quadratic | ttm-iv | exp-weighted");
        sub->add_option("--rate-mode", rate_mode, "deterministic | g1pp");
        sub->add_option("--out", out_dir, "Output directory");
        sub->add_flag("--deterministic", deterministic, "Omit the timestamp from output headers");
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        auto config = RunConfig::load(config_path);
        const std::string name = app.get_subcommands().front()->get_name();
        const bool calibrating = name == "calibrate";
        if (seed) (calibrating ? config.calibration.seed : config.simulation.seed) = *seed;
        if (paths) (calibrating ? config.calibration.mc_paths : config.simulation.paths) = *paths;
        if (accumulator) config.accumulator = parse_accumulator(*accumulator);
        if (rate_mode) config.rate_mode = parse_rate_mode(*rate_mode);
        if (out_dir) config.out_dir = fs::absolute(*out_dir).string();
        config.deterministic = deterministic;
        for (const auto& [cmd, help, fn] : commands) {
            if (cmd == name) return fn(config, out, err);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kError;
    }
    return kError;
}

}  // namespace cclv::app
