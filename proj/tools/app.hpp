#pragma once

// Command-line front end: run configuration, calibration artifacts and the
// four subcommands (calibrate, validate, simulate, estimate-corr).

#include "cclv/andersen.hpp"
#include "cclv/leverage.hpp"
#include "cclv/market_data.hpp"
#include "cclv/rates.hpp"
#include "cclv/tiv.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cclv::app {

inline constexpr int kArtifactVersion = 1;

enum ExitCode : int {
    kOk = 0,
    kError = 1,
    kUsage = 2,
    kBelowThreshold = 3,
};

enum class RateMode { Deterministic, G1pp };
RateMode parse_rate_mode(std::string_view name);  // deterministic|g1pp
std::string to_string(RateMode mode);

struct SimSettings {
    std::size_t paths = 10000;
    bool antithetic = true;
    std::uint64_t seed = 42;
    double max_dt = 1.0 / 365.0;
    unsigned threads = 0;
    std::size_t dump_paths = 0;  // paths written to paths.csv by simulate
};

struct ValidationSettings {
    std::vector<double> moneyness{0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4};  // K / F_j(0)
    double se_band = 2.0;
    double pass_rate = 0.95;
};

struct RunConfig {
    // Paths as written in the file (hashed) and resolved against its directory (used).
    std::string futures_file, vols_file, discount_file, returns_file;
    std::filesystem::path base_dir = ".";
    std::optional<std::string> valuation_date;

    bool calibrate_backbone = false;
    AndersenParams backbone;  // used when not calibrated
    bool estimate_rho = false;
    double rho_inf = 0.7;

    Accumulator accumulator = Accumulator::Linear;
    RateMode rate_mode = RateMode::Deterministic;
    G1ppParams rates;
    CalibrationConfig calibration;
    SimSettings simulation;
    ValidationSettings validation;

    std::string out_dir = "out";
    bool deterministic = false;

    RunConfig();

    /// Reads `key = value` lines grouped in [section]s; unknown keys are errors.
    static RunConfig load(const std::filesystem::path& path);

    MarketFiles market_files() const;
    std::filesystem::path resolve(const std::string& file) const;
    std::filesystem::path out_path() const { return resolve(out_dir); }

    /// One `section.key=value` line per setting, sorted; the basis of the hash.
    std::string canonical() const;
    std::uint64_t hash() const;
    void validate() const;
};

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull);
std::string hex(std::uint64_t value);
/// FNV-1a over the contents of the market files (and the returns file if set).
std::uint64_t market_fingerprint(const RunConfig& config);

/// Header comment line carried by every output file.
std::string header_line(const RunConfig& config, std::string_view command, std::uint64_t seed);

/// What calibrate writes and validate/simulate read back.
struct Artifacts {
    int version = kArtifactVersion;
    std::string config_hash;
    std::string market_hash;
    Accumulator accumulator = Accumulator::Linear;
    RateMode rate_mode = RateMode::Deterministic;
    G1ppParams rates;
    AndersenParams backbone;
    double rho_inf = 0.0;
    SliceEvaluation evaluation = SliceEvaluation::Midpoint;
    std::vector<LeverageSurface> surfaces;
};

void write_artifacts(const std::filesystem::path& dir, const Artifacts& artifacts, const FuturesCurve& curve,
                     const std::string& header);
/// Throws std::runtime_error on a missing file, a version mismatch or an inconsistent leverage dump.
Artifacts read_artifacts(const std::filesystem::path& dir);

struct ValidationCell {
    std::size_t delivery;
    double expiry;
    double moneyness;
    double log_moneyness;
    double market_price;
    double mc_price;
    double se;
    double market_vol;
    std::optional<double> mc_vol;
    bool interior;  // inside the quoted range of the slice

    double z() const;
    bool within(double band) const;
};

struct ValidationSummary {
    std::vector<ValidationCell> cells;
    std::size_t interior = 0;
    std::size_t passed = 0;
    double pass_rate() const { return interior ? static_cast<double>(passed) / static_cast<double>(interior) : 0.0; }
};

int cmd_calibrate(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_validate(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_simulate(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_estimate_corr(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Reprices the vanilla grid of `config` under the given artifacts.
ValidationSummary validate_grid(const RunConfig& config, const MarketBundle& bundle, const Artifacts& artifacts);

/// Full command line (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cclv::app
