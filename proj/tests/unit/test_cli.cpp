#include "app.hpp"

#include "cclv/market_data.hpp"
#include "cclv/synthetic.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace cclv::app {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("cclv_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        SyntheticSpec spec;
        spec.deliveries = 4;
        spec.spacing = 0.25;
        const auto bundle = synthetic_market(spec);
        write_futures_csv(dir_ / "futures.csv", bundle.futures);
        write_vols_csv(dir_ / "vols.csv", bundle);
        write_discount_csv(dir_ / "discount.csv", bundle.discount);
        write_returns_csv(dir_ / "returns.csv", synthetic_returns(wti_params(), 400, 3));
        write_config("");
    }
    void TearDown() override { fs::remove_all(dir_); }

    // Plumbing tests accept any pass rate; the threshold test sets its own.
    void write_config(const std::string& extra_sections, const std::string& simulation = "paths = 2000\nseed = 9\n",
                      const std::string& validation = "pass_rate = 0\n") {
        spit(dir_ / "run.ini", "[market]\nfutures = futures.csv\nvols = vols.csv\ndiscount = discount.csv\n"
                               "returns = returns.csv\n\n[calibration]\nmc_paths = 200\ny_nodes = 31\n\n"
                               "[simulation]\n" +
                                   simulation + "\n[validation]\n" + validation + "\n[output]\ndir = out\n" +
                                   extra_sections);
    }

    int cli(std::vector<std::string> args) {
        out_.str("");
        err_.str("");
        return run(args, out_, err_);
    }
    std::string config() const { return (dir_ / "run.ini").string(); }

    fs::path dir_;
    std::ostringstream out_, err_;
};

TEST_F(CliTest, LoadsSectionsAndResolvesPaths) {
    write_config("[rates]\nmode = g1pp\nsigma = 0.015\n", "paths = 2000\nseed = 9\n", "moneyness = 0.9, 1.0,1.1\n");
    const auto c = RunConfig::load(config());
    EXPECT_EQ(c.resolve(c.futures_file), dir_ / "futures.csv");
    EXPECT_EQ(c.out_path(), dir_ / "out");
    EXPECT_EQ(c.rate_mode, RateMode::G1pp);
    EXPECT_DOUBLE_EQ(c.rates.sigma, 0.015);
    EXPECT_DOUBLE_EQ(c.rates.a, 0.02);
    EXPECT_EQ(c.calibration.mc_paths, 200u);
    EXPECT_EQ(c.simulation.seed, 9u);
    EXPECT_EQ(c.validation.moneyness, (std::vector<double>{0.9, 1.0, 1.1}));
}

TEST_F(CliTest, RejectsUnknownKeysAndBadValues) {
    write_config("[simulation2]\npaths = 3\n");
    EXPECT_THROW(RunConfig::load(config()), std::runtime_error);
    write_config("", "pathz = 10\n");
    EXPECT_THROW(RunConfig::load(config()), std::runtime_error);
    write_config("", "paths = -5\n");
    EXPECT_THROW(RunConfig::load(config()), std::runtime_error);
    write_config("", "antithetic = maybe\n");
    EXPECT_THROW(RunConfig::load(config()), std::runtime_error);
    write_config("[tiv]\naccumulator = cubic\n");
    EXPECT_THROW(RunConfig::load(config()), std::runtime_error);
    EXPECT_THROW(RunConfig::load(dir_ / "missing.ini"), std::runtime_error);
}

TEST_F(CliTest, HashTracksSettingsButNotThreads) {
    auto a = RunConfig::load(config());
    auto b = a;
    b.simulation.threads = 7;
    b.deterministic = true;
    EXPECT_EQ(a.hash(), b.hash());
    b.simulation.seed += 1;
    EXPECT_NE(a.hash(), b.hash());
    EXPECT_EQ(hex(a.hash()).size(), 16u);
    EXPECT_EQ(hex(fnv1a("")), "cbf29ce484222325");
    EXPECT_EQ(hex(fnv1a("a")), "af63dc4c8601ec8c");
}

TEST_F(CliTest, HeaderCarriesHashSeedAndOptionalTimestamp) {
    auto c = RunConfig::load(config());
    c.deterministic = true;
    EXPECT_EQ(header_line(c, "validate", 9), "# cclv validate config=" + hex(c.hash()) + " seed=9");
    c.deterministic = false;
    EXPECT_NE(header_line(c, "validate", 9).find(" generated="), std::string::npos);
}

TEST_F(CliTest, RateModeNames) {
    EXPECT_EQ(parse_rate_mode("g1pp"), RateMode::G1pp);
    EXPECT_EQ(to_string(parse_rate_mode("deterministic")), "deterministic");
    EXPECT_THROW(parse_rate_mode("hjm"), std::invalid_argument);
}

TEST_F(CliTest, UsageErrors) {
    EXPECT_EQ(cli({}), kUsage);
    EXPECT_EQ(cli({"calibrate"}), kUsage);
    EXPECT_EQ(cli({"frobnicate", "--config", config()}), kUsage);
    EXPECT_EQ(cli({"validate", "--config", config(), "--paths", "ten"}), kUsage);
    EXPECT_EQ(cli({"--help"}), kOk);
}

TEST_F(CliTest, CalibrateValidateSimulate) {
    ASSERT_EQ(cli({"calibrate", "--config", config(), "--deterministic"}), kOk) << err_.str();
    for (const char* f : {"params.json", "leverage.csv", "seasonality.csv", "tiv.csv", "diagnostics.csv",
                          "calibration_report.txt"}) {
        EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;
    }
    EXPECT_EQ(slurp(dir_ / "out" / "leverage.csv").rfind("# cclv calibrate config=", 0), 0u);

    ASSERT_EQ(cli({"validate", "--config", config(), "--deterministic"}), kOk) << err_.str();
    const auto validation = slurp(dir_ / "out" / "validation.csv");
    const auto c = RunConfig::load(config());
    EXPECT_EQ(validation.rfind(header_line([&] { auto d = c; d.deterministic = true; return d; }(), "validate", 9) + "\n", 0), 0u);
    EXPECT_EQ(validation.find("generated="), std::string::npos);

    ASSERT_EQ(cli({"simulate", "--config", config(), "--paths", "500"}), kOk) << err_.str();
    const auto rv = slurp(dir_ / "out" / "rv.csv");
    EXPECT_NE(rv.find("generated="), std::string::npos);
    EXPECT_NE(rv.find("j,label,t,t_over_T,rv,se,tiv_atm"), std::string::npos);
}

TEST_F(CliTest, ArtifactsRoundTripExactly) {
    ASSERT_EQ(cli({"calibrate", "--config", config(), "--rate-mode", "g1pp", "--deterministic"}), kOk) << err_.str();
    const auto a = read_artifacts(dir_ / "out");
    EXPECT_EQ(a.rate_mode, RateMode::G1pp);
    ASSERT_EQ(a.surfaces.size(), 4u);
    const fs::path copy = dir_ / "copy";
    fs::create_directories(copy);
    write_artifacts(copy, a, read_futures_csv(dir_ / "futures.csv"), "# header");
    const auto b = read_artifacts(copy);
    for (std::size_t j = 0; j < a.surfaces.size(); ++j) {
        ASSERT_EQ(a.surfaces[j].times(), b.surfaces[j].times());
        for (std::size_t i = 0; i < a.surfaces[j].slice_count(); ++i) {
            const auto x = a.surfaces[j].slice(i), y = b.surfaces[j].slice(i);
            ASSERT_TRUE(std::equal(x.begin(), x.end(), y.begin(), y.end()));
        }
    }
    EXPECT_EQ(a.backbone.kappa, b.backbone.kappa);
    EXPECT_EQ(a.rates.rho_2r, b.rates.rho_2r);
}

TEST_F(CliTest, ValidateRejectsZeroPathsAndMismatches) {
    ASSERT_EQ(cli({"calibrate", "--config", config(), "--deterministic"}), kOk) << err_.str();
    EXPECT_EQ(cli({"validate", "--config", config(), "--paths", "0"}), kError);
    EXPECT_NE(err_.str().find("at least one path"), std::string::npos);

    EXPECT_EQ(cli({"validate", "--config", config(), "--accumulator", "quadratic"}), kError);
    EXPECT_NE(err_.str().find("accumulator"), std::string::npos);
    EXPECT_EQ(cli({"validate", "--config", config(), "--rate-mode", "g1pp"}), kError);

    auto params = slurp(dir_ / "out" / "params.json");
    const auto pos = params.find("\"artifact_version\": 1");
    ASSERT_NE(pos, std::string::npos);
    params.replace(pos, 21, "\"artifact_version\": 99");
    spit(dir_ / "out" / "params.json", params);
    EXPECT_EQ(cli({"validate", "--config", config()}), kError);
    EXPECT_NE(err_.str().find("artifact version mismatch"), std::string::npos);
}

TEST_F(CliTest, ValidateDetectsChangedMarket) {
    ASSERT_EQ(cli({"calibrate", "--config", config(), "--deterministic"}), kOk) << err_.str();
    auto futures = slurp(dir_ / "futures.csv");
    futures += "\n";
    spit(dir_ / "futures.csv", futures);
    EXPECT_EQ(cli({"validate", "--config", config()}), kError);
    EXPECT_NE(err_.str().find("market files differ"), std::string::npos);
}

TEST_F(CliTest, ValidateExitCodeFollowsThreshold) {
    write_config("", "paths = 2000\nseed = 9\n", "se_band = 0.000001\n");
    ASSERT_EQ(cli({"calibrate", "--config", config(), "--deterministic"}), kOk) << err_.str();
    EXPECT_EQ(cli({"validate", "--config", config(), "--deterministic"}), kBelowThreshold);
    write_config("", "paths = 2000\nseed = 9\n", "se_band = 0.000001\npass_rate = 0\n");
    EXPECT_EQ(cli({"calibrate", "--config", config(), "--deterministic"}), kOk);
    EXPECT_EQ(cli({"validate", "--config", config(), "--deterministic"}), kOk);
}

TEST_F(CliTest, ValidateWithoutArtifactsFails) {
    EXPECT_EQ(cli({"validate", "--config", config()}), kError);
    EXPECT_NE(err_.str().find("not found"), std::string::npos);
}

TEST_F(CliTest, DeterministicRerunIsByteIdentical) {
    const auto once = [&](const std::string& out) {
        EXPECT_EQ(cli({"calibrate", "--config", config(), "--rate-mode", "g1pp", "--out", out, "--deterministic"}), kOk);
        EXPECT_EQ(cli({"validate", "--config", config(), "--rate-mode", "g1pp", "--out", out, "--deterministic"}), kOk);
    };
    once((dir_ / "a").string());
    once((dir_ / "b").string());
    for (const char* f : {"params.json", "leverage.csv", "diagnostics.csv", "tiv.csv", "validation.csv"}) {
        EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
    }
}

TEST_F(CliTest, EstimateCorrWritesMonthlyTable) {
    ASSERT_EQ(cli({"estimate-corr", "--config", config(), "--deterministic"}), kOk) << err_.str();
    const auto text = slurp(dir_ / "out" / "corr.csv");
    EXPECT_NE(text.find("month,samples,correlation,p_value,low_sample"), std::string::npos);
    EXPECT_NE(text.find("\nall,"), std::string::npos);
    EXPECT_NE(out_.str().find("rho_inf"), std::string::npos);
}

TEST_F(CliTest, EstimateCorrNeedsReturns) {
    spit(dir_ / "bare.ini", "[market]\nfutures = futures.csv\nvols = vols.csv\ndiscount = discount.csv\n");
    EXPECT_EQ(cli({"estimate-corr", "--config", (dir_ / "bare.ini").string()}), kError);
}

}  // namespace
}  // namespace cclv::app
