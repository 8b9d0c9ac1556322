#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nlv/harness.hpp"

using namespace nlv;

namespace {

const char* kSampleConfig = R"(# sample scenario
[market]
s0 = 100
r = 0.02
vol_kind = proportional
vol = 0.2

[deal]
payoff = straddle
strike = 100
maturity = 1.0
alpha = 0.5
lambda_i = 0.01
lambda_c = 0.01
lgd_i = 0.6
lgd_c = 0.6
c_plus = 0.02
c_minus = 0.005
f_plus = 0.04
f_minus = 0.01
h_plus = 0.025
h_minus = 0.025

[pde]
n_space = 81
n_time = 80

[mc]
n_paths = 4000
n_steps = 20
seed = 9

[invariance]
sweep = 0.0, 0.05

[run]
mode = value
out = out
)";

ScenarioConfig parse_text(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

} // namespace

TEST_CASE("parse_config: sample scenario fields") {
    const ScenarioConfig cfg = parse_text(kSampleConfig);
    CHECK(cfg.market.s0 == doctest::Approx(100.0));
    CHECK(cfg.market.r(0.5) == doctest::Approx(0.02));
    CHECK(cfg.market.vol.is_proportional());
    CHECK(cfg.deal.payoff.kind() == PayoffKind::Straddle);
    CHECK(cfg.deal.payoff.strike() == doctest::Approx(100.0));
    CHECK(cfg.deal.leg_f.plus(0.0) == doctest::Approx(0.04));
    CHECK(cfg.deal.leg_f.minus(0.0) == doctest::Approx(0.01));
    CHECK(cfg.deal.leg_h.sign_independent());
    CHECK(cfg.pde.n_space == 81);
    CHECK(cfg.mc.seed == 9);
    CHECK(cfg.sweep == std::vector<double>{0.0, 0.05});
    CHECK(cfg.mode == RunMode::Value);
}

TEST_CASE("parse_config: diagnostics carry line and field context") {
    CHECK_THROWS_AS(parse_text(""), ConfigError);
    CHECK_THROWS_WITH_AS(parse_text("[market]\ns0 = abc\n"),
                         doctest::Contains("expected a number"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_text("[market]\nbogus_key = 1\n"),
                         doctest::Contains("missing required key"), ConfigError);

    CHECK_THROWS_AS(parse_text(kSampleConfig + std::string("\n[bogus]\nx = 1\n")), ConfigError);

    std::string unknown_key = kSampleConfig;
    unknown_key += "\n[ledger]\nmystery = 2\n";
    CHECK_THROWS_WITH_AS(parse_text(unknown_key), doctest::Contains("unknown key"), ConfigError);

    const std::string no_eq = "[market]\ns0 100\n";
    CHECK_THROWS_WITH_AS(parse_text(no_eq), doctest::Contains("line 2"), ConfigError);
}

TEST_CASE("parse_config: invariance mode requires a sweep") {
    std::string text = kSampleConfig;
    const auto pos = text.find("sweep = 0.0, 0.05");
    text.erase(pos, std::string("sweep = 0.0, 0.05").size());
    const auto mode_pos = text.find("mode = value");
    text.replace(mode_pos, std::string("mode = value").size(), "mode = invariance");
    CHECK_THROWS_WITH_AS(parse_text(text), doctest::Contains("sweep"), ConfigError);
}

TEST_CASE("parse_schedule: scalar and bucket forms") {
    const PiecewiseConstant flat = parse_schedule("0.03");
    CHECK(flat.is_flat());
    CHECK(flat(2.0) == doctest::Approx(0.03));

    const PiecewiseConstant buckets = parse_schedule("0:0.01, 1:0.03");
    CHECK(buckets(0.5) == doctest::Approx(0.01));
    CHECK(buckets(1.5) == doctest::Approx(0.03));

    CHECK_THROWS(parse_schedule("0:0.01, nope"));
}

TEST_CASE("fnv1a_hash: stable and content-sensitive") {
    CHECK(fnv1a_hash("abc") == fnv1a_hash("abc"));
    CHECK(fnv1a_hash("abc") != fnv1a_hash("abd"));
}

TEST_CASE("run_invariance_sweep: delta hedge passes, no hedge fails") {
    ScenarioConfig cfg = parse_text(kSampleConfig);
    cfg.pde.n_space = 101;
    cfg.pde.n_time = 100;

    const InvarianceReport hedged = run_invariance_sweep(cfg);
    CHECK(hedged.pass);
    CHECK(hedged.max_abs_dev <= 3.0 * hedged.grid_error_estimate);
    CHECK(hedged.entries.size() == 2);

    cfg.pde.hedge = HedgeMode::None;
    const InvarianceReport unhedged = run_invariance_sweep(cfg);
    CHECK_FALSE(unhedged.pass);
    CHECK(unhedged.max_abs_dev > 10.0 * hedged.max_abs_dev);
}

TEST_CASE("compare_pde_mc: z-score under 3 on the sample deal") {
    ScenarioConfig cfg = parse_text(kSampleConfig);
    cfg.pde.n_space = 201;
    cfg.pde.n_time = 200;
    cfg.mc.n_paths = 20000;
    cfg.mc.n_steps = 50;
    const auto rows = compare_pde_mc(cfg);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].pass);
    CHECK(rows[0].z_score <= 3.0);
}

TEST_CASE("run_scenario: value mode writes surfaces and a manifest") {
    ScenarioConfig cfg = parse_text(kSampleConfig);
    cfg.pde.n_space = 51;
    cfg.pde.n_time = 50;
    const auto dir =
        std::filesystem::temp_directory_path() / "nlv_test_value_mode";
    std::filesystem::remove_all(dir);
    cfg.out_dir = dir.string();

    CHECK(run_scenario(cfg) == 0);
    CHECK(std::filesystem::exists(dir / "surface_u.csv"));
    CHECK(std::filesystem::exists(dir / "surface_z.csv"));
    CHECK(std::filesystem::exists(dir / "value.csv"));

    std::ifstream mf(dir / "manifest.json");
    REQUIRE(mf.good());
    nlohmann::json manifest;
    mf >> manifest;
    CHECK(manifest["mode"] == "value");
    CHECK(manifest["exit_code"] == 0);
    CHECK(manifest.contains("config_hash"));
    CHECK(manifest["validation"]["failures"].empty());

    // reruns reproduce the CSVs bit-identically
    auto read_file = [](const std::filesystem::path& p) {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const std::string first = read_file(dir / "surface_u.csv");
    CHECK(run_scenario(cfg) == 0);
    CHECK(read_file(dir / "surface_u.csv") == first);
    std::filesystem::remove_all(dir);
}

TEST_CASE("run_scenario: ledger mode reports residual diagnostics") {
    ScenarioConfig cfg = parse_text(kSampleConfig);
    cfg.mode = RunMode::Ledger;
    cfg.pde.n_space = 201;
    cfg.pde.n_time = 200;
    cfg.ledger.n_paths = 10;
    cfg.ledger.dt_levels = {0.1, 0.05, 0.025};
    const auto dir = std::filesystem::temp_directory_path() / "nlv_test_ledger_mode";
    std::filesystem::remove_all(dir);
    cfg.out_dir = dir.string();

    CHECK(run_scenario(cfg) == 0);
    std::ifstream mf(dir / "manifest.json");
    nlohmann::json manifest;
    mf >> manifest;
    CHECK(manifest.contains("step_residual_order"));
    CHECK(manifest["residual_at_finest"].get<double>() < 0.05);
    CHECK(std::filesystem::exists(dir / "ledger_summary.csv"));
    CHECK(std::filesystem::exists(dir / "ledger_path0.csv"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("run_scenario: representation mode reports the residual") {
    ScenarioConfig cfg = parse_text(kSampleConfig);
    cfg.mode = RunMode::Representation;
    cfg.pde.n_space = 201;
    cfg.pde.n_time = 200;
    cfg.mc.n_paths = 10000;
    cfg.mc.n_steps = 25;
    const auto dir = std::filesystem::temp_directory_path() / "nlv_test_repr_mode";
    std::filesystem::remove_all(dir);
    cfg.out_dir = dir.string();

    CHECK(run_scenario(cfg) == 0);
    std::ifstream mf(dir / "manifest.json");
    nlohmann::json manifest;
    mf >> manifest;
    CHECK(manifest["pass"] == true);
    CHECK(std::filesystem::exists(dir / "representation.csv"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("run_scenario: validation failures surface as exit code 1") {
    ScenarioConfig cfg = parse_text(kSampleConfig);
    cfg.deal.credit.lgd_i = 2.0; // invalid
    const auto dir = std::filesystem::temp_directory_path() / "nlv_test_invalid_deal";
    std::filesystem::remove_all(dir);
    cfg.out_dir = dir.string();
    CHECK(run_scenario(cfg) == 1);
    std::ifstream mf(dir / "manifest.json");
    nlohmann::json manifest;
    mf >> manifest;
    CHECK(manifest["exit_code"] == 1);
    CHECK_FALSE(manifest["validation"]["failures"].empty());
    std::filesystem::remove_all(dir);
}
