#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nlv/deal_spec.hpp"
#include "nlv/fbsde_mc.hpp"
#include "nlv/ledger_sim.hpp"
#include "nlv/market_model.hpp"
#include "nlv/pde_engine.hpp"

namespace nlv {

enum class RunMode { Value, Invariance, McCompare, Ledger, Representation };

struct PdeSection {
    int n_space = 400;
    int n_time = 400;
    double s_min = 0.0;
    std::optional<double> s_max; // absent -> standard truncation
    PdeConfig config;
    HedgeMode hedge = HedgeMode::Delta;
};

struct LedgerSection {
    int n_paths = 100;
    std::vector<double> dt_levels = {0.02, 0.01, 0.005, 0.0025};
    bool analytic_surface = false; // exact Black-Scholes reference instead of the PDE surface
};

struct ScenarioConfig {
    MarketSpec market;
    DealSpec deal;
    PdeSection pde;
    McConfig mc;
    std::vector<double> sweep; // reference-rate values for invariance mode
    LedgerSection ledger;
    RunMode mode = RunMode::Value;
    std::string out_dir = "out";
    std::string source_text; // raw config text, hashed into the manifest
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Parses the INI-style scenario grammar documented in the README. Throws
// ConfigError with line/field diagnostics.
ScenarioConfig parse_config(std::istream& in);
ScenarioConfig parse_config_file(const std::string& path);

// Scalar schedule entry ("0.02") or bucket list ("0:0.01, 1:0.03").
PiecewiseConstant parse_schedule(const std::string& text);

struct InvarianceEntry {
    double r = 0.0;
    double value_at_s0 = 0.0;
    double max_abs_dev = 0.0; // vs the rate-free solve, interior nodes at t = 0
    double max_rel_dev = 0.0;
};

struct InvarianceReport {
    std::vector<InvarianceEntry> entries;
    double independent_value_at_s0 = 0.0;
    double max_abs_dev = 0.0;
    double max_rel_dev = 0.0;
    double grid_error_estimate = 0.0; // one-level refinement difference
    bool pass = false;                // max_abs_dev <= 3 * grid_error_estimate
};

// Solves the rate-drift equation once per sweep rate (concurrently) plus the
// rate-free equation once, and reports the deviation of u(0, .) over the
// interior 80% of the spatial grid.
InvarianceReport run_invariance_sweep(const ScenarioConfig& config);

struct McComparisonRow {
    std::string label;
    double pde_value = 0.0;
    double mc_value = 0.0;
    double std_error = 0.0;
    double z_score = 0.0;
    bool pass = false; // |z| <= 3
};

std::vector<McComparisonRow> compare_pde_mc(const ScenarioConfig& config);

// Runs the configured mode end to end, writing CSVs and a JSON run manifest
// (config hash, version, seeds) into out_dir. Returns 0 on pass, 1 on
// numerical failure. Config errors surface as ConfigError before this runs.
int run_scenario(const ScenarioConfig& config);

std::uint64_t fnv1a_hash(const std::string& text);
const char* version_string();

} // namespace nlv
