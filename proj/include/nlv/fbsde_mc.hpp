#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nlv/deal_spec.hpp"
#include "nlv/market_model.hpp"
#include "nlv/pde_engine.hpp"

namespace nlv {

struct McConfig {
    int n_paths = 100000;
    int n_steps = 100;
    std::uint64_t seed = 42;
    int basis_degree = 4; // monomials in S/s0 up to this degree
    int picard_inner = 3; // fixed-point iterations for the implicit value
};

// Choice of forward drift for the backward solver: the reference rate (with
// the delta-hedge term kept in the generator) or the repo rate (generator B',
// no hedge term).
enum class DriftChoice { ReferenceRate, RepoRate };

struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
    int n_paths = 0;
    int n_steps = 0;
    std::uint64_t seed = 0;
    std::vector<double> condition_numbers; // per backward step, max of the two regressions
    std::vector<std::string> warnings;
};

// Regression-based backward Monte Carlo for the valuation FBSDE: simulate
// forward paths under the chosen drift, set V_T = Phi(S_T), then march
// backward regressing the continuation value and Z on a polynomial basis of
// S, applying the generator implicitly in V. When the repo legs differ and
// the drift is the repo rate, a second pass re-simulates with the drift leg
// chosen per step from the sign of the regressed Z.
McEstimate solve_backward(const DealSpec& deal, const MarketSpec& market,
                          DriftChoice drift_choice, const McConfig& config);

struct RepresentationReport {
    double mc_value = 0.0;   // funding-discounted flow integral under the repo drift
    double std_error = 0.0;
    double pde_value = 0.0;  // u(0, s0) read from the surface
    double residual = 0.0;   // mc_value - pde_value
    int n_paths = 0;
    int n_steps = 0;
    std::uint64_t seed = 0;
};

// Validates the funding-discounted representation of the value: simulate
// paths under the repo drift (leg chosen pathwise by the sign of the
// surface's z), read V = u(t, S_t) along each path, accumulate the
// f-discounted dividend/closeout/collateral flows plus the f-discounted
// terminal payoff, and compare against u(0, s0).
RepresentationReport representation_check(const ValueSurface& surface,
                                          const DealSpec& deal,
                                          const MarketSpec& market,
                                          const McConfig& config);

} // namespace nlv
