#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "nlv/fbsde_mc.hpp"

using namespace nlv;

namespace {

DealSpec linear_deal() {
    DealSpec deal;
    deal.payoff = Payoff::call(100.0);
    deal.maturity = 1.0;
    deal.alpha = PiecewiseConstant(0.0);
    deal.leg_c = RateLeg::flat(0.02);
    deal.leg_f = RateLeg::flat(0.02);
    deal.leg_h = RateLeg::flat(0.02);
    return deal;
}

DealSpec straddle_deal() {
    DealSpec deal;
    deal.payoff = Payoff::straddle(100.0);
    deal.maturity = 1.0;
    deal.alpha = PiecewiseConstant(0.5);
    deal.credit = {PiecewiseConstant(0.01), PiecewiseConstant(0.01), 0.6, 0.6};
    deal.leg_f = RateLeg::asymmetric(PiecewiseConstant(0.04), PiecewiseConstant(0.01));
    deal.leg_c = RateLeg::asymmetric(PiecewiseConstant(0.02), PiecewiseConstant(0.005));
    deal.leg_h = RateLeg::flat(0.025);
    return deal;
}

MarketSpec market_with_r(double r) {
    return {100.0, PiecewiseConstant(r), VolModel::proportional(0.2)};
}

McConfig small_config(std::uint64_t seed = 7, int n_paths = 20000, int n_steps = 50) {
    McConfig cfg;
    cfg.n_paths = n_paths;
    cfg.n_steps = n_steps;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_CASE("solve_backward: zero deal estimates exactly zero") {
    DealSpec deal;
    deal.payoff = Payoff::constant(0.0);
    deal.maturity = 1.0;
    const McEstimate est =
        solve_backward(deal, market_with_r(0.02), DriftChoice::RepoRate, small_config(1, 2000, 10));
    CHECK(est.value == doctest::Approx(0.0));
    CHECK(est.std_error == doctest::Approx(0.0));
}

TEST_CASE("solve_backward: linear limit within 3 standard errors of Black-Scholes") {
    const double oracle = bs_closed_form(100.0, 100.0, 1.0, 0.02, 0.2);
    const McEstimate est =
        solve_backward(linear_deal(), market_with_r(0.02), DriftChoice::RepoRate, small_config());
    CHECK(est.std_error > 0.0);
    CHECK(std::abs(est.value - oracle) <= 3.0 * est.std_error);
}

TEST_CASE("solve_backward: deterministic given the seed") {
    const McConfig cfg = small_config(11, 5000, 20);
    const McEstimate a =
        solve_backward(straddle_deal(), market_with_r(0.02), DriftChoice::RepoRate, cfg);
    const McEstimate b =
        solve_backward(straddle_deal(), market_with_r(0.02), DriftChoice::RepoRate, cfg);
    CHECK(a.value == b.value);
    CHECK(a.std_error == b.std_error);
    CHECK(a.condition_numbers == b.condition_numbers);
}

TEST_CASE("solve_backward: standard error scales like 1/sqrt(n_paths)") {
    double ratio_sum = 0.0;
    for (std::uint64_t seed : {21, 22, 23, 24, 25}) {
        const McEstimate small = solve_backward(linear_deal(), market_with_r(0.02),
                                                DriftChoice::RepoRate, small_config(seed, 4000, 20));
        const McEstimate big = solve_backward(linear_deal(), market_with_r(0.02),
                                              DriftChoice::RepoRate, small_config(seed, 16000, 20));
        ratio_sum += big.std_error / small.std_error;
    }
    const double mean_ratio = ratio_sum / 5.0;
    CHECK(mean_ratio > 0.4);
    CHECK(mean_ratio < 0.6);
}

TEST_CASE("solve_backward: basis degree 3 vs 5 moves the estimate less than one std error") {
    McConfig deg3 = small_config(5);
    deg3.basis_degree = 3;
    McConfig deg5 = small_config(5);
    deg5.basis_degree = 5;
    const McEstimate a =
        solve_backward(linear_deal(), market_with_r(0.02), DriftChoice::RepoRate, deg3);
    const McEstimate b =
        solve_backward(linear_deal(), market_with_r(0.02), DriftChoice::RepoRate, deg5);
    CHECK(std::abs(a.value - b.value) <= a.std_error);
}

TEST_CASE("solve_backward: reference-rate drift with delta hedge agrees with repo drift") {
    const DealSpec deal = straddle_deal();
    const MarketSpec market = market_with_r(0.08); // r far from h
    const McConfig cfg = small_config(3, 30000, 50);
    const McEstimate repo = solve_backward(deal, market, DriftChoice::RepoRate, cfg);
    const McEstimate ref = solve_backward(deal, market, DriftChoice::ReferenceRate, cfg);
    const double combined = std::hypot(repo.std_error, ref.std_error);
    CHECK(std::abs(repo.value - ref.value) <= 3.0 * combined);
}

TEST_CASE("solve_backward: asymmetric repo legs re-select the drift from the hedge sign") {
    // put: the regressed Z is negative, so the second pass simulates under
    // the minus repo leg; the estimate must match the switching PDE solve
    DealSpec deal = linear_deal();
    deal.payoff = Payoff::put(100.0);
    deal.leg_h = RateLeg::asymmetric(PiecewiseConstant(0.04), PiecewiseConstant(0.01));
    const MarketSpec market = market_with_r(0.02);

    const TimeGrid tg(0.0, 1.0, 200);
    const SpatialGrid sg = SpatialGrid::standard(100.0, 0.2, 1.0, 201);
    const double pde_value =
        solve_independent(deal, market.vol, tg, sg, PdeConfig{}).value_at(0.0, 100.0);

    const McEstimate est =
        solve_backward(deal, market, DriftChoice::RepoRate, small_config(77, 40000, 50));
    CHECK(std::abs(est.value - pde_value) <= 3.0 * est.std_error);
    bool mentioned = false;
    for (const auto& w : est.warnings)
        mentioned = mentioned || w.find("re-selected") != std::string::npos;
    CHECK(mentioned);
}

TEST_CASE("solve_backward: rejects a basis larger than the sample") {
    McConfig cfg = small_config(1, 3, 4);
    CHECK_THROWS_AS(
        solve_backward(linear_deal(), market_with_r(0.02), DriftChoice::RepoRate, cfg),
        std::invalid_argument);
}

TEST_CASE("solve_backward: degenerate paths trigger the conditioning warning") {
    // zero vol collapses every path onto one point; the regression matrix is
    // rank one and the pseudo-inverse falls back to the plain average
    const MarketSpec market{100.0, PiecewiseConstant(0.02), VolModel::proportional(0.0)};
    const McEstimate est = solve_backward(linear_deal(), market, DriftChoice::RepoRate,
                                          small_config(4, 500, 10));
    CHECK_FALSE(est.warnings.empty());
    const double oracle = std::max(100.0 * std::exp(0.02) - 100.0, 0.0) * std::exp(-0.02);
    CHECK(est.value == doctest::Approx(oracle).epsilon(5e-3));
}

TEST_CASE("representation_check: zero deal has zero residual") {
    DealSpec deal;
    deal.payoff = Payoff::constant(0.0);
    deal.maturity = 1.0;
    const TimeGrid tg(0.0, 1.0, 50);
    const SpatialGrid sg = SpatialGrid::standard(100.0, 0.2, 1.0, 101);
    const ValueSurface surf =
        solve_independent(deal, VolModel::proportional(0.2), tg, sg, PdeConfig{});
    const RepresentationReport rep =
        representation_check(surf, deal, market_with_r(0.02), small_config(1, 2000, 20));
    CHECK(rep.mc_value == doctest::Approx(0.0));
    CHECK(rep.residual == doctest::Approx(0.0));
}

TEST_CASE("representation_check: linear limit residual within 3 standard errors") {
    const DealSpec deal = linear_deal();
    const TimeGrid tg(0.0, 1.0, 200);
    const SpatialGrid sg = SpatialGrid::standard(100.0, 0.2, 1.0, 201);
    const ValueSurface surf =
        solve_independent(deal, VolModel::proportional(0.2), tg, sg, PdeConfig{});
    const RepresentationReport rep =
        representation_check(surf, deal, market_with_r(0.02), small_config(17));
    CHECK(std::abs(rep.residual) <= 3.0 * rep.std_error);
}

TEST_CASE("representation_check: nonlinear straddle residual within 3 standard errors") {
    const DealSpec deal = straddle_deal();
    const TimeGrid tg(0.0, 1.0, 200);
    const SpatialGrid sg = SpatialGrid::standard(100.0, 0.2, 1.0, 201);
    const ValueSurface surf =
        solve_independent(deal, VolModel::proportional(0.2), tg, sg, PdeConfig{});
    const RepresentationReport rep =
        representation_check(surf, deal, market_with_r(0.02), small_config(19));
    CHECK(std::abs(rep.residual) <= 3.0 * rep.std_error);
}

TEST_CASE("representation_check: rejects a mismatched surface") {
    const DealSpec deal = linear_deal();
    const TimeGrid tg(0.0, 0.5, 10); // wrong maturity
    const SpatialGrid sg = SpatialGrid::standard(100.0, 0.2, 0.5, 51);
    const ValueSurface surf =
        solve_independent(deal, VolModel::proportional(0.2), tg, sg, PdeConfig{});
    CHECK_THROWS_AS(representation_check(surf, deal, market_with_r(0.02), small_config()),
                    std::invalid_argument);
}
