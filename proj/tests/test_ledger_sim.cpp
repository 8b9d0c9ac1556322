#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "nlv/ledger_sim.hpp"

using namespace nlv;

namespace {

DealSpec flat_deal(double h, double f, double c, double alpha) {
    DealSpec deal;
    deal.payoff = Payoff::call(100.0);
    deal.maturity = 1.0;
    deal.alpha = PiecewiseConstant(alpha);
    deal.leg_h = RateLeg::flat(h);
    deal.leg_f = RateLeg::flat(f);
    deal.leg_c = RateLeg::flat(c);
    return deal;
}

// Surface u(t, s) = 0.5*s + 5 on a small grid: value 10, delta 0.5 at s = 10.
ValueSurface affine_surface(const VolModel& vol) {
    const TimeGrid tg(0.0, 1.0, 10);
    const SpatialGrid sg(0.0, 40.0, 41);
    ValueSurface surf(tg, sg, vol);
    for (int j = 0; j < tg.n_nodes(); ++j)
        for (int i = 0; i < sg.n_space; ++i)
            surf.u(static_cast<std::size_t>(j), static_cast<std::size_t>(i)) =
                0.5 * sg.s(i) + 5.0;
    surf.recompute_z();
    return surf;
}

} // namespace

TEST_CASE("dphi: spreads and accounts") {
    CHECK(dphi(5.0, -3.0, 8.0, 0.02, 0.02, 0.02, 0.02) == doctest::Approx(0.0));
    CHECK(dphi(0.0, 0.0, 0.0, 0.03, 0.01, 0.04, 0.02) == doctest::Approx(0.0));
    // (0.01*5 + 0.005*(-3) + 0.015*8) = 0.155 per year
    CHECK(dphi(5.0, -3.0, 8.0, 0.03, 0.02, 0.01, 0.025) == doctest::Approx(0.155).epsilon(1e-12));
}

TEST_CASE("replay: hand-built single step reproduces the worked accounts") {
    const VolModel vol = VolModel::proportional(0.2);
    const ValueSurface surf = affine_surface(vol);
    const DealSpec deal = flat_deal(0.03, 0.02, 0.01, 0.8);
    const MarketSpec market{10.0, PiecewiseConstant(0.025), vol};

    const std::vector<double> path = {10.0, 10.0};
    const LedgerReport report = replay(path, surf, deal, market, 0.01);
    REQUIRE(report.steps.size() == 1);
    const LedgerStep& step = report.steps.front();

    CHECK(step.value == doctest::Approx(10.0));
    CHECK(step.coll == doctest::Approx(8.0));
    CHECK(step.hedge_cash == doctest::Approx(5.0));
    CHECK(step.funding == doctest::Approx(-3.0));
    CHECK(step.dphi_dt == doctest::Approx(0.00155).epsilon(1e-10));

    // flows recombine exactly
    CHECK(step.total_net == doctest::Approx(step.repo_net + step.derivative_net +
                                            step.collateral_net + step.treasury_net)
                                .epsilon(1e-15));
}

TEST_CASE("replay: zero deal on a flat path produces zero flows") {
    const VolModel vol = VolModel::proportional(0.0);
    const TimeGrid tg(0.0, 1.0, 10);
    const SpatialGrid sg(0.0, 40.0, 41);
    ValueSurface surf(tg, sg, vol); // u identically zero
    surf.recompute_z();
    const DealSpec deal = flat_deal(0.0, 0.0, 0.0, 0.0);
    const MarketSpec market{10.0, PiecewiseConstant(0.0), vol};

    const std::vector<double> path(11, 10.0);
    const LedgerReport report = replay(path, surf, deal, market, 0.1);
    for (const auto& step : report.steps) {
        CHECK(step.total_net == 0.0);
        CHECK(step.dphi_dt == 0.0);
        CHECK(step.residual == doctest::Approx(0.0));
    }
}

TEST_CASE("replay: account identity F = V - H - C at every step open") {
    const VolModel vol = VolModel::proportional(0.2);
    DealSpec deal = flat_deal(0.025, 0.03, 0.01, 0.6);
    deal.payoff = Payoff::straddle(100.0);
    const MarketSpec market{100.0, PiecewiseConstant(0.02), vol};
    const TimeGrid tg(0.0, 1.0, 100);
    const SpatialGrid sg = SpatialGrid::standard(100.0, 0.2, 1.0, 101);
    const ValueSurface surf = solve_independent(deal, vol, tg, sg, PdeConfig{});

    const TimeGrid path_grid(0.0, 1.0, 50);
    const Matrix paths = simulate_paths(market, market.r, path_grid, 3, 5);
    for (int p = 0; p < 3; ++p) {
        std::vector<double> path(51);
        for (int i = 0; i <= 50; ++i) path[static_cast<std::size_t>(i)] = paths(p, i);
        const LedgerReport report = replay(path, surf, deal, market, 0.02);
        for (const auto& step : report.steps)
            CHECK(step.funding ==
                  doctest::Approx(step.value - step.hedge_cash - step.coll).epsilon(1e-14));
    }
}

TEST_CASE("replay: rejects non-rehypothecation deals and off-grid paths") {
    const VolModel vol = VolModel::proportional(0.2);
    const ValueSurface surf = affine_surface(vol);
    DealSpec deal = flat_deal(0.0, 0.0, 0.0, 0.5);
    const MarketSpec market{10.0, PiecewiseConstant(0.0), vol};

    DealSpec no_rehypo = deal;
    no_rehypo.rehypothecation = false;
    const std::vector<double> path = {10.0, 10.0};
    CHECK_THROWS_AS(replay(path, surf, no_rehypo, market, 0.01), std::invalid_argument);

    const std::vector<double> outside = {10.0, 80.0}; // exits the 0..40 hull
    CHECK_THROWS_AS(replay(outside, surf, deal, market, 0.01), std::out_of_range);
}

TEST_CASE("convergence_order: synthetic residual scalings") {
    const std::vector<double> dts = {0.02, 0.01, 0.005, 0.0025};
    std::vector<double> quad, lin;
    for (double dt : dts) {
        quad.push_back(3.0 * dt * dt);
        lin.push_back(0.7 * dt);
    }
    CHECK(convergence_order(dts, quad).order == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(convergence_order(dts, lin).order == doctest::Approx(1.0).epsilon(1e-9));

    const std::vector<double> zero = {0.0, 0.0, 0.0, 0.0};
    const ConvergenceFit z = convergence_order(dts, zero);
    CHECK(z.order == 0.0);
    CHECK_FALSE(z.warnings.empty());

    const std::vector<double> bumpy = {1e-3, 2e-3, 0.5e-3, 0.2e-3};
    CHECK_FALSE(convergence_order(dts, bumpy).monotone);

    CHECK_THROWS_AS(convergence_order(std::vector<double>{0.1, 0.2}, std::vector<double>{1, 2}),
                    std::invalid_argument);
}

TEST_CASE("replay against the exact Black-Scholes surface: clean residual orders") {
    // all rates flat 0.02, no credit: residual per step is pure step
    // discretization, O(dt^2), and the accumulated residual is O(dt)
    const double rate = 0.02;
    const DealSpec deal = flat_deal(rate, rate, rate, 0.5);
    const VolModel vol = VolModel::proportional(0.2);
    const MarketSpec market{100.0, PiecewiseConstant(rate), vol};
    const BlackScholesSurfaceView surface(100.0, 1.0, rate, 0.2);

    const int n_fine = 64;
    const TimeGrid fine(0.0, 1.0, n_fine);
    const Matrix paths = simulate_paths(market, market.r, fine, 5, 99);

    const std::vector<int> strides = {8, 4, 2, 1};
    std::vector<double> dts, accum, max_step;
    for (int stride : strides) {
        const int n = n_fine / stride;
        const double dt = 1.0 / n;
        double acc = 0.0, mx = 0.0;
        for (int p = 0; p < 5; ++p) {
            std::vector<double> path(static_cast<std::size_t>(n) + 1);
            for (int i = 0; i <= n; ++i)
                path[static_cast<std::size_t>(i)] = paths(p, static_cast<std::size_t>(i) * stride);
            const LedgerReport rep = replay(path, surface, deal, market, dt);
            acc += std::abs(rep.accum_residual);
            mx = std::max(mx, rep.max_abs_residual);
        }
        dts.push_back(dt);
        accum.push_back(acc / 5.0);
        max_step.push_back(mx);
    }

    const ConvergenceFit step_fit = convergence_order(dts, max_step);
    CHECK(step_fit.order > 1.8);
    CHECK(step_fit.order < 2.4);
    const ConvergenceFit accum_fit = convergence_order(dts, accum);
    CHECK(accum_fit.order > 0.9);
}

TEST_CASE("replay against the PDE surface: residuals stay near the surface error scale") {
    const VolModel vol = VolModel::proportional(0.2);
    DealSpec deal = flat_deal(0.025, 0.03, 0.015, 0.5);
    deal.payoff = Payoff::straddle(100.0);
    deal.credit = {PiecewiseConstant(0.01), PiecewiseConstant(0.01), 0.6, 0.6};
    const MarketSpec market{100.0, PiecewiseConstant(0.02), vol};
    const TimeGrid tg(0.0, 1.0, 200);
    const SpatialGrid sg = SpatialGrid::standard(100.0, 0.2, 1.0, 201);
    const ValueSurface surf = solve_independent(deal, vol, tg, sg, PdeConfig{});

    const TimeGrid path_grid(0.0, 1.0, 40);
    const Matrix paths = simulate_paths(market, market.r, path_grid, 3, 12);
    for (int p = 0; p < 3; ++p) {
        std::vector<double> path(41);
        for (int i = 0; i <= 40; ++i) path[static_cast<std::size_t>(i)] = paths(p, i);
        const LedgerReport rep = replay(path, surf, deal, market, 0.025);
        CHECK(rep.max_abs_residual < 0.05);
        CHECK(std::abs(rep.accum_residual) < 0.05);
    }
}
