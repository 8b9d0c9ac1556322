#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nlv/deal_spec.hpp"
#include "nlv/market_model.hpp"
#include "nlv/pde_engine.hpp"

namespace nlv {

// Read-only view of a pricing surface for the trading replay: value, hedge
// ratio, and the one-step conditional expectation of the next value under a
// deterministic drift. Grid surfaces implement the expectation by
// Gauss-Hermite quadrature of the interpolated surface; analytic surfaces
// can supply it in closed form.
class PriceSurfaceView {
public:
    virtual ~PriceSurfaceView() = default;
    virtual double value(double t, double s) const = 0;
    virtual double delta(double t, double s) const = 0;
    virtual double step_expectation(double t, double dt, double s,
                                    double drift_rate) const = 0;
};

// PDE surface adapter; quadrature follows the same stepping convention as
// simulate_paths (exact lognormal step for proportional vol, Euler in level
// space otherwise).
class GridSurfaceView : public PriceSurfaceView {
public:
    explicit GridSurfaceView(const ValueSurface& surface);
    double value(double t, double s) const override;
    double delta(double t, double s) const override;
    double step_expectation(double t, double dt, double s, double drift_rate) const override;

private:
    const ValueSurface* surface_;
};

// Exact Black-Scholes call surface (flat rate and proportional vol); the
// step expectation is a closed-form Black evaluation, so replay residuals
// against it carry no interpolation or quadrature error.
class BlackScholesSurfaceView : public PriceSurfaceView {
public:
    BlackScholesSurfaceView(double strike, double maturity, double rate, double sigma);
    double value(double t, double s) const override;
    double delta(double t, double s) const override;
    double step_expectation(double t, double dt, double s, double drift_rate) const override;

private:
    double strike_, maturity_, rate_, sigma_;
};

// One interval [t, t+dt] of the trading protocol: account snapshot at the
// open, realized flows over the interval, the funding-cost accrual, and the
// residual against the continuous-time accrual model.
struct LedgerStep {
    double t = 0.0;
    double spot = 0.0;
    double value = 0.0;      // V
    double coll = 0.0;       // C
    double hedge_cash = 0.0; // H
    double funding = 0.0;    // F = V - H - C
    double repo_net = 0.0;
    double collateral_net = 0.0;
    double treasury_net = 0.0;
    double derivative_net = 0.0;
    double total_net = 0.0;
    double dphi_dt = 0.0;  // dphi(t) * dt over the interval
    double residual = 0.0; // expected flows minus modeled accrual
};

struct LedgerReport {
    std::vector<LedgerStep> steps;
    double max_abs_residual = 0.0;
    double accum_residual = 0.0; // signed sum over steps
    double fitted_order = 0.0;   // stamped by refinement studies, 0 until then
};

// Funding-cost accrual rate: (h-f)*H + (r-f)*F + (r-c)*C.
double dphi(double H, double F, double C, double h, double f, double c, double r);

// Replays the per-interval trading protocol along one realized path sampled
// on the dt grid: open the derivative, post/receive collateral, finance the
// delta hedge through the repo account, close everything at t+dt, and record
// each flow. Realized flows are an arithmetic identity; the residual per
// step replaces realized increments by their one-step conditional
// expectations and subtracts the modeled accrual (dividend and closeout
// flows), so it measures pure discretization error and vanishes as dt -> 0.
// Requires rehypothecation (the protocol hands collateral to the treasury).
LedgerReport replay(std::span<const double> path, const PriceSurfaceView& surface,
                    const DealSpec& deal, const MarketSpec& market, double dt);

// ValueSurface convenience overload (wraps a GridSurfaceView).
LedgerReport replay(std::span<const double> path, const ValueSurface& surface,
                    const DealSpec& deal, const MarketSpec& market, double dt);

struct ConvergenceFit {
    double order = 0.0; // least-squares slope of log(residual) vs log(dt)
    bool monotone = true;
    std::vector<std::string> warnings;
};

// Least-squares order fit over >= 3 dt levels; warns when residuals are not
// monotone in dt or vanish identically.
ConvergenceFit convergence_order(std::span<const double> dts,
                                 std::span<const double> residuals);

} // namespace nlv
