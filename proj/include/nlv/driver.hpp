#pragma once

#include "nlv/deal_spec.hpp"

namespace nlv {

// Everything the backward-equation generators need: the deal, the reference
// rate schedule (used only by the rate-dependent generator B, never by B'),
// and the precomputed first-to-default intensity lambda = lambda_i + lambda_c.
struct DriverContext {
    DriverContext(const DealSpec& deal, PiecewiseConstant r_schedule);

    const DealSpec* deal;
    PiecewiseConstant r;
    PiecewiseConstant lambda;
};

// Two-sided rate selection: plus leg for indicator > 0, minus leg for
// indicator <= 0 (zero takes the minus leg).
double select_rate(const RateLeg& leg, double t, double indicator);

// Collateral account C = alpha(t) * v; sign inherited from v.
double collateral(const DealSpec& deal, double t, double v);

// Pre-default flow of the default leg under replacement closeout (epsilon = v):
//   lambda*v - lgd_c*lambda_c*((1-alpha)v)^+ + lgd_i*lambda_i*((1-alpha)v)^-
// where (x)^- = -(-x)^+ is nonpositive.
double closeout_theta_tilde(const DriverContext& ctx, double t, double v);

struct RateTriple {
    double c;
    double f;
    double h;
};

// Sign-dependent rates: c switches on the collateral alpha*v, f on the
// uncollateralized value (1-alpha)*v, h on the hedge sign proxy z.
RateTriple effective_rates(const DriverContext& ctx, double t, double v, double z);

// Rate-dependent generator:
//   pi + theta_tilde + (f*(alpha-1) - lambda - c*alpha)*v - (r - h)*hedge
double driver_B(const DriverContext& ctx, double t, double s, double v, double z,
                double hedge);

// Repo-drift generator (no reference rate, no z beyond rate selection on v):
//   pi + theta_tilde - lambda*v + f*v*(alpha-1) - c*alpha*v
double driver_Bprime(const DriverContext& ctx, double t, double s, double v);

// Delta-hedge position H = s*z/sigma; throws std::domain_error for sigma <= 0.
double delta_hedge(double s, double z, double sigma);

// Treasury account from the replication identity: F = v - hedge - collateral
// under rehypothecation, F = v - hedge otherwise.
double funding_account(const DealSpec& deal, double v, double hedge, double coll);

// Conservative global Lipschitz constant of B in (v, z):
//   K = sup|lambda| + sup|f|*(1+sup alpha) + sup|c|*sup alpha
//     + sup(lambda_c*lgd_c + lambda_i*lgd_i)*(1+sup alpha)
//     + sup|r-h| * L_hedge
// with L_hedge = sup s/sigma(t,s) over s in [0, s_max]. Throws on unbounded
// schedules.
double lipschitz_bound(const DriverContext& ctx, const VolModel& vol, double s_max);

} // namespace nlv
