#include "nlv/driver.hpp"

#include <cmath>
#include <stdexcept>

namespace nlv {

DriverContext::DriverContext(const DealSpec& deal_in, PiecewiseConstant r_schedule)
    : deal(&deal_in),
      r(std::move(r_schedule)),
      lambda(sum(deal_in.credit.lambda_i, deal_in.credit.lambda_c)) {}

double select_rate(const RateLeg& leg, double t, double indicator) {
    return indicator > 0.0 ? leg.plus(t) : leg.minus(t);
}

double collateral(const DealSpec& deal, double t, double v) {
    return deal.alpha(t) * v;
}

double closeout_theta_tilde(const DriverContext& ctx, double t, double v) {
    const CreditSpec& cr = ctx.deal->credit;
    const double a = ctx.deal->alpha(t);
    const double exposure = (1.0 - a) * v; // epsilon - C with epsilon = v
    const double pos = std::max(exposure, 0.0);
    const double neg = -std::max(-exposure, 0.0);
    return ctx.lambda(t) * v - cr.lgd_c * cr.lambda_c(t) * pos + cr.lgd_i * cr.lambda_i(t) * neg;
}

RateTriple effective_rates(const DriverContext& ctx, double t, double v, double z) {
    const double a = ctx.deal->alpha(t);
    return {select_rate(ctx.deal->leg_c, t, a * v),
            select_rate(ctx.deal->leg_f, t, (1.0 - a) * v),
            select_rate(ctx.deal->leg_h, t, z)};
}

double driver_B(const DriverContext& ctx, double t, double s, double v, double z,
                double hedge) {
    const auto [c, f, h] = effective_rates(ctx, t, v, z);
    const double a = ctx.deal->alpha(t);
    return ctx.deal->dividend(t, s) + closeout_theta_tilde(ctx, t, v) +
           (f * (a - 1.0) - ctx.lambda(t) - c * a) * v - (ctx.r(t) - h) * hedge;
}

double driver_Bprime(const DriverContext& ctx, double t, double s, double v) {
    const double a = ctx.deal->alpha(t);
    const double c = select_rate(ctx.deal->leg_c, t, a * v);
    const double f = select_rate(ctx.deal->leg_f, t, (1.0 - a) * v);
    return ctx.deal->dividend(t, s) + closeout_theta_tilde(ctx, t, v) - ctx.lambda(t) * v +
           f * v * (a - 1.0) - c * a * v;
}

double delta_hedge(double s, double z, double sigma) {
    if (sigma <= 0.0) throw std::domain_error("delta_hedge: sigma must be positive");
    return s * z / sigma;
}

double funding_account(const DealSpec& deal, double v, double hedge, double coll) {
    return deal.rehypothecation ? v - hedge - coll : v - hedge;
}

double lipschitz_bound(const DriverContext& ctx, const VolModel& vol, double s_max) {
    const DealSpec& deal = *ctx.deal;
    const PiecewiseConstant* schedules[] = {&ctx.r,          &ctx.lambda,     &deal.leg_c.plus,
                                            &deal.leg_c.minus, &deal.leg_f.plus, &deal.leg_f.minus,
                                            &deal.leg_h.plus,  &deal.leg_h.minus};
    for (const auto* s : schedules)
        if (!s->bounded()) throw std::invalid_argument("lipschitz_bound: unbounded schedule");

    const double sup_lambda = ctx.lambda.sup_abs();
    const double sup_alpha = deal.alpha.sup_abs();
    const double sup_f = std::max(deal.leg_f.plus.sup_abs(), deal.leg_f.minus.sup_abs());
    const double sup_c = std::max(deal.leg_c.plus.sup_abs(), deal.leg_c.minus.sup_abs());
    const double sup_default = deal.credit.lgd_c * deal.credit.lambda_c.sup_abs() +
                               deal.credit.lgd_i * deal.credit.lambda_i.sup_abs();
    const double sup_r_minus_h = std::max(sup_abs_diff(ctx.r, deal.leg_h.plus),
                                          sup_abs_diff(ctx.r, deal.leg_h.minus));

    // Lipschitz constant of the delta-hedge map z -> s*z/sigma(t,s) over
    // s in [0, s_max]: 1/min level for proportional vol, s_max/min level for
    // absolute vol.
    const double min_level = vol.min_level();
    if (min_level <= 0.0)
        throw std::invalid_argument("lipschitz_bound: vol level not bounded below");
    const double hedge_lip = vol.is_proportional() ? 1.0 / min_level : s_max / min_level;

    return sup_lambda + sup_f * (1.0 + sup_alpha) + sup_c * sup_alpha +
           sup_default * (1.0 + sup_alpha) + sup_r_minus_h * hedge_lip;
}

} // namespace nlv
