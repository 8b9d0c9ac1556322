#include "nlv/ledger_sim.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "nlv/driver.hpp"

namespace nlv {

namespace {

// Gauss-Hermite nodes/weights (physicists' convention) via Golub-Welsch;
// E[g(N(0,1))] = sum_k w_k/sqrt(pi) * g(sqrt(2) x_k).
struct GaussHermite {
    std::vector<double> x, w;

    explicit GaussHermite(int n) {
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
        for (int i = 1; i < n; ++i) {
            const double b = std::sqrt(i / 2.0);
            J(i, i - 1) = b;
            J(i - 1, i) = b;
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J);
        x.resize(n);
        w.resize(n);
        const double sqrt_pi = std::sqrt(std::numbers::pi);
        for (int i = 0; i < n; ++i) {
            x[i] = eig.eigenvalues()[i];
            const double v0 = eig.eigenvectors()(0, i);
            w[i] = sqrt_pi * v0 * v0;
        }
    }

    // E[g(xi)] for standard normal xi.
    template <typename G>
    double expect(G&& g) const {
        double acc = 0.0;
        const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
        for (std::size_t k = 0; k < x.size(); ++k)
            acc += w[k] * inv_sqrt_pi * g(std::numbers::sqrt2 * x[k]);
        return acc;
    }
};

const GaussHermite& gauss_hermite_21() {
    static const GaussHermite gh(21);
    return gh;
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

} // namespace

GridSurfaceView::GridSurfaceView(const ValueSurface& surface) : surface_(&surface) {}

double GridSurfaceView::value(double t, double s) const { return surface_->value_at(t, s); }

double GridSurfaceView::delta(double t, double s) const {
    return extract_delta(*surface_, t, s);
}

double GridSurfaceView::step_expectation(double t, double dt, double s,
                                         double drift_rate) const {
    const VolModel& vol = surface_->vol;
    const double t1 = t + dt;
    const double lo = surface_->sgrid.s_min;
    const double hi = surface_->sgrid.s_max;
    if (vol.is_proportional()) {
        const double lvl = vol.level(t);
        return gauss_hermite_21().expect([&](double xi) {
            const double s1 =
                s * std::exp((drift_rate - 0.5 * lvl * lvl) * dt + lvl * std::sqrt(dt) * xi);
            return surface_->value_at(t1, std::clamp(s1, lo, hi));
        });
    }
    const double sig = sigma_eval(vol, t, std::max(s, 0.0));
    return gauss_hermite_21().expect([&](double xi) {
        const double s1 = s + drift_rate * s * dt + sig * std::sqrt(dt) * xi;
        return surface_->value_at(t1, std::clamp(s1, lo, hi));
    });
}

BlackScholesSurfaceView::BlackScholesSurfaceView(double strike, double maturity, double rate,
                                                 double sigma)
    : strike_(strike), maturity_(maturity), rate_(rate), sigma_(sigma) {}

double BlackScholesSurfaceView::value(double t, double s) const {
    return bs_closed_form(s, strike_, maturity_ - t, rate_, sigma_);
}

double BlackScholesSurfaceView::delta(double t, double s) const {
    return bs_delta(s, strike_, maturity_ - t, rate_, sigma_);
}

double BlackScholesSurfaceView::step_expectation(double t, double dt, double s,
                                                 double drift_rate) const {
    // Tower the lognormal step into the Black-Scholes value: one Black
    // evaluation with forward s*exp(mu*dt + r*tau') and total variance
    // sigma^2*(tau' + dt), discounted over tau' = maturity - t - dt.
    const double tau1 = maturity_ - t - dt;
    if (tau1 < -1e-12) throw std::out_of_range("step_expectation: beyond maturity");
    const double f = s * std::exp(drift_rate * dt + rate_ * std::max(tau1, 0.0));
    const double df = std::exp(-rate_ * std::max(tau1, 0.0));
    const double var = sigma_ * sigma_ * (std::max(tau1, 0.0) + dt);
    if (var <= 0.0 || f <= 0.0) return df * std::max(f - strike_, 0.0);
    const double v = std::sqrt(var);
    const double d1 = (std::log(f / strike_) + 0.5 * var) / v;
    return df * (f * norm_cdf(d1) - strike_ * norm_cdf(d1 - v));
}

double dphi(double H, double F, double C, double h, double f, double c, double r) {
    return (h - f) * H + (r - f) * F + (r - c) * C;
}

LedgerReport replay(std::span<const double> path, const PriceSurfaceView& surface,
                    const DealSpec& deal, const MarketSpec& market, double dt) {
    if (path.size() < 2) throw std::invalid_argument("replay: path needs >= 2 samples");
    if (!deal.rehypothecation)
        throw std::invalid_argument(
            "replay: the trading protocol hands collateral to the treasury; "
            "rehypothecation required");
    const int n = static_cast<int>(path.size()) - 1;
    if (n * dt > deal.maturity + 1e-9)
        throw std::invalid_argument("replay: path extends beyond maturity");

    DriverContext ctx(deal, market.r);
    LedgerReport report;
    report.steps.reserve(static_cast<std::size_t>(n));

    for (int i = 0; i < n; ++i) {
        const double t = i * dt;
        const double s = path[static_cast<std::size_t>(i)];
        const double s_next = path[static_cast<std::size_t>(i) + 1];

        LedgerStep step;
        step.t = t;
        step.spot = s;
        step.value = surface.value(t, s);
        const double delta = surface.delta(t, s);
        step.coll = collateral(deal, t, step.value);
        step.hedge_cash = delta * s;
        step.funding = funding_account(deal, step.value, step.hedge_cash, step.coll);

        const double h = select_rate(deal.leg_h, t, step.hedge_cash);
        const double f = select_rate(deal.leg_f, t, step.value - step.coll);
        const double c = select_rate(deal.leg_c, t, step.coll);
        const double r = market.r(t);

        // Realized flows over [t, t+dt], exactly as traded: close the repo
        // (buy the stock back, receive the posted cash plus repo interest),
        // close the derivative, repay collateral plus interest, settle the
        // treasury accrual on the net debt.
        const double v_next = surface.value(t + dt, s_next);
        step.repo_net = -delta * (s_next - s) + h * step.hedge_cash * dt;
        step.derivative_net = v_next - step.value;
        step.collateral_net = -c * step.coll * dt;
        step.treasury_net = -f * (step.value - step.coll) * dt;
        step.total_net =
            step.repo_net + step.derivative_net + step.collateral_net + step.treasury_net;
        step.dphi_dt =
            dphi(step.hedge_cash, step.funding, step.coll, h, f, c, r) * dt;

        // Residual against the continuous-time accrual model: replace the
        // realized increments by their one-step conditional expectations
        // under the reference-rate drift, then subtract the dividend and
        // closeout flows the protocol does not trade. Pure discretization
        // error remains: O(dt^2) per step.
        const double es_next = market.vol.is_proportional()
                                   ? s * std::exp(r * dt)
                                   : s * (1.0 + r * dt);
        const double ev_next = surface.step_expectation(t, dt, s, r);
        const double expected_total = -delta * (es_next - s) + h * step.hedge_cash * dt +
                                      (ev_next - step.value) + step.collateral_net +
                                      step.treasury_net;
        const double model_accrual =
            -(deal.dividend(t, s) + closeout_theta_tilde(ctx, t, step.value) -
              ctx.lambda(t) * step.value) *
            dt;
        step.residual = expected_total - model_accrual;

        report.accum_residual += step.residual;
        report.max_abs_residual = std::max(report.max_abs_residual, std::abs(step.residual));
        report.steps.push_back(step);
    }
    return report;
}

LedgerReport replay(std::span<const double> path, const ValueSurface& surface,
                    const DealSpec& deal, const MarketSpec& market, double dt) {
    GridSurfaceView view(surface);
    return replay(path, view, deal, market, dt);
}

ConvergenceFit convergence_order(std::span<const double> dts,
                                 std::span<const double> residuals) {
    if (dts.size() != residuals.size() || dts.size() < 3)
        throw std::invalid_argument("convergence_order: need >= 3 matching dt levels");

    ConvergenceFit fit;
    for (std::size_t i = 0; i < residuals.size(); ++i) {
        if (residuals[i] <= 0.0) {
            fit.warnings.push_back("residual at dt level " + std::to_string(dts[i]) +
                                   " is zero: order undefined");
            fit.order = 0.0;
            fit.monotone = false;
            return fit;
        }
    }

    // least-squares slope of log(residual) vs log(dt)
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const auto n = static_cast<double>(dts.size());
    for (std::size_t i = 0; i < dts.size(); ++i) {
        const double x = std::log(dts[i]);
        const double y = std::log(residuals[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    fit.order = (n * sxy - sx * sy) / (n * sxx - sx * sx);

    for (std::size_t i = 1; i < dts.size(); ++i) {
        const bool dt_down = dts[i] < dts[i - 1];
        const bool res_down = residuals[i] < residuals[i - 1];
        if (dt_down != res_down) {
            fit.monotone = false;
            fit.warnings.push_back("residuals not monotone across dt levels");
            break;
        }
    }
    return fit;
}

} // namespace nlv
