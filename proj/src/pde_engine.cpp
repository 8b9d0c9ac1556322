#include "nlv/pde_engine.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <vector>

namespace nlv {

SpatialGrid::SpatialGrid(double s_min, double s_max, int n_space)
    : s_min(s_min), s_max(s_max), n_space(n_space) {
    if (n_space < 3) throw std::invalid_argument("SpatialGrid: need at least 3 nodes");
    if (!(s_max > s_min) || s_min < 0.0)
        throw std::invalid_argument("SpatialGrid: require 0 <= s_min < s_max");
}

SpatialGrid SpatialGrid::standard(double s0, double sigma_ref, double T, int n_space) {
    const double raw = s0 * std::exp(5.0 * sigma_ref * std::sqrt(T));
    const int n = n_space - 1;
    const double ds_raw = raw / n;
    // snap the spacing so s0 falls exactly on a node
    const int m = std::max(1, static_cast<int>(std::lround(s0 / ds_raw)));
    const double ds = s0 / m;
    return SpatialGrid(0.0, n * ds, n_space);
}

ValueSurface::ValueSurface(TimeGrid tg, SpatialGrid sg, VolModel v)
    : tgrid(tg),
      sgrid(sg),
      vol(std::move(v)),
      u(static_cast<std::size_t>(tg.n_nodes()), static_cast<std::size_t>(sg.n_space)),
      z(static_cast<std::size_t>(tg.n_nodes()), static_cast<std::size_t>(sg.n_space)) {}

namespace {

constexpr double kHullTol = 1e-9;

struct BilinearLocator {
    std::size_t j0, j1, i0, i1;
    double wt, ws; // weights of the upper indices
};

BilinearLocator locate(const TimeGrid& tg, const SpatialGrid& sg, double t, double s) {
    const double t_lo = tg.t0, t_hi = tg.T;
    if (t < t_lo - kHullTol * (1.0 + std::abs(t_lo)) ||
        t > t_hi + kHullTol * (1.0 + std::abs(t_hi)) ||
        s < sg.s_min - kHullTol * (1.0 + sg.s_max) ||
        s > sg.s_max + kHullTol * (1.0 + sg.s_max))
        throw std::out_of_range("surface: query outside the grid hull");
    const double tc = std::clamp(t, t_lo, t_hi);
    const double sc = std::clamp(s, sg.s_min, sg.s_max);

    const double x = (tc - t_lo) / tg.dt();
    std::size_t j0 = std::min(static_cast<std::size_t>(std::floor(x)),
                              static_cast<std::size_t>(tg.n_steps - 1));
    const double y = (sc - sg.s_min) / sg.ds();
    std::size_t i0 = std::min(static_cast<std::size_t>(std::floor(y)),
                              static_cast<std::size_t>(sg.n_space - 2));
    return {j0, j0 + 1, i0, i0 + 1, x - static_cast<double>(j0), y - static_cast<double>(i0)};
}

double bilinear(const Matrix& m, const BilinearLocator& L) {
    const double a = (1.0 - L.ws) * m(L.j0, L.i0) + L.ws * m(L.j0, L.i1);
    const double b = (1.0 - L.ws) * m(L.j1, L.i0) + L.ws * m(L.j1, L.i1);
    return (1.0 - L.wt) * a + L.wt * b;
}

// du/ds at node i of a row, central in the interior, one-sided at the ends.
double row_dds(const double* row, int i, int n, double ds) {
    if (i == 0) return (row[1] - row[0]) / ds;
    if (i == n - 1) return (row[n - 1] - row[n - 2]) / ds;
    return (row[i + 1] - row[i - 1]) / (2.0 * ds);
}

void thomas_solve(const std::vector<double>& lower, const std::vector<double>& diag,
                  const std::vector<double>& upper, const std::vector<double>& rhs,
                  std::vector<double>& x, std::vector<double>& scratch) {
    const std::size_t n = diag.size();
    x.resize(n);
    scratch.resize(n);
    double bet = diag[0];
    if (bet == 0.0) throw std::runtime_error("tridiagonal solve: zero pivot");
    x[0] = rhs[0] / bet;
    for (std::size_t i = 1; i < n; ++i) {
        scratch[i] = upper[i - 1] / bet;
        bet = diag[i] - lower[i] * scratch[i];
        if (bet == 0.0) throw std::runtime_error("tridiagonal solve: zero pivot");
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / bet;
    }
    for (std::size_t i = n - 1; i-- > 0;) x[i] -= scratch[i + 1] * x[i + 1];
}

// Stencil of L = 0.5*sigma^2 d2/ds2 + mu_i*s_i d/ds. The boundary rows use a
// zero-curvature ghost node, which cancels the diffusion term and leaves a
// one-sided advection difference; at s = 0 the operator vanishes entirely and
// the node follows the source ODE.
struct OperatorStencil {
    std::vector<double> lo, mid, up;

    void resize(std::size_t n) {
        lo.assign(n, 0.0);
        mid.assign(n, 0.0);
        up.assign(n, 0.0);
    }

    template <typename MuFn>
    void build(const SpatialGrid& g, const VolModel& vol, double t, MuFn&& mu_at) {
        const int n = g.n_space;
        const double ds = g.ds();
        resize(static_cast<std::size_t>(n));
        if (g.s_min > 0.0) {
            const double adv = mu_at(0) * g.s(0) / ds;
            mid[0] = -adv;
            up[0] = adv;
        } // s_min == 0: zero row
        for (int i = 1; i < n - 1; ++i) {
            const double sig = sigma_eval(vol, t, g.s(i));
            const double d = 0.5 * sig * sig / (ds * ds);
            const double a = mu_at(i) * g.s(i) / (2.0 * ds);
            lo[i] = d - a;
            mid[i] = -2.0 * d;
            up[i] = d + a;
        }
        const double adv = mu_at(n - 1) * g.s(n - 1) / ds;
        lo[n - 1] = -adv;
        mid[n - 1] = adv;
    }

    void apply(const std::vector<double>& u, std::vector<double>& out) const {
        const std::size_t n = u.size();
        out[0] = mid[0] * u[0] + up[0] * u[1];
        for (std::size_t i = 1; i < n - 1; ++i)
            out[i] = lo[i] * u[i - 1] + mid[i] * u[i] + up[i] * u[i + 1];
        out[n - 1] = lo[n - 1] * u[n - 2] + mid[n - 1] * u[n - 1];
    }
};

void check_finite(const std::vector<double>& row, int step) {
    for (double v : row)
        if (!std::isfinite(v))
            throw std::runtime_error("pde solve: non-finite value at time step " +
                                     std::to_string(step));
}

// How the source sees z = sigma * du/ds during the implicit solve: from the
// current Picard iterate, or frozen at the known time level (lagged
// coupling). The lagged variant keeps the hedge term an explicit
// discretization of its own, so a rate-drift solve is a genuinely different
// scheme from the repo-drift solve and their agreement measures real
// discretization error.
enum class ZCoupling { Iterate, KnownLevel };

// Backward theta-march for u_t + L u + G(t, s, u, z) = 0 with Picard
// iteration on G (and, when the advection leg switches sign, on the
// advection coefficient).  mu(t, i, z) is the advection rate at node i,
// source(t, s, v, z) the nonlinear term; z is sigma * du/ds of the iterate.
template <typename MuFn, typename SourceFn>
ValueSurface semilinear_march(const std::vector<double>& terminal, const VolModel& vol,
                              const TimeGrid& tgrid, const SpatialGrid& sgrid,
                              const PdeConfig& config, MuFn&& mu, SourceFn&& source,
                              ZCoupling z_coupling = ZCoupling::Iterate) {
    if (config.picard_tol <= 0.0 || config.picard_max_iter < 1)
        throw std::invalid_argument("PdeConfig: picard_tol > 0 and picard_max_iter >= 1 required");
    const int n_t = tgrid.n_steps;
    const int n_s = sgrid.n_space;
    const double dt = tgrid.dt();
    const double ds = sgrid.ds();

    ValueSurface surf(tgrid, sgrid, vol);
    for (int i = 0; i < n_s; ++i) surf.u(static_cast<std::size_t>(n_t), i) = terminal[i];

    std::vector<double> u_old = terminal;
    std::vector<double> z_row(n_s), z_lag(n_s), rhs0(n_s), rhs(n_s), lu(n_s), u_k(n_s),
        u_new(n_s), scratch(n_s), lower(n_s), diag(n_s), upper(n_s);
    OperatorStencil L;

    auto fill_z = [&](std::vector<double>& dst, const std::vector<double>& u_row, double t) {
        for (int i = 0; i < n_s; ++i)
            dst[i] = sigma_eval(vol, t, sgrid.s(i)) * row_dds(u_row.data(), i, n_s, ds);
    };

    for (int j = n_t - 1; j >= 0; --j) {
        const double t_new = tgrid.time(j);
        const double t_old = tgrid.time(j + 1);
        const double theta =
            (n_t - 1 - j) < config.rannacher_steps ? 1.0 : config.theta;

        // explicit contribution at the known level
        fill_z(z_row, u_old, t_old);
        std::fill(rhs0.begin(), rhs0.end(), 0.0);
        if (theta < 1.0) {
            L.build(sgrid, vol, t_old, [&](int i) { return mu(t_old, i, z_row[i]); });
            L.apply(u_old, lu);
            for (int i = 0; i < n_s; ++i)
                rhs0[i] = (1.0 - theta) * dt *
                          (lu[i] + source(t_old, sgrid.s(i), u_old[i], z_row[i]));
        }
        for (int i = 0; i < n_s; ++i) rhs0[i] += u_old[i];

        // the lagged coupling freezes z at the known level for this step
        fill_z(z_lag, u_old, t_new);

        // Picard iteration on the implicit level
        u_k = u_old;
        double change = 0.0;
        bool converged = false;
        for (int it = 0; it < config.picard_max_iter; ++it) {
            if (z_coupling == ZCoupling::Iterate)
                fill_z(z_row, u_k, t_new);
            else
                z_row = z_lag;
            L.build(sgrid, vol, t_new, [&](int i) { return mu(t_new, i, z_row[i]); });
            for (int i = 0; i < n_s; ++i) {
                rhs[i] = rhs0[i] +
                         theta * dt * source(t_new, sgrid.s(i), u_k[i], z_row[i]);
                lower[i] = -theta * dt * L.lo[i];
                diag[i] = 1.0 - theta * dt * L.mid[i];
                upper[i] = -theta * dt * L.up[i];
            }
            thomas_solve(lower, diag, upper, rhs, u_new, scratch);
            change = 0.0;
            for (int i = 0; i < n_s; ++i)
                change = std::max(change, std::abs(u_new[i] - u_k[i]));
            u_k.swap(u_new);
            if (change < config.picard_tol) {
                converged = true;
                break;
            }
        }
        check_finite(u_k, j);
        if (!converged)
            throw PicardError("pde solve: Picard iteration did not converge at step " +
                                  std::to_string(j) + " (residual " + std::to_string(change) +
                                  ")",
                              j, change);

        for (int i = 0; i < n_s; ++i) surf.u(static_cast<std::size_t>(j), i) = u_k[i];
        u_old = u_k;
    }

    surf.recompute_z();
    return surf;
}

std::vector<double> terminal_row(const DealSpec& deal, const SpatialGrid& sgrid) {
    std::vector<double> row(static_cast<std::size_t>(sgrid.n_space));
    for (int i = 0; i < sgrid.n_space; ++i) row[i] = deal.payoff(sgrid.s(i));
    return row;
}

double hedge_position(HedgeMode mode, const HedgeFn& custom, const VolModel& vol, double t,
                      double s, double v, double z) {
    switch (mode) {
        case HedgeMode::None: return 0.0;
        case HedgeMode::Custom: return custom(t, s, v, z);
        case HedgeMode::Delta: {
            const double sig = sigma_eval(vol, t, s);
            return sig > 0.0 ? s * z / sig : 0.0; // s*z/sigma -> 0 as s -> 0
        }
    }
    return 0.0;
}

} // namespace

double ValueSurface::value_at(double t, double s) const {
    return bilinear(u, locate(tgrid, sgrid, t, s));
}

double ValueSurface::z_at(double t, double s) const {
    return bilinear(z, locate(tgrid, sgrid, t, s));
}

void ValueSurface::recompute_z() {
    const int n_s = sgrid.n_space;
    const double ds = sgrid.ds();
    for (int j = 0; j < tgrid.n_nodes(); ++j) {
        const double t = tgrid.time(j);
        const double* row = u.row(static_cast<std::size_t>(j));
        for (int i = 0; i < n_s; ++i)
            z(static_cast<std::size_t>(j), i) =
                sigma_eval(vol, t, sgrid.s(i)) * row_dds(row, i, n_s, ds);
    }
}

ValueSurface solve_independent(const DealSpec& deal, const VolModel& vol,
                               const TimeGrid& tgrid, const SpatialGrid& sgrid,
                               const PdeConfig& config) {
    DriverContext ctx(deal, PiecewiseConstant(0.0)); // reference rate never read here
    const bool switching = !deal.leg_h.sign_independent();
    auto mu = [&](double t, int, double z) {
        return switching ? select_rate(deal.leg_h, t, z) : deal.leg_h.plus(t);
    };
    auto source = [&](double t, double s, double v, double) {
        return driver_Bprime(ctx, t, s, v);
    };
    return semilinear_march(terminal_row(deal, sgrid), vol, tgrid, sgrid, config, mu, source);
}

ValueSurface solve_dependent(const DealSpec& deal, const MarketSpec& market,
                             const TimeGrid& tgrid, const SpatialGrid& sgrid,
                             const PdeConfig& config, HedgeMode hedge_mode,
                             HedgeFn custom_hedge) {
    if (hedge_mode == HedgeMode::Custom && !custom_hedge)
        throw std::invalid_argument("solve_dependent: custom hedge mode without a hedge function");
    DriverContext ctx(deal, market.r);
    auto mu = [&](double t, int, double) { return market.r(t); };
    auto source = [&](double t, double s, double v, double z) {
        const double hedge = hedge_position(hedge_mode, custom_hedge, market.vol, t, s, v, z);
        return driver_B(ctx, t, s, v, z, hedge);
    };
    return semilinear_march(terminal_row(deal, sgrid), market.vol, tgrid, sgrid, config, mu,
                            source, ZCoupling::KnownLevel);
}

ValueSurface solve_linear_reaction(const Payoff& payoff, const VolModel& vol,
                                   const PiecewiseConstant& advection,
                                   const PiecewiseConstant& reaction,
                                   const std::function<double(double, double)>& source,
                                   const TimeGrid& tgrid, const SpatialGrid& sgrid,
                                   const PdeConfig& config) {
    // Reaction folded into the matrix, so each step is a single linear solve.
    const int n_t = tgrid.n_steps;
    const int n_s = sgrid.n_space;
    const double dt = tgrid.dt();

    ValueSurface surf(tgrid, sgrid, vol);
    std::vector<double> u_old(static_cast<std::size_t>(n_s));
    for (int i = 0; i < n_s; ++i) u_old[i] = payoff(sgrid.s(i));
    for (int i = 0; i < n_s; ++i) surf.u(static_cast<std::size_t>(n_t), i) = u_old[i];

    std::vector<double> rhs(n_s), lu(n_s), u_new(n_s), scratch(n_s), lower(n_s), diag(n_s),
        upper(n_s);
    OperatorStencil L;

    for (int j = n_t - 1; j >= 0; --j) {
        const double t_new = tgrid.time(j);
        const double t_old = tgrid.time(j + 1);
        const double theta =
            (n_t - 1 - j) < config.rannacher_steps ? 1.0 : config.theta;

        std::fill(rhs.begin(), rhs.end(), 0.0);
        if (theta < 1.0) {
            L.build(sgrid, vol, t_old, [&](int) { return advection(t_old); });
            L.apply(u_old, lu);
            const double a_old = reaction(t_old);
            for (int i = 0; i < n_s; ++i) {
                const double src = source ? source(t_old, sgrid.s(i)) : 0.0;
                rhs[i] = (1.0 - theta) * dt * (lu[i] + a_old * u_old[i] + src);
            }
        }
        L.build(sgrid, vol, t_new, [&](int) { return advection(t_new); });
        const double a_new = reaction(t_new);
        for (int i = 0; i < n_s; ++i) {
            const double src = source ? source(t_new, sgrid.s(i)) : 0.0;
            rhs[i] += u_old[i] + theta * dt * src;
            lower[i] = -theta * dt * L.lo[i];
            diag[i] = 1.0 - theta * dt * (L.mid[i] + a_new);
            upper[i] = -theta * dt * L.up[i];
        }
        thomas_solve(lower, diag, upper, rhs, u_new, scratch);
        check_finite(u_new, j);
        for (int i = 0; i < n_s; ++i) surf.u(static_cast<std::size_t>(j), i) = u_new[i];
        u_old = u_new;
    }

    surf.recompute_z();
    return surf;
}

namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

} // namespace

double bs_closed_form(double s, double k, double T, double drift, double disc,
                      double sigma_prop) {
    if (T <= 0.0) return std::max(s - k, 0.0);
    const double df = std::exp(-disc * T);
    const double fwd = s * std::exp(drift * T);
    if (sigma_prop <= 0.0 || s <= 0.0 || k <= 0.0)
        return df * std::max(fwd - k, 0.0);
    const double v = sigma_prop * std::sqrt(T);
    const double d1 = (std::log(fwd / k) + 0.5 * v * v) / v;
    return df * (fwd * norm_cdf(d1) - k * norm_cdf(d1 - v));
}

double bs_closed_form(double s, double k, double T, double rate, double sigma_prop) {
    return bs_closed_form(s, k, T, rate, rate, sigma_prop);
}

double bs_delta(double s, double k, double T, double rate, double sigma_prop) {
    if (T <= 0.0 || sigma_prop <= 0.0 || s <= 0.0 || k <= 0.0)
        return s > k ? 1.0 : 0.0;
    const double v = sigma_prop * std::sqrt(T);
    const double d1 = (std::log(s / k) + (rate + 0.5 * sigma_prop * sigma_prop) * T) / v;
    return norm_cdf(d1);
}

double extract_delta(const ValueSurface& surface, double t, double s) {
    const auto L = locate(surface.tgrid, surface.sgrid, t, s);
    const int n_s = surface.sgrid.n_space;
    const double ds = surface.sgrid.ds();
    auto node_delta = [&](std::size_t j, std::size_t i) {
        return row_dds(surface.u.row(j), static_cast<int>(i), n_s, ds);
    };
    const double a =
        (1.0 - L.ws) * node_delta(L.j0, L.i0) + L.ws * node_delta(L.j0, L.i1);
    const double b =
        (1.0 - L.ws) * node_delta(L.j1, L.i0) + L.ws * node_delta(L.j1, L.i1);
    return (1.0 - L.wt) * a + L.wt * b;
}

void write_surface_csv(const ValueSurface& surface, std::ostream& u_out,
                       std::ostream& z_out) {
    auto write = [&](const Matrix& m, std::ostream& out) {
        out << std::setprecision(12);
        out << "t\\s";
        for (int i = 0; i < surface.sgrid.n_space; ++i) out << ',' << surface.sgrid.s(i);
        out << '\n';
        for (int j = 0; j < surface.tgrid.n_nodes(); ++j) {
            out << surface.tgrid.time(j);
            for (int i = 0; i < surface.sgrid.n_space; ++i)
                out << ',' << m(static_cast<std::size_t>(j), static_cast<std::size_t>(i));
            out << '\n';
        }
    };
    write(surface.u, u_out);
    write(surface.z, z_out);
}

} // namespace nlv
