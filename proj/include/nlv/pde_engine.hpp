#pragma once

#include <functional>
#include <iosfwd>
#include <stdexcept>

#include "nlv/deal_spec.hpp"
#include "nlv/driver.hpp"
#include "nlv/market_model.hpp"
#include "nlv/matrix.hpp"

namespace nlv {

// Uniform spatial grid on [s_min, s_max] with n_space nodes.
struct SpatialGrid {
    SpatialGrid(double s_min, double s_max, int n_space);

    double s_min;
    double s_max;
    int n_space;

    double ds() const { return (s_max - s_min) / (n_space - 1); }
    double s(int i) const { return s_min + i * ds(); }

    // Default truncation: s_max = s0 * exp(5 * sigma_ref * sqrt(T)), with
    // s_max adjusted so s0 falls exactly on a node.
    static SpatialGrid standard(double s0, double sigma_ref, double T, int n_space);
};

struct PdeConfig {
    double theta = 0.5;        // 0 explicit, 1 implicit, 0.5 Crank-Nicolson
    double picard_tol = 1e-10; // max-norm stopping tolerance, absolute currency
    int picard_max_iter = 50;
    int rannacher_steps = 2;   // fully implicit startup steps from maturity
};

enum class HedgeMode { Delta, None, Custom };

// Custom hedge position H(t, s, v, z); must be Lipschitz in (v, z).
using HedgeFn = std::function<double(double t, double s, double v, double z)>;

class PicardError : public std::runtime_error {
public:
    PicardError(const std::string& what, int step, double residual)
        : std::runtime_error(what), step(step), residual(residual) {}
    int step;
    double residual;
};

// Value surface u(t, s) on a time x space grid, with the derived
// z(t, s) = sigma(t, s) * du/ds surface (central differences, one-sided at
// the boundaries). Row tgrid.n_steps is the terminal payoff, exactly.
struct ValueSurface {
    ValueSurface(TimeGrid tgrid, SpatialGrid sgrid, VolModel vol);

    TimeGrid tgrid;
    SpatialGrid sgrid;
    VolModel vol;
    Matrix u; // (n_time_nodes x n_space)
    Matrix z;

    double value_at(double t, double s) const; // bilinear; throws off-hull
    double z_at(double t, double s) const;

    // Rebuild z from u; useful when a surface is assembled from a function.
    void recompute_z();
};

// Backward solve of the repo-drift semilinear equation
//   u_t + 0.5*sigma^2*u_ss + h*s*u_s + B'(t, s, u) = 0,  u(T, .) = Phi,
// theta-weighted finite differences with Rannacher startup and Picard
// iteration on the nonlinear source. When the repo legs differ, the
// advection leg is selected nodewise by the sign of the current z iterate.
// This code path never touches a reference rate.
ValueSurface solve_independent(const DealSpec& deal, const VolModel& vol,
                               const TimeGrid& tgrid, const SpatialGrid& sgrid,
                               const PdeConfig& config);

// Backward solve of the rate-drift equation
//   u_t + 0.5*sigma^2*u_ss + r*s*u_s + B(t, s, u, sigma*u_s) = 0
// with the hedge term -(r-h)*H in the source; z is taken from the previous
// Picard iterate (lagged coupling).
ValueSurface solve_dependent(const DealSpec& deal, const MarketSpec& market,
                             const TimeGrid& tgrid, const SpatialGrid& sgrid,
                             const PdeConfig& config, HedgeMode hedge_mode,
                             HedgeFn custom_hedge = {});

// Linear benchmark solver for
//   u_t + 0.5*sigma^2*u_ss + mu*s*u_s + a(t)*u + source(t, s) = 0
// with the reaction term folded into the tridiagonal system (no Picard).
// Cross-validates the nonlinear solver in regimes where the generator
// collapses to a linear form.
ValueSurface solve_linear_reaction(const Payoff& payoff, const VolModel& vol,
                                   const PiecewiseConstant& advection,
                                   const PiecewiseConstant& reaction,
                                   const std::function<double(double, double)>& source,
                                   const TimeGrid& tgrid, const SpatialGrid& sgrid,
                                   const PdeConfig& config);

// Black-Scholes call value, flat rate, proportional vol.
double bs_closed_form(double s, double k, double T, double rate, double sigma_prop);

// Generalized form with separate drift and discount rates:
//   exp(-disc*T) * (s*exp(drift*T)*N(d1) - k*N(d2)).
double bs_closed_form(double s, double k, double T, double drift, double disc,
                      double sigma_prop);

// Black-Scholes call delta N(d1).
double bs_delta(double s, double k, double T, double rate, double sigma_prop);

// Hedge ratio du/ds (= z/sigma) interpolated bilinearly; throws off-hull.
double extract_delta(const ValueSurface& surface, double t, double s);

// CSV export: header row of s nodes, one row per time node, 12 significant
// digits. z goes to a separate stream of the same shape.
void write_surface_csv(const ValueSurface& surface, std::ostream& u_out,
                       std::ostream& z_out);

} // namespace nlv
