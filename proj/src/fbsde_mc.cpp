#include "nlv/fbsde_mc.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nlv/driver.hpp"

namespace nlv {

namespace {

// Monomial basis in S/s0 up to the configured degree, scaled for conditioning.
void fill_basis(Eigen::MatrixXd& X, const Matrix& paths, int step, double s0, int degree) {
    const int n = static_cast<int>(paths.rows());
    for (int p = 0; p < n; ++p) {
        const double x = std::max(paths(p, static_cast<std::size_t>(step)), 0.0) / s0;
        double m = 1.0;
        for (int j = 0; j <= degree; ++j) {
            X(p, j) = m;
            m *= x;
        }
    }
}

struct RegressionResult {
    Eigen::VectorXd coeffs;
    double condition = 0.0;
};

// Least squares through the normal equations of the (small) basis; the
// eigendecomposition doubles as the conditioning diagnostic.
RegressionResult regress(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    const Eigen::MatrixXd gram = X.transpose() * X;
    const Eigen::VectorXd rhs = X.transpose() * y;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    const auto& evals = eig.eigenvalues();
    const double emax = evals.maxCoeff();
    const double emin = evals.minCoeff();
    const double floor = emax * 1e-14;
    Eigen::VectorXd inv = evals.unaryExpr(
        [floor](double e) { return e > floor ? 1.0 / e : 0.0; });
    RegressionResult out;
    out.coeffs = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose() * rhs;
    out.condition = emin > 0.0 ? emax / emin : std::numeric_limits<double>::infinity();
    return out;
}

double eval_poly(const Eigen::VectorXd& coeffs, double x) {
    double acc = 0.0;
    for (int j = static_cast<int>(coeffs.size()) - 1; j >= 0; --j) acc = acc * x + coeffs[j];
    return acc;
}

struct BackwardPass {
    double value = 0.0;
    double std_error = 0.0;
    std::vector<double> condition_numbers;
    std::vector<std::string> warnings;
    std::vector<Eigen::VectorXd> z_coeffs; // per step, for drift re-selection
};

constexpr double kConditionWarnThreshold = 1e12;

BackwardPass backward_pass(const Matrix& paths, const DealSpec& deal,
                           const MarketSpec& market, DriftChoice drift_choice,
                           const McConfig& config, const TimeGrid& grid) {
    const int n_paths = config.n_paths;
    const int n_steps = config.n_steps;
    const double dt = grid.dt();
    const double s0 = market.s0;
    const int degree = config.basis_degree;
    const int k = degree + 1;

    DriverContext ctx(deal, market.r);

    auto generator = [&](double t, double s, double v, double z) {
        if (drift_choice == DriftChoice::RepoRate) return driver_Bprime(ctx, t, s, v);
        const double sig = sigma_eval(market.vol, t, s);
        const double hedge = sig > 0.0 ? s * z / sig : 0.0;
        return driver_B(ctx, t, s, v, z, hedge);
    };

    BackwardPass out;
    out.condition_numbers.reserve(static_cast<std::size_t>(n_steps));
    out.z_coeffs.resize(static_cast<std::size_t>(n_steps));

    // Pathwise accumulator: the martingale part of the backward equation
    // stays on the paths, and the regressed conditional expectations enter
    // only through the generator. Projection error is then damped by dt per
    // step instead of compounding through repeated projection.
    Eigen::VectorXd v(n_paths);
    for (int p = 0; p < n_paths; ++p) // level-space Euler paths may cross zero
        v[p] = deal.payoff(std::max(paths(p, static_cast<std::size_t>(n_steps)), 0.0));

    Eigen::MatrixXd X(n_paths, k);
    Eigen::VectorXd zy(n_paths);

    for (int i = n_steps - 1; i >= 1; --i) {
        const double t = grid.time(i);
        fill_basis(X, paths, i, s0, degree);

        for (int p = 0; p < n_paths; ++p) {
            const double dw = rng::brownian_increment(config.seed, static_cast<std::uint64_t>(p),
                                                      static_cast<std::uint64_t>(i), dt);
            zy[p] = v[p] * dw / dt;
        }
        const RegressionResult rz = regress(X, zy);
        const RegressionResult rc = regress(X, v);
        out.z_coeffs[static_cast<std::size_t>(i)] = rz.coeffs;
        const double cond = std::max(rz.condition, rc.condition);
        out.condition_numbers.push_back(cond);
        if (cond > kConditionWarnThreshold)
            out.warnings.push_back("regression at step " + std::to_string(i) +
                                   " ill-conditioned (cond " + std::to_string(cond) + ")");

        for (int p = 0; p < n_paths; ++p) {
            const double s = std::max(paths(p, static_cast<std::size_t>(i)), 0.0);
            const double x = s / s0;
            const double cont = eval_poly(rc.coeffs, x);
            const double zp = eval_poly(rz.coeffs, x);
            // implicit value at t_i resolved by fixed point on the smoothed
            // continuation, then applied to the pathwise accumulator
            double yi = cont;
            for (int it = 0; it < config.picard_inner; ++it)
                yi = cont + dt * generator(t, s, yi, zp);
            v[p] += dt * generator(t, s, yi, zp);
            if (!std::isfinite(v[p]))
                throw std::runtime_error("solve_backward: non-finite value at step " +
                                         std::to_string(i));
        }
    }

    // Final step: S_0 is degenerate, so the conditional expectations are
    // plain averages; the spread of the pathwise values gives the standard
    // error of the estimate.
    double mean = v.mean();
    double var = 0.0;
    for (int p = 0; p < n_paths; ++p) var += (v[p] - mean) * (v[p] - mean);
    var /= std::max(1, n_paths - 1);

    double z0 = 0.0;
    for (int p = 0; p < n_paths; ++p) {
        const double dw =
            rng::brownian_increment(config.seed, static_cast<std::uint64_t>(p), 0, dt);
        z0 += v[p] * dw / dt;
    }
    z0 /= n_paths;

    double v0 = mean;
    for (int it = 0; it < config.picard_inner; ++it)
        v0 = mean + dt * generator(grid.time(0), s0, v0, z0);

    out.value = v0;
    out.std_error = std::sqrt(var / n_paths);
    return out;
}

} // namespace

McEstimate solve_backward(const DealSpec& deal, const MarketSpec& market,
                          DriftChoice drift_choice, const McConfig& config) {
    if (config.n_paths < config.basis_degree + 1)
        throw std::invalid_argument("McConfig: n_paths must exceed the basis size");
    if (config.basis_degree < 1)
        throw std::invalid_argument("McConfig: basis_degree must be >= 1");
    if (config.n_steps < 1) throw std::invalid_argument("McConfig: n_steps must be >= 1");

    const TimeGrid grid(0.0, deal.maturity, config.n_steps);
    const bool repo = drift_choice == DriftChoice::RepoRate;
    const bool switching = repo && !deal.leg_h.sign_independent();

    Matrix paths =
        repo ? simulate_paths(market, deal.leg_h.plus, grid, config.n_paths, config.seed)
             : simulate_paths(market, market.r, grid, config.n_paths, config.seed);
    BackwardPass pass = backward_pass(paths, deal, market, drift_choice, config, grid);

    if (switching) {
        // Second pass: re-simulate with the repo leg chosen per step from the
        // sign of the regressed hedge of the first pass.
        const auto& zc = pass.z_coeffs;
        const double dt = grid.dt();
        auto drift = [&](double t, double s) {
            int i = static_cast<int>(std::lround((t - grid.t0) / dt));
            i = std::clamp(i, 1, grid.n_steps - 1); // step 0 has no regression
            double zhat = 0.0;
            const auto& c = zc[static_cast<std::size_t>(i)];
            if (c.size() > 0) {
                double x = s / market.s0, m = 1.0;
                for (int j = 0; j < c.size(); ++j, m *= x) zhat += c[j] * m;
            }
            return select_rate(deal.leg_h, t, zhat);
        };
        paths = simulate_paths(market, DriftFn(drift), grid, config.n_paths, config.seed);
        auto warn = std::move(pass.warnings);
        pass = backward_pass(paths, deal, market, drift_choice, config, grid);
        pass.warnings.insert(pass.warnings.begin(), warn.begin(), warn.end());
        pass.warnings.push_back("repo legs differ: drift re-selected from first-pass hedge signs");
    }

    McEstimate est;
    est.value = pass.value;
    est.std_error = pass.std_error;
    est.n_paths = config.n_paths;
    est.n_steps = config.n_steps;
    est.seed = config.seed;
    est.condition_numbers = std::move(pass.condition_numbers);
    est.warnings = std::move(pass.warnings);
    return est;
}

RepresentationReport representation_check(const ValueSurface& surface, const DealSpec& deal,
                                          const MarketSpec& market, const McConfig& config) {
    if (std::abs(surface.tgrid.T - deal.maturity) > 1e-12)
        throw std::invalid_argument("representation_check: surface maturity mismatch");
    if (market.s0 < surface.sgrid.s_min || market.s0 > surface.sgrid.s_max)
        throw std::invalid_argument("representation_check: s0 outside the surface grid");

    const TimeGrid grid(0.0, deal.maturity, config.n_steps);
    const double dt = grid.dt();
    DriverContext ctx(deal, market.r);

    // Repo drift selected pathwise by the sign of the surface hedge.
    auto drift = [&](double t, double s) {
        const double sc = std::clamp(s, surface.sgrid.s_min, surface.sgrid.s_max);
        const double tc = std::min(t, surface.tgrid.T);
        return select_rate(deal.leg_h, t, surface.z_at(tc, sc));
    };
    const Matrix paths = simulate_paths(market, DriftFn(drift), grid, config.n_paths, config.seed);

    double acc = 0.0, acc2 = 0.0;
    for (int p = 0; p < config.n_paths; ++p) {
        double df = 1.0; // funding discount along the path
        double integral = 0.0;
        for (int i = 0; i < config.n_steps; ++i) {
            const double t = grid.time(i);
            const double s = std::clamp(paths(p, static_cast<std::size_t>(i)),
                                        surface.sgrid.s_min, surface.sgrid.s_max);
            const double v = surface.value_at(t, s);
            const double a = deal.alpha(t);
            const double f = select_rate(deal.leg_f, t, (1.0 - a) * v);
            const double c = select_rate(deal.leg_c, t, a * v);
            const double flow = deal.dividend(t, s) +
                                (closeout_theta_tilde(ctx, t, v) - ctx.lambda(t) * v) +
                                (f - c) * a * v;
            integral += df * flow * dt;
            df *= std::exp(-f * dt);
        }
        const double payoff = deal.payoff(std::max(paths(p, static_cast<std::size_t>(config.n_steps)), 0.0));
        const double total = integral + df * payoff;
        acc += total;
        acc2 += total * total;
    }

    RepresentationReport rep;
    rep.n_paths = config.n_paths;
    rep.n_steps = config.n_steps;
    rep.seed = config.seed;
    rep.mc_value = acc / config.n_paths;
    const double var =
        (acc2 - acc * acc / config.n_paths) / std::max(1, config.n_paths - 1);
    rep.std_error = std::sqrt(std::max(var, 0.0) / config.n_paths);
    rep.pde_value = surface.value_at(0.0, market.s0);
    rep.residual = rep.mc_value - rep.pde_value;
    return rep;
}

} // namespace nlv
