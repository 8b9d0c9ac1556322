#include "nlv/market_model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nlv {

TimeGrid::TimeGrid(double t0, double T, int n_steps) : t0(t0), T(T), n_steps(n_steps) {
    if (!(T > t0)) throw std::invalid_argument("TimeGrid: T must exceed t0");
    if (n_steps < 1) throw std::invalid_argument("TimeGrid: n_steps must be >= 1");
}

VolModel VolModel::constant(double sigma) {
    if (sigma < 0.0) throw std::invalid_argument("VolModel: negative level");
    return {VolKind::Constant, PiecewiseConstant(sigma)};
}

VolModel VolModel::proportional(double level) {
    if (level < 0.0) throw std::invalid_argument("VolModel: negative level");
    return {VolKind::Proportional, PiecewiseConstant(level)};
}

VolModel VolModel::proportional(PiecewiseConstant level) {
    if (level.min_value() < 0.0) throw std::invalid_argument("VolModel: negative level");
    return {VolKind::Proportional, std::move(level)};
}

VolModel VolModel::term_structure(PiecewiseConstant level) {
    if (level.min_value() < 0.0) throw std::invalid_argument("VolModel: negative level");
    return {VolKind::TermStructure, std::move(level)};
}

double sigma_eval(const VolModel& vol, double t, double s) {
    if (s < 0.0) throw std::domain_error("sigma_eval: negative spot");
    const double lvl = vol.level(t);
    return vol.kind == VolKind::Proportional ? lvl * s : lvl;
}

namespace rng {

std::uint64_t mix64(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double uniform(std::uint64_t seed, std::uint64_t path, std::uint64_t k) {
    const std::uint64_t h = mix64(mix64(mix64(seed) ^ path) ^ k);
    // 53-bit mantissa, shifted into (0, 1]
    return (static_cast<double>(h >> 11) + 1.0) * 0x1.0p-53;
}

double gaussian(std::uint64_t seed, std::uint64_t path, std::uint64_t step) {
    const double u1 = uniform(seed, path, 2 * step);
    const double u2 = uniform(seed, path, 2 * step + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double brownian_increment(std::uint64_t seed, std::uint64_t path, std::uint64_t step, double dt) {
    return std::sqrt(dt) * gaussian(seed, path, step);
}

} // namespace rng

namespace {

Matrix simulate_impl(const MarketSpec& market, const DriftFn& drift, const TimeGrid& grid,
                     int n_paths, std::uint64_t seed) {
    if (n_paths < 1) throw std::invalid_argument("simulate_paths: n_paths must be >= 1");
    const int n = grid.n_steps;
    const double dt = grid.dt();
    const bool log_space = market.vol.is_proportional();

    Matrix paths(static_cast<std::size_t>(n_paths), static_cast<std::size_t>(n + 1));
    for (int p = 0; p < n_paths; ++p) {
        double s = market.s0;
        paths(p, 0) = s;
        for (int i = 0; i < n; ++i) {
            const double t = grid.time(i);
            const double xi = rng::gaussian(seed, static_cast<std::uint64_t>(p),
                                            static_cast<std::uint64_t>(i));
            const double mu = drift(t, s);
            if (log_space) {
                const double lvl = market.vol.level(t);
                s *= std::exp((mu - 0.5 * lvl * lvl) * dt + lvl * std::sqrt(dt) * xi);
            } else {
                s += mu * s * dt + sigma_eval(market.vol, t, std::max(s, 0.0)) * std::sqrt(dt) * xi;
            }
            paths(p, i + 1) = s;
        }
    }
    return paths;
}

} // namespace

Matrix simulate_paths(const MarketSpec& market, const PiecewiseConstant& drift,
                      const TimeGrid& grid, int n_paths, std::uint64_t seed) {
    return simulate_impl(
        market, [&drift](double t, double) { return drift(t); }, grid, n_paths, seed);
}

Matrix simulate_paths(const MarketSpec& market, const DriftFn& drift, const TimeGrid& grid,
                      int n_paths, std::uint64_t seed) {
    return simulate_impl(market, drift, grid, n_paths, seed);
}

} // namespace nlv
