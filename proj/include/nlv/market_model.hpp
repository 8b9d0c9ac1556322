#pragma once

#include <cstdint>
#include <functional>

#include "nlv/matrix.hpp"
#include "nlv/schedule.hpp"

namespace nlv {

// Uniform time grid on [t0, T].
struct TimeGrid {
    TimeGrid(double t0, double T, int n_steps);

    double t0;
    double T;
    int n_steps;

    double dt() const { return (T - t0) / n_steps; }
    double time(int i) const { return t0 + i * dt(); }
    int n_nodes() const { return n_steps + 1; }
};

enum class VolKind { Constant, Proportional, TermStructure };

// Diffusion coefficient sigma(t, s): absolute level for Constant and
// TermStructure, level(t) * s for Proportional (lognormal dynamics).
struct VolModel {
    VolKind kind = VolKind::Proportional;
    PiecewiseConstant level{0.2};

    static VolModel constant(double sigma);
    static VolModel proportional(double level);
    static VolModel proportional(PiecewiseConstant level);
    static VolModel term_structure(PiecewiseConstant level);

    bool is_proportional() const { return kind == VolKind::Proportional; }
    double min_level() const { return level.min_value(); }
};

// sigma(t, s); throws std::domain_error for s < 0.
double sigma_eval(const VolModel& vol, double t, double s);

struct MarketSpec {
    double s0 = 100.0;
    PiecewiseConstant r{0.0};
    VolModel vol{};
};

namespace rng {

// Counter-based Gaussian draws: pure functions of (seed, path, step), so
// simulation output is independent of execution order and thread count, and
// the first paths are unchanged when n_paths grows.
std::uint64_t mix64(std::uint64_t x);
double uniform(std::uint64_t seed, std::uint64_t path, std::uint64_t k); // in (0, 1]
double gaussian(std::uint64_t seed, std::uint64_t path, std::uint64_t step);

// The Brownian increment consumed by step `step` of path `path`.
double brownian_increment(std::uint64_t seed, std::uint64_t path, std::uint64_t step, double dt);

} // namespace rng

// Forward simulation of the risky asset under a deterministic drift schedule.
// Proportional vol steps exactly in log space (exact GBM for flat levels);
// absolute vol uses Euler in level space. Returns n_paths x (n_steps + 1).
Matrix simulate_paths(const MarketSpec& market, const PiecewiseConstant& drift,
                      const TimeGrid& grid, int n_paths, std::uint64_t seed);

// Drift as a function of (t, s); used where the repo drift switches on the
// sign of a regressed or interpolated hedge.
using DriftFn = std::function<double(double t, double s)>;
Matrix simulate_paths(const MarketSpec& market, const DriftFn& drift,
                      const TimeGrid& grid, int n_paths, std::uint64_t seed);

} // namespace nlv
