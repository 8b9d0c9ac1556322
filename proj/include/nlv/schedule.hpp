#pragma once

#include <vector>

namespace nlv {

// Piecewise-constant function of time given as ordered (bucket_start, value)
// pairs. Bucket i applies on [start_i, start_{i+1}); the last bucket extends
// to +infinity and lookups before the first start clamp to the first value.
// Integrals are exact bucket sums, no quadrature.
class PiecewiseConstant {
public:
    explicit PiecewiseConstant(double level) : starts_{0.0}, values_{level} {}
    PiecewiseConstant(std::vector<double> starts, std::vector<double> values);

    static PiecewiseConstant flat(double level) { return PiecewiseConstant(level); }

    double operator()(double t) const;

    // Exact integral over [t1, t2]; throws std::invalid_argument if t1 > t2.
    double integral(double t1, double t2) const;

    double min_value() const;
    double max_value() const;
    double sup_abs() const;
    bool bounded() const;
    bool covers_from(double t0) const { return starts_.front() <= t0; }
    bool is_flat() const { return values_.size() == 1; }

    const std::vector<double>& starts() const { return starts_; }
    const std::vector<double>& values() const { return values_; }

    friend bool operator==(const PiecewiseConstant&, const PiecewiseConstant&) = default;

private:
    std::vector<double> starts_;
    std::vector<double> values_;
};

// exp(-integral of rate over [t1, t2]), exact for piecewise-constant rates.
double discount(double t1, double t2, const PiecewiseConstant& rate);

// Pointwise sum on the merged bucket set.
PiecewiseConstant sum(const PiecewiseConstant& a, const PiecewiseConstant& b);

// sup over t of |a(t) - b(t)| (attained on the merged bucket set).
double sup_abs_diff(const PiecewiseConstant& a, const PiecewiseConstant& b);

} // namespace nlv
