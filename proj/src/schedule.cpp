#include "nlv/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace nlv {

PiecewiseConstant::PiecewiseConstant(std::vector<double> starts, std::vector<double> values)
    : starts_(std::move(starts)), values_(std::move(values)) {
    if (starts_.empty() || starts_.size() != values_.size())
        throw std::invalid_argument("schedule: starts and values must be non-empty and equal-sized");
    if (!std::is_sorted(starts_.begin(), starts_.end()) ||
        std::adjacent_find(starts_.begin(), starts_.end()) != starts_.end())
        throw std::invalid_argument("schedule: bucket starts must be strictly increasing");
    for (double s : starts_)
        if (!std::isfinite(s)) throw std::invalid_argument("schedule: non-finite bucket start");
}

double PiecewiseConstant::operator()(double t) const {
    // last bucket with start <= t; clamp to the first value before the front
    auto it = std::upper_bound(starts_.begin(), starts_.end(), t);
    if (it == starts_.begin()) return values_.front();
    return values_[static_cast<std::size_t>(it - starts_.begin()) - 1];
}

double PiecewiseConstant::integral(double t1, double t2) const {
    if (t1 > t2) throw std::invalid_argument("schedule: integral interval has t1 > t2");
    double acc = 0.0;
    for (std::size_t i = 0; i < starts_.size(); ++i) {
        const double lo = (i == 0) ? -std::numeric_limits<double>::infinity() : starts_[i];
        const double hi =
            (i + 1 < starts_.size()) ? starts_[i + 1] : std::numeric_limits<double>::infinity();
        const double a = std::max(t1, lo);
        const double b = std::min(t2, hi);
        if (b > a) acc += values_[i] * (b - a);
    }
    return acc;
}

double PiecewiseConstant::min_value() const {
    return *std::min_element(values_.begin(), values_.end());
}

double PiecewiseConstant::max_value() const {
    return *std::max_element(values_.begin(), values_.end());
}

double PiecewiseConstant::sup_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
}

bool PiecewiseConstant::bounded() const {
    return std::all_of(values_.begin(), values_.end(),
                       [](double v) { return std::isfinite(v); });
}

double discount(double t1, double t2, const PiecewiseConstant& rate) {
    return std::exp(-rate.integral(t1, t2));
}

namespace {

std::vector<double> merged_starts(const PiecewiseConstant& a, const PiecewiseConstant& b) {
    std::set<double> s(a.starts().begin(), a.starts().end());
    s.insert(b.starts().begin(), b.starts().end());
    return {s.begin(), s.end()};
}

} // namespace

PiecewiseConstant sum(const PiecewiseConstant& a, const PiecewiseConstant& b) {
    auto starts = merged_starts(a, b);
    std::vector<double> values;
    values.reserve(starts.size());
    for (double t : starts) values.push_back(a(t) + b(t));
    return {std::move(starts), std::move(values)};
}

double sup_abs_diff(const PiecewiseConstant& a, const PiecewiseConstant& b) {
    double m = 0.0;
    for (double t : merged_starts(a, b)) m = std::max(m, std::abs(a(t) - b(t)));
    return m;
}

} // namespace nlv
