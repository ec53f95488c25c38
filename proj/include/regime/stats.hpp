#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace regime::stats {

inline double mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

/// Sum of squared deviations about the mean. Two passes over values shifted
/// by the first element, so a constant series gives exactly zero.
inline double sum_sq_dev(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    const double x0 = xs[0];
    double m = 0.0;
    for (double x : xs) m += x - x0;
    m /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - x0 - m) * (x - x0 - m);
    return ss;
}

/// Sample standard deviation, divisor n - 1. Zero for fewer than two values.
inline double sample_std(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    return std::sqrt(sum_sq_dev(xs) / static_cast<double>(xs.size() - 1));
}

/// Maximum-likelihood (population) variance, divisor n.
inline double population_variance(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    return sum_sq_dev(xs) / static_cast<double>(xs.size());
}

}  // namespace regime::stats
