#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "osch/common.hpp"

namespace osch {

/// Streaming mean/variance (Welford). Merging is associative, so replica
/// statistics can be reduced in any order.
struct RunningStats {
    long n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }

    void merge(const RunningStats& other) {
        if (other.n == 0) return;
        if (n == 0) { *this = other; return; }
        const double d = other.mean - mean;
        const long total = n + other.n;
        mean += d * static_cast<double>(other.n) / static_cast<double>(total);
        m2 += other.m2 + d * d * static_cast<double>(n) * static_cast<double>(other.n) /
                             static_cast<double>(total);
        n = total;
    }

    double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
    double std_error() const { return n > 0 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0; }
};

/// Ordinary least squares of y on x with the usual slope standard error.
struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double r_squared = 0.0;
    int n = 0;
    int dof() const { return n - 2; }
};

inline LinearFit ols_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw std::invalid_argument("ols_fit needs >= 2 matched points");
    }
    const std::size_t n = x.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) { mx += x[i]; my += y[i]; }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    LinearFit fit;
    fit.n = static_cast<int>(n);
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ssr = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ssr += square(y[i] - fit.intercept - fit.slope * x[i]);
    }
    fit.r_squared = syy > 0 ? 1.0 - ssr / syy : 1.0;
    if (n > 2) {
        fit.slope_se = std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
    }
    return fit;
}

/// One-sided 95% Student t quantile. Small-dof table, asymptote beyond.
inline double t_quantile_95(int dof) {
    static const double table[] = {6.3138, 2.9200, 2.3534, 2.1318, 2.0150, 1.9432,
                                   1.8946, 1.8595, 1.8331, 1.8125, 1.7959, 1.7823,
                                   1.7709, 1.7613, 1.7531, 1.7459, 1.7396, 1.7341,
                                   1.7291, 1.7247, 1.7207, 1.7171, 1.7139, 1.7109,
                                   1.7081, 1.7056, 1.7033, 1.7011, 1.6991, 1.6973};
    if (dof < 1) return std::numeric_limits<double>::infinity();
    if (dof <= 30) return table[dof - 1];
    return 1.6449;
}

/// Kolmogorov-Smirnov distance between an ordered sample and a cdf.
template <typename Cdf>
double ks_statistic(std::vector<double> sample, Cdf cdf) {
    std::sort(sample.begin(), sample.end());
    const std::size_t n = sample.size();
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double F = cdf(sample[i]);
        const double lo = static_cast<double>(i) / static_cast<double>(n);
        const double hi = static_cast<double>(i + 1) / static_cast<double>(n);
        d = std::max(d, std::max(F - lo, hi - F));
    }
    return d;
}

/// Asymptotic KS critical value; c(0.01) = 1.6276.
inline double ks_critical(double alpha, std::size_t n) {
    double c = alpha <= 0.01 ? 1.6276 : (alpha <= 0.05 ? 1.3581 : 1.2238);
    return c / std::sqrt(static_cast<double>(n));
}

} // namespace osch
