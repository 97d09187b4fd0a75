#pragma once

// Shared fixtures and oracles for the test suite.

#include <catch2/catch.hpp>

#include "osch/config.hpp"
#include "osch/limit.hpp"
#include "osch/rng.hpp"

namespace osch::test {

inline const Model& benchmark() {
    static const Model m = benchmark_model();
    return m;
}

inline const LimitSet& benchmark_limitset() {
    static const LimitSet ls = [] {
        const Model& m = benchmark();
        return find_limit_cycles(m, default_trial_points(m, find_equilibrium(m)));
    }();
    return ls;
}

/// Simpson quadrature on [a, b].
template <typename F>
double simpson(F f, double a, double b, int panels) {
    const double h = (b - a) / (2.0 * panels);
    double acc = f(a) + f(b);
    for (int i = 1; i < 2 * panels; ++i) acc += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

} // namespace osch::test
