#include "support.hpp"

#include <algorithm>
#include <cmath>

#include "osch/config.hpp"
#include "osch/hawkes.hpp"
#include "osch/stats.hpp"

using namespace osch;

namespace {

// Constant-rate variant: slope-0 sigmoids degenerate to (fmin + fmax) / 2.
Model constant_rate_model(double lambda1, double lambda2) {
    Model m = benchmark_model();
    m.f1 = {lambda1 / 2.0, 3.0 * lambda1 / 2.0, 0.0, 0.0};
    m.f2 = {lambda2 / 2.0, 3.0 * lambda2 / 2.0, 0.0, 0.0};
    return validate_model(m);
}

} // namespace

TEST_CASE("constant rates reproduce the homogeneous Poisson mean count") {
    const Model m = constant_rate_model(2.0, 1.0);
    const long N1 = 4, N2 = 7;
    const double T = 2.0;
    const int replicas = 1000;
    RunningStats count1;
    for (int r = 0; r < replicas; ++r) {
        const HawkesResult res = simulate_hawkes(m, N1, N2, T, 1000 + static_cast<std::uint64_t>(r));
        count1.add(static_cast<double>(res.events.times1.size()));
    }
    const double expected = static_cast<double>(N1) * 2.0 * T;
    const double se = std::sqrt(expected / replicas); // Poisson variance = mean
    CHECK(std::abs(count1.mean - expected) < 3.0 * se);
}

TEST_CASE("zero horizon yields an empty record and the initial state") {
    const Model m = benchmark_model();
    const HawkesResult res = simulate_hawkes(m, 1, 1, 0.0, 5);
    CHECK(res.events.times1.empty());
    CHECK(res.events.times2.empty());
    REQUIRE(res.path.states.size() == 1);
    CHECK(res.path.states.front().norm() == 0.0);
}

TEST_CASE("fixed seed reproduces the event record bit for bit") {
    const Model m = benchmark_model();
    const HawkesResult a = simulate_hawkes(m, 3, 5, 8.0, 42);
    const HawkesResult b = simulate_hawkes(m, 3, 5, 8.0, 42);
    REQUIRE(a.events.times1.size() == b.events.times1.size());
    REQUIRE(a.events.times2.size() == b.events.times2.size());
    for (std::size_t i = 0; i < a.events.times1.size(); ++i) {
        CHECK(a.events.times1[i] == b.events.times1[i]);
    }
    for (std::size_t i = 0; i < a.events.times2.size(); ++i) {
        CHECK(a.events.times2[i] == b.events.times2[i]);
    }
}

TEST_CASE("no events means a zero cascade state") {
    const Model m = benchmark_model();
    EventRecord ev;
    ev.n_units1 = 2;
    ev.n_units2 = 3;
    ev.horizon = 5.0;
    CHECK(cascade_from_events(m, ev, 3.0).norm() == 0.0);
    CHECK_THROWS_AS(cascade_from_events(m, ev, 6.0), std::invalid_argument);
}

TEST_CASE("single population-2 jump reproduces the one-term kernel sum") {
    Model m = benchmark_model();
    m.k12.n = 0; // n1 = 0: coordinate 0 is directly driven
    m.k12.nu = 1.3;
    m = validate_model(m);
    EventRecord ev;
    ev.n_units1 = 2;
    ev.n_units2 = 4;
    ev.horizon = 10.0;
    const double s = 1.7;
    ev.times2 = {s};
    const double t = 4.2;
    const State x = cascade_from_events(m, ev, t);
    const double expected = (m.c1() / 4.0) * std::exp(-1.3 * (t - s));
    CHECK(x[0] == Approx(expected).epsilon(1e-14));
    for (int i = 1; i < m.dim(); ++i) CHECK(x[i] == 0.0);
}

TEST_CASE("cascade path agrees with the direct convolution on the full grid") {
    const Model m = benchmark_model();
    const HawkesResult res = simulate_hawkes(m, 5, 5, 10.0, 7);
    double sup = 0.0;
    for (std::size_t k = 0; k < res.path.states.size(); ++k) {
        const State oracle = cascade_from_events(m, res.events, res.path.time(k));
        sup = std::max(sup, (res.path.states[k] - oracle).lpNorm<Eigen::Infinity>());
    }
    CHECK(sup < 1e-8);
}

TEST_CASE("the convolution oracle honors a nonzero initial state") {
    const Model m = benchmark_model();
    State x0(4);
    x0 << 0.3, -0.2, 0.5, 0.1;
    HawkesOptions opts;
    opts.x0 = x0;
    const HawkesResult res = simulate_hawkes(m, 3, 3, 6.0, 11, opts);
    double sup = 0.0;
    for (std::size_t k = 0; k < res.path.states.size(); ++k) {
        const State oracle = cascade_from_events(m, res.events, res.path.time(k), x0);
        sup = std::max(sup, (res.path.states[k] - oracle).lpNorm<Eigen::Infinity>());
    }
    CHECK(sup < 1e-8);
}

TEST_CASE("jumps hit exactly one coordinate with size c/N") {
    const Model m = benchmark_model();
    const long N1 = 2, N2 = 2;
    const HawkesResult res = simulate_hawkes(m, N1, N2, 5.0, 13);
    REQUIRE(!res.events.times2.empty());
    const double eps = 1e-9;
    for (double s : res.events.times2) {
        if (s < eps) continue;
        State before = cascade_from_events(m, res.events, s - eps);
        cascade_flow(m, before, eps);
        const State after = cascade_from_events(m, res.events, s);
        const State jump = after - before;
        CHECK(jump[m.noisy1()] == Approx(m.c1() / static_cast<double>(N2)).margin(1e-7));
        for (int i = 0; i < m.dim(); ++i) {
            if (i != m.noisy1()) CHECK(std::abs(jump[i]) < 1e-7);
        }
    }
}

TEST_CASE("aggregate inter-event times pass a KS test against the exponential law") {
    const Model m = constant_rate_model(2.0, 1.0);
    const long N1 = 3, N2 = 5;
    const double total_rate = 3.0 * 2.0 + 5.0 * 1.0;
    const std::size_t wanted = 10000;

    std::vector<double> gaps;
    std::uint64_t seed = 900;
    while (gaps.size() < wanted) {
        const HawkesResult res = simulate_hawkes(m, N1, N2, 200.0, seed++);
        std::vector<double> merged;
        merged.reserve(res.events.times1.size() + res.events.times2.size());
        merged.insert(merged.end(), res.events.times1.begin(), res.events.times1.end());
        merged.insert(merged.end(), res.events.times2.begin(), res.events.times2.end());
        std::sort(merged.begin(), merged.end());
        for (std::size_t i = 1; i < merged.size() && gaps.size() < wanted; ++i) {
            gaps.push_back(merged[i] - merged[i - 1]);
        }
    }
    const double d = ks_statistic(gaps, [&](double t) { return 1.0 - std::exp(-total_rate * t); });
    CHECK(d < ks_critical(0.01, wanted));
}
